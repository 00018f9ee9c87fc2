import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_loop
from loopdiff.diffusion import DiffusionConfig, init_inference, softmax_state
from loopdiff.errors import (
    BoxTooSmall, ConflictingPrior, EmptySelection, ParseError,
    UnsatisfiablePrior, VersionMismatch,
)
from loopdiff.priors import (
    SOFT, VocabularyPrior, apply_prior, compose, enforce_hard, prior_from_doc,
    prior_from_loop, prior_infill_box, prior_instrumentation, prior_regenerate,
    prior_rhythm, prior_to_doc, prior_tonality, prior_uninformative,
    select_slots_by_instrument, validate_prior,
)
from loopdiff.rng import RngHub
from loopdiff.vocab import (
    MELODIC_PITCHES, NUM_ATTRIBUTES, AttributeKind, build_vocabulary,
)


def _state(vocab, n=8, seed=0):
    return init_inference(DiffusionConfig(), vocab, RngHub(seed).stream("s"), n)


def test_apply_prior_renormalizes(vocab):
    # closed-form check on one row: [0.2,0.8] x [1,0.5] -> [1/3, 2/3]
    state = _state(vocab, n=1)
    parts = state.copy_parts()
    row = np.zeros(vocab.sizes[0])
    row[0], row[1] = 0.2, 0.8
    parts[0][0] = row
    weights = np.zeros(vocab.sizes[0])
    weights[0], weights[1] = 1.0, 0.5
    prior = prior_uninformative(1, vocab)
    rows = [r.copy() for r in prior.rows]
    rows[0][0] = weights
    out = apply_prior(type(state)(parts),
                      VocabularyPrior(tuple(rows), task="t"))
    assert out.parts[0][0][0] == pytest.approx(1 / 3)
    assert out.parts[0][0][1] == pytest.approx(2 / 3)
    assert out.parts[0][0][2:].sum() == 0.0


def test_apply_prior_uninformative_is_identity(vocab):
    state = _state(vocab)
    out = apply_prior(state, prior_uninformative(8, vocab))
    for a in range(NUM_ATTRIBUTES):
        assert np.allclose(out.parts[a], state.parts[a])


def test_enforce_hard_zeroes_and_pins(vocab):
    state = _state(vocab, n=3)
    prior = prior_uninformative(3, vocab)
    rows = [r.copy() for r in prior.rows]
    # slot 0: forbid token 0; slot 1: pin token 2
    forbid = np.full(vocab.sizes[0], SOFT)
    forbid[0] = 0.0
    rows[0][0] = forbid
    pin = np.zeros(vocab.sizes[0])
    pin[2] = 1.0
    rows[0][1] = pin
    out = enforce_hard(state, VocabularyPrior(tuple(rows), task="t"))
    assert out.parts[0][0][0] == 0.0
    assert out.parts[0][0].sum() == pytest.approx(1.0)
    assert out.parts[0][1][2] == 1.0
    assert out.parts[0][1].sum() == 1.0
    # slot 2 untouched
    assert np.allclose(out.parts[0][2], state.parts[0][2])


def test_enforce_hard_all_ones_row_is_uninformative(vocab):
    state = _state(vocab)
    out = enforce_hard(state, prior_uninformative(8, vocab))
    for a in range(NUM_ATTRIBUTES):
        assert np.allclose(out.parts[a], state.parts[a])


def test_enforce_hard_rejects_two_ones(vocab):
    prior = prior_uninformative(2, vocab)
    rows = [r.copy() for r in prior.rows]
    bad = np.zeros(vocab.sizes[3])
    bad[1] = bad[2] = 1.0
    rows[3][0] = bad
    with pytest.raises(ConflictingPrior):
        enforce_hard(_state(vocab, n=2), VocabularyPrior(tuple(rows), task="t"))


def test_compose_is_elementwise_product(vocab):
    _, tok = make_loop(vocab, n_slots=8)
    a = prior_from_loop(tok, vocab)
    b = prior_tonality([0, 4, 7], 8, vocab)
    c = compose(a, b)
    for k in range(NUM_ATTRIBUTES):
        assert np.array_equal(c.rows[k], a.rows[k] * b.rows[k])


def test_prior_from_loop_pins_everything(vocab):
    _, tok = make_loop(vocab, n_slots=8)
    prior = prior_from_loop(tok, vocab)
    assert validate_prior(prior, vocab) == []
    for a in range(NUM_ATTRIBUTES):
        assert np.array_equal(prior.rows[a].argmax(axis=1), tok.tokens[:, a])
        assert np.all(prior.rows[a].sum(axis=1) == 1.0)


def _infill_args(vocab, **over):
    base = dict(time_range=(4, 8), pitch_range=(48, 72), min_notes=1,
                max_notes=4, vocab=vocab)
    base.update(over)
    return base


def test_infill_box_pins_outside_and_frees_inside(vocab):
    sample, tok = make_loop(vocab, n_slots=16)
    prior = prior_infill_box(tok, **_infill_args(vocab))
    assert validate_prior(prior, vocab) == []
    # the Bass note onsets at beat 4 pitch 40: outside the pitch range
    idx_outside = [i for i, ev in enumerate(sample.events)]
    for a in range(NUM_ATTRIBUTES):
        for i in range(len(sample.events)):
            # every source note lies outside the box, so all are pinned
            row = prior.rows[a][i]
            assert row.sum() == 1.0 and row.max() == 1.0


def test_infill_box_clears_in_box_notes(vocab):
    sample, tok = make_loop(vocab, n_slots=16)
    # box over the Piano note (beat 0, pitch 60)
    prior = prior_infill_box(tok, **_infill_args(
        vocab, time_range=(0, 2), pitch_range=(55, 65), min_notes=1,
        max_notes=2))
    pitch_rows = prior.rows[AttributeKind.PITCH]
    box_pitches = set(range(55, 66))
    must = pitch_rows[np.nonzero(pitch_rows.sum(axis=1) > 1)[0]]
    assert len(must) >= 1
    for row in must:
        sup = set(np.nonzero(row)[0].tolist())
        assert sup <= box_pitches | {vocab.undefined[AttributeKind.PITCH]}


def test_infill_box_min_notes_have_no_undefined_escape(vocab):
    _, tok = make_loop(vocab, n_slots=16)
    prior = prior_infill_box(tok, **_infill_args(vocab, min_notes=2,
                                                 max_notes=5))
    und_i = vocab.undefined[AttributeKind.INSTRUMENT]
    counts = {"pinned": 0, "must": 0, "may": 0, "rest": 0}
    for i in range(16):
        row = prior.rows[AttributeKind.INSTRUMENT][i]
        support = np.nonzero(row)[0]
        if support.size == 1:
            counts["rest" if support[0] == und_i else "pinned"] += 1
        else:
            counts["may" if row[und_i] > 0 else "must"] += 1
    # 6 source notes outside the box are pinned, 10 slots are free:
    # 2 must hold notes, 3 may, 5 are forced inactive
    assert counts == {"pinned": 6, "must": 2, "may": 3, "rest": 5}


def test_infill_box_rejects_empty_box(vocab):
    _, tok = make_loop(vocab, n_slots=16)
    with pytest.raises(BoxTooSmall):
        prior_infill_box(tok, **_infill_args(vocab, time_range=(8, 8)))
    with pytest.raises(ValueError):
        prior_infill_box(tok, **_infill_args(vocab,
                                             pitch_range=(120, 130)))
    with pytest.raises(ValueError):
        prior_infill_box(tok, **_infill_args(vocab, min_notes=12,
                                             max_notes=20))


def test_infill_box_pin_tempo_tag_toggle(vocab):
    _, tok = make_loop(vocab, n_slots=16)
    pinned = prior_infill_box(tok, **_infill_args(vocab))
    free = prior_infill_box(tok, **_infill_args(vocab, pin_tempo_tag=False))
    must_slot = 6   # first free slot after the 6 pinned notes
    assert pinned.rows[AttributeKind.TEMPO][must_slot].sum() == 1.0
    assert free.rows[AttributeKind.TEMPO][must_slot].sum() > 1.0


def test_instrumentation_prior_supports(vocab):
    prior = prior_instrumentation(["Drums", "Bass"], 8, vocab)
    assert validate_prior(prior, vocab) == []
    sub_i = vocab.sub(AttributeKind.INSTRUMENT)
    row = prior.rows[AttributeKind.INSTRUMENT][0]
    allowed = set(np.nonzero(row)[0].tolist())
    assert allowed == {sub_i.index("Bass"), sub_i.index("Drums"),
                       vocab.undefined[AttributeKind.INSTRUMENT]}
    # drum pitches and melodic pitches both stay available
    pitch_row = prior.rows[AttributeKind.PITCH][0]
    assert pitch_row[vocab.drum_pitch_index(36)] > 0
    assert pitch_row[60] > 0


def test_instrumentation_drums_only_blocks_melodic_offsets(vocab):
    prior = prior_instrumentation(["Drums"], 4, vocab)
    ob = prior.rows[AttributeKind.OFFSET_BEAT][0]
    sup = set(np.nonzero(ob)[0].tolist())
    assert sup == {vocab.drum_offset_beat,
                   vocab.undefined[AttributeKind.OFFSET_BEAT]}
    pitch_row = prior.rows[AttributeKind.PITCH][0]
    assert pitch_row[60] == 0.0
    assert pitch_row[vocab.drum_pitch_index(38)] > 0


def test_instrumentation_rejects_unknown(vocab):
    with pytest.raises(ValueError):
        prior_instrumentation(["Kazoo"], 4, vocab)
    with pytest.raises(ValueError):
        prior_instrumentation([], 4, vocab)


def test_tonality_c_major_support_count(vocab):
    prior = prior_tonality([0, 2, 4, 5, 7, 9, 11], 4, vocab)
    assert validate_prior(prior, vocab) == []
    row = prior.rows[AttributeKind.PITCH][0]
    melodic = np.nonzero(row[:MELODIC_PITCHES])[0]
    # 7 of 12 classes over pitches 0..126
    expected = sum(1 for p in range(MELODIC_PITCHES)
                   if p % 12 in {0, 2, 4, 5, 7, 9, 11})
    assert melodic.size == expected == 74
    assert all(p % 12 in {0, 2, 4, 5, 7, 9, 11} for p in melodic)
    # drum pitches unaffected
    assert (row[MELODIC_PITCHES:-1] > 0).all()


def test_tonality_rejects_bad_classes(vocab):
    with pytest.raises(ValueError):
        prior_tonality([], 4, vocab)
    with pytest.raises(ValueError):
        prior_tonality([12], 4, vocab)


def test_rhythm_prior_is_cross_product(vocab):
    prior = prior_rhythm([(0, 0), (4, 12)], 8, vocab)
    assert validate_prior(prior, vocab) == []
    beats = set(np.nonzero(prior.rows[AttributeKind.ONSET_BEAT][0])[0])
    ticks = set(np.nonzero(prior.rows[AttributeKind.ONSET_TICK][0])[0])
    assert beats == {0, 4, vocab.undefined[AttributeKind.ONSET_BEAT]}
    assert ticks == {0, 12, vocab.undefined[AttributeKind.ONSET_TICK]}


def test_rhythm_rejects_off_grid(vocab):
    with pytest.raises(ValueError):
        prior_rhythm([(16, 0)], 4, vocab)
    with pytest.raises(ValueError):
        prior_rhythm([], 4, vocab)


def test_regenerate_frees_selected_attribute(vocab):
    _, tok = make_loop(vocab, n_slots=8)
    slots = select_slots_by_instrument(tok, ["Bass"], vocab)
    assert len(slots) == 1
    prior = prior_regenerate(tok, ["pitch"], slots, vocab)
    assert validate_prior(prior, vocab) == []
    row = prior.rows[AttributeKind.PITCH][slots[0]]
    assert (row == 1.0).all()
    # everything else stays pinned
    other = [i for i in range(8) if i not in slots]
    assert np.all(prior.rows[AttributeKind.PITCH][other].sum(axis=1) == 1.0)
    assert np.all(prior.rows[AttributeKind.VELOCITY][slots].sum(axis=1) == 1.0)


def test_regenerate_rejects_empty_selection(vocab):
    _, tok = make_loop(vocab, n_slots=8)
    with pytest.raises(EmptySelection):
        prior_regenerate(tok, ["pitch"], [], vocab)
    with pytest.raises(ValueError):
        prior_regenerate(tok, ["pitch"], [99], vocab)


def test_select_slots_by_instrument(vocab):
    sample, tok = make_loop(vocab, n_slots=16)
    drums = select_slots_by_instrument(tok, ["Drums"], vocab)
    assert len(drums) == 3
    piano = select_slots_by_instrument(tok, ["Piano"], vocab)
    assert len(piano) == 1


def test_validate_flags_all_zero_and_conflicts(vocab):
    prior = prior_uninformative(3, vocab)
    rows = [r.copy() for r in prior.rows]
    rows[2][1] = 0.0
    two = np.zeros(vocab.sizes[4])
    two[0] = two[1] = 1.0
    rows[4][2] = two
    issues = validate_prior(VocabularyPrior(tuple(rows), task="t"), vocab)
    assert any("AllZeroRow" in s and "slot 1" in s for s in issues)
    assert any("ConflictingHardOnes" in s and "slot 2" in s for s in issues)


def test_doc_round_trip_point_support_weights(vocab):
    _, tok = make_loop(vocab, n_slots=8)
    box = prior_infill_box(tok, **_infill_args(vocab, time_range=(0, 4),
                                               pitch_range=(50, 70),
                                               min_notes=1, max_notes=2))
    arbitrary = [r.copy() for r in box.rows]
    arbitrary[0][7] = np.linspace(0.1, 0.9, vocab.sizes[0])
    prior = VocabularyPrior(tuple(arbitrary), task="infillBox")
    doc = prior_to_doc(prior, vocab)
    back = prior_from_doc(doc, vocab)
    for a in range(NUM_ATTRIBUTES):
        assert np.allclose(back.rows[a], prior.rows[a])
    assert back.task == "infillBox"


def test_doc_omits_uninformative_rows(vocab):
    doc = prior_to_doc(prior_uninformative(64, vocab), vocab)
    assert doc["rows"] == []
    assert doc["n_slots"] == 64


def test_doc_rejects_version_mismatch(vocab):
    doc = prior_to_doc(prior_uninformative(4, vocab), vocab)
    doc["vocab_version"] = "1:00000000"
    with pytest.raises(VersionMismatch):
        prior_from_doc(doc, vocab)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="nope"),
    lambda d: d["rows"].append({"slot": 0, "attribute": "sparkle",
                                "point": 1}),
    lambda d: d["rows"].append({"slot": 99, "attribute": "pitch",
                                "point": 1}),
    lambda d: d["rows"].append({"slot": 0, "attribute": "pitch",
                                "point": 999}),
    lambda d: d["rows"].append({"slot": 0, "attribute": "pitch"}),
    lambda d: d["rows"].append({"slot": 0, "attribute": "pitch",
                                "weights": [2.0]}),
])
def test_doc_rejects_malformed_entries(vocab, mutate):
    doc = prior_to_doc(prior_uninformative(4, vocab), vocab)
    mutate(doc)
    with pytest.raises(ParseError):
        prior_from_doc(doc, vocab)


def test_sampled_tokens_respect_hard_support(vocab):
    # property: after enforce_hard, zero-weight tokens carry zero mass
    prior = prior_instrumentation(["Piano"], 8, vocab)
    state = _state(vocab, n=8, seed=5)
    out = enforce_hard(state, prior)
    for a in range(NUM_ATTRIBUTES):
        dead = prior.rows[a] == 0.0
        assert (out.parts[a][dead] == 0.0).all()
        assert np.allclose(out.parts[a].sum(axis=1), 1.0)
