"""Vocabulary priors: per-slot, per-attribute weights on sub-vocabularies.

A prior row is a weight vector in [0,1] over one attribute's tokens.
All-ones rows are uninformative. A weight of exactly 1 in any other row
is a hard pin; a weight of 0 forbids the token. Soft support sets use a
constant interior weight (renormalization makes its value irrelevant,
but it must stay below 1 so it never reads as a pin).

apply_prior and enforce_hard operate on any per-attribute state object
exposing `.parts` and constructible from a list of arrays, so this
module stays independent of the diffusion loop that calls it.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .codec import TokenizedLoop
from .errors import (
    BoxTooSmall, ConflictingPrior, EmptySelection, ParseError,
    UnsatisfiablePrior, VersionMismatch,
)
from .vocab import (
    ATTRIBUTE_NAMES, AttributeKind, BEATS_PER_LOOP, DRUMS,
    INSTRUMENT_CLASSES, MELODIC_PITCHES, NUM_ATTRIBUTES, NUM_TEMPO_BINS,
    TICKS_PER_BEAT, Vocabulary, quantize_tempo,
)

SOFT = 0.5   # interior weight of multi-token support rows


@dataclass(frozen=True)
class VocabularyPrior:
    rows: tuple            # 9 arrays, each (N, size_a) float64 in [0,1]
    task: str = ""
    provenance: dict = field(default_factory=dict)

    @property
    def n_slots(self) -> int:
        return self.rows[0].shape[0]


def _ones(n_slots: int, vocab: Vocabulary):
    return [np.ones((n_slots, vocab.sizes[a])) for a in range(NUM_ATTRIBUTES)]


def _support_row(size: int, indices) -> np.ndarray:
    idx = sorted(set(int(i) for i in indices))
    if not idx:
        raise ValueError("empty support")
    if len(idx) == size:
        return np.ones(size)
    row = np.zeros(size)
    if len(idx) == 1:
        row[idx[0]] = 1.0
    else:
        row[idx] = SOFT
    return row


def _point_row(size: int, index: int) -> np.ndarray:
    row = np.zeros(size)
    row[int(index)] = 1.0
    return row


def apply_prior(state, prior: VocabularyPrior):
    """Elementwise product with renormalization (the soft safeguard)."""
    parts = []
    dead = []
    for a in range(NUM_ATTRIBUTES):
        prod = state.parts[a] * prior.rows[a]
        mass = prod.sum(axis=1, keepdims=True)
        zero = mass[:, 0] <= 0.0
        if zero.any():
            dead.extend((int(i), a) for i in np.nonzero(zero)[0])
            mass = np.where(mass > 0.0, mass, 1.0)
        parts.append(prod / mass)
    if dead:
        raise UnsatisfiablePrior(sorted(dead))
    return type(state)(parts)


def enforce_hard(state, prior: VocabularyPrior):
    """Zero out prior-0 tokens; collapse rows with a hard 1 to point mass.

    All-ones rows are uninformative and left alone; any other row with
    two or more exact ones is contradictory.
    """
    parts = []
    for a in range(NUM_ATTRIBUTES):
        w = prior.rows[a]
        p = state.parts[a].copy()
        uninformative = (w == 1.0).all(axis=1)
        ones = (w == 1.0).sum(axis=1)
        conflict = (~uninformative) & (ones >= 2)
        if conflict.any():
            slot = int(np.nonzero(conflict)[0][0])
            raise ConflictingPrior(
                f"two hard ones in slot {slot}, attribute {ATTRIBUTE_NAMES[a]}")
        pin = (~uninformative) & (ones == 1)
        p[w == 0.0] = 0.0
        if pin.any():
            rows = np.nonzero(pin)[0]
            p[rows] = 0.0
            p[rows, w[rows].argmax(axis=1)] = 1.0
        mass = p.sum(axis=1, keepdims=True)
        zero = mass[:, 0] <= 0.0
        if zero.any():
            raise UnsatisfiablePrior([(int(i), a) for i in np.nonzero(zero)[0]])
        parts.append(p / mass)
    return type(state)(parts)


def compose(a: VocabularyPrior, b: VocabularyPrior) -> VocabularyPrior:
    """Elementwise product; equivalent to applying both priors in turn."""
    return VocabularyPrior(tuple(x * y for x, y in zip(a.rows, b.rows)),
                           task=a.task or b.task)


def prior_uninformative(n_slots: int, vocab: Vocabulary) -> VocabularyPrior:
    return VocabularyPrior(tuple(_ones(n_slots, vocab)), task="unconditional")


def prior_from_loop(loop: TokenizedLoop, vocab: Vocabulary) -> VocabularyPrior:
    """Point mass on every token, inactive slots pinned to undefined."""
    rows = []
    n = loop.n_slots
    for a in range(NUM_ATTRIBUTES):
        arr = np.zeros((n, vocab.sizes[a]))
        arr[np.arange(n), loop.tokens[:, a]] = 1.0
        rows.append(arr)
    return VocabularyPrior(tuple(rows), task="fullyDetermined")


def _majority(values: np.ndarray, default: int) -> int:
    if values.size == 0:
        return default
    counts = np.bincount(values)
    return int(counts.argmax())     # argmax takes the lowest index on ties


def _loop_tempo_tag(loop: TokenizedLoop, vocab: Vocabulary):
    active = loop.active_mask(vocab)
    tempo = _majority(loop.tokens[active, AttributeKind.TEMPO].astype(np.int64),
                      quantize_tempo(120.0))
    tag = _majority(loop.tokens[active, AttributeKind.TAG].astype(np.int64),
                    vocab.sub(AttributeKind.TAG).index("other"))
    return tempo, tag


def prior_infill_box(loop: TokenizedLoop, time_range, pitch_range,
                     min_notes: int, max_notes: int, vocab: Vocabulary,
                     pin_tempo_tag: bool = True) -> VocabularyPrior:
    """Erase a melodic time/pitch box and demand min..max new notes in it.

    time_range is half-open in whole beats, pitch_range inclusive in
    melodic pitches. Slots holding notes outside the box are pinned
    verbatim; drums never live in a box.
    """
    b0, b1 = int(time_range[0]), int(time_range[1])
    p0, p1 = int(pitch_range[0]), int(pitch_range[1])
    if not (0 <= b0 < b1 <= BEATS_PER_LOOP) or p1 < p0:
        raise BoxTooSmall(f"box beats [{b0},{b1}) pitches [{p0},{p1}] is empty")
    if not (0 <= p0 and p1 < MELODIC_PITCHES):
        raise ValueError(f"pitch range [{p0},{p1}] outside 0..{MELODIC_PITCHES - 1}")
    n = loop.n_slots
    active = loop.active_mask(vocab)
    toks = loop.tokens
    melodic = toks[:, AttributeKind.PITCH] < MELODIC_PITCHES
    onset = (toks[:, AttributeKind.ONSET_BEAT] >= b0) & \
            (toks[:, AttributeKind.ONSET_BEAT] < b1)
    pitch = (toks[:, AttributeKind.PITCH] >= p0) & \
            (toks[:, AttributeKind.PITCH] <= p1)
    in_box = active & melodic & onset & pitch
    free = np.nonzero(~active | in_box)[0]
    if not 0 <= min_notes <= max_notes <= free.size:
        raise ValueError(f"need 0 <= {min_notes} <= {max_notes} <= "
                         f"{free.size} free slots")

    rows = [np.zeros((n, vocab.sizes[a])) for a in range(NUM_ATTRIBUTES)]
    pinned = np.nonzero(active & ~in_box)[0]
    for a in range(NUM_ATTRIBUTES):
        rows[a][pinned, toks[pinned, a]] = 1.0

    tempo_bin, tag_idx = _loop_tempo_tag(loop, vocab)
    und = vocab.undefined
    beats = range(b0, b1)
    ticks = range(TICKS_PER_BEAT)
    box_support = {
        # melodic classes only; a drum note has no pitch to fall in a box
        AttributeKind.INSTRUMENT: range(len(INSTRUMENT_CLASSES)),
        AttributeKind.PITCH: range(p0, p1 + 1),
        AttributeKind.ONSET_BEAT: beats,
        AttributeKind.ONSET_TICK: ticks,
        AttributeKind.OFFSET_BEAT: beats,
        AttributeKind.OFFSET_TICK: ticks,
        AttributeKind.VELOCITY: range(vocab.sizes[AttributeKind.VELOCITY] - 1),
        AttributeKind.TEMPO: [tempo_bin] if pin_tempo_tag
                             else range(NUM_TEMPO_BINS),
        AttributeKind.TAG: [tag_idx] if pin_tempo_tag
                           else range(vocab.sizes[AttributeKind.TAG] - 1),
    }
    must = free[:min_notes]
    may = free[min_notes:max_notes]
    rest = free[max_notes:]
    for a in range(NUM_ATTRIBUTES):
        size = vocab.sizes[a]
        rows[a][must] = _support_row(size, box_support[a])
        rows[a][may] = _support_row(size, list(box_support[a]) + [und[a]])
        rows[a][rest] = _point_row(size, und[a])
    return VocabularyPrior(tuple(rows), task="infillBox",
                           provenance={"time_range": [b0, b1],
                                       "pitch_range": [p0, p1],
                                       "min_notes": min_notes,
                                       "max_notes": max_notes})


def prior_instrumentation(instruments, n_slots: int,
                          vocab: Vocabulary) -> VocabularyPrior:
    """Restrict active notes to the given classes, drums kept consistent."""
    names = sorted(set(instruments))
    if not names:
        raise ValueError("instrument set is empty")
    sub_i = vocab.sub(AttributeKind.INSTRUMENT)
    for name in names:
        if name not in INSTRUMENT_CLASSES and name != DRUMS:
            raise ValueError(f"unknown instrument class {name!r}")
    rows = _ones(n_slots, vocab)
    und = vocab.undefined
    inst = [sub_i.index(x) for x in names] + [und[AttributeKind.INSTRUMENT]]
    rows[AttributeKind.INSTRUMENT][:] = _support_row(
        vocab.sizes[AttributeKind.INSTRUMENT], inst)

    drums = DRUMS in names
    melodic = any(x != DRUMS for x in names)
    pitch = []
    if melodic:
        pitch += list(range(MELODIC_PITCHES))
    if drums:
        pitch += list(range(MELODIC_PITCHES,
                            vocab.sizes[AttributeKind.PITCH] - 1))
    rows[AttributeKind.PITCH][:] = _support_row(
        vocab.sizes[AttributeKind.PITCH], pitch + [und[AttributeKind.PITCH]])
    for attr, marker in ((AttributeKind.OFFSET_BEAT, vocab.drum_offset_beat),
                         (AttributeKind.OFFSET_TICK, vocab.drum_offset_tick)):
        size = vocab.sizes[attr]
        real = [i for i in range(size) if i != marker and i != und[attr]]
        sup = (real if melodic else []) + ([marker] if drums else [])
        rows[attr][:] = _support_row(size, sup + [und[attr]])
    return VocabularyPrior(tuple(rows), task="instrumentation",
                           provenance={"instruments": names})


def prior_tonality(pitch_classes, n_slots: int,
                   vocab: Vocabulary) -> VocabularyPrior:
    """Keep melodic pitches whose class is allowed; drums untouched."""
    classes = sorted(set(int(c) for c in pitch_classes))
    if not classes:
        raise ValueError("pitch-class set is empty")
    if classes[0] < 0 or classes[-1] > 11:
        raise ValueError("pitch classes must lie in 0..11")
    allowed = set(classes)
    size = vocab.sizes[AttributeKind.PITCH]
    sup = [p for p in range(MELODIC_PITCHES) if p % 12 in allowed]
    sup += list(range(MELODIC_PITCHES, size - 1))      # drum pitches kept
    sup.append(vocab.undefined[AttributeKind.PITCH])
    rows = _ones(n_slots, vocab)
    rows[AttributeKind.PITCH][:] = _support_row(size, sup)
    return VocabularyPrior(tuple(rows), task="tonality",
                           provenance={"pitch_classes": classes})


def prior_rhythm(allowed_onsets, n_slots: int,
                 vocab: Vocabulary) -> VocabularyPrior:
    """Restrict onset beats and ticks to those present in the set.

    Factored rows admit the full beat x tick cross product of the set.
    """
    pairs = sorted(set((int(b), int(t)) for b, t in allowed_onsets))
    if not pairs:
        raise ValueError("onset set is empty")
    for b, t in pairs:
        if not (0 <= b < BEATS_PER_LOOP and 0 <= t < TICKS_PER_BEAT):
            raise ValueError(f"onset ({b},{t}) outside the grid")
    und = vocab.undefined
    beats = sorted({b for b, _ in pairs}) + [und[AttributeKind.ONSET_BEAT]]
    ticks = sorted({t for _, t in pairs}) + [und[AttributeKind.ONSET_TICK]]
    rows = _ones(n_slots, vocab)
    rows[AttributeKind.ONSET_BEAT][:] = _support_row(
        vocab.sizes[AttributeKind.ONSET_BEAT], beats)
    rows[AttributeKind.ONSET_TICK][:] = _support_row(
        vocab.sizes[AttributeKind.ONSET_TICK], ticks)
    return VocabularyPrior(tuple(rows), task="rhythm",
                           provenance={"onsets": [list(p) for p in pairs]})


def _as_attribute(a) -> AttributeKind:
    if isinstance(a, str):
        return AttributeKind(ATTRIBUTE_NAMES.index(a))
    return AttributeKind(a)


def prior_regenerate(loop: TokenizedLoop, attributes, slot_indices,
                     vocab: Vocabulary) -> VocabularyPrior:
    """Free the chosen attributes on the chosen slots, pin the rest."""
    slots = sorted(set(int(i) for i in slot_indices))
    if not slots:
        raise EmptySelection("selector matches no slot")
    if slots[0] < 0 or slots[-1] >= loop.n_slots:
        raise ValueError("slot index outside the loop")
    attrs = sorted({_as_attribute(a) for a in attributes})
    base = prior_from_loop(loop, vocab)
    rows = [r.copy() for r in base.rows]
    for a in attrs:
        rows[a][slots] = 1.0
    return VocabularyPrior(tuple(rows), task="regenerateAttributes",
                           provenance={"attributes": [int(a) for a in attrs],
                                       "slots": slots})


def select_slots_by_instrument(loop: TokenizedLoop, instruments,
                               vocab: Vocabulary):
    """Slot indices whose active note plays one of the named classes."""
    sub_i = vocab.sub(AttributeKind.INSTRUMENT)
    wanted = {sub_i.index(name) for name in instruments}
    active = loop.active_mask(vocab)
    hit = np.isin(loop.tokens[:, AttributeKind.INSTRUMENT], list(wanted))
    return [int(i) for i in np.nonzero(active & hit)[0]]


def validate_prior(prior: VocabularyPrior, vocab: Vocabulary):
    """Collect problems without raising; empty list means ok."""
    issues = []
    if len(prior.rows) != NUM_ATTRIBUTES:
        return [f"expected {NUM_ATTRIBUTES} attribute blocks, "
                f"got {len(prior.rows)}"]
    n = prior.rows[0].shape[0]
    for a in range(NUM_ATTRIBUTES):
        w = prior.rows[a]
        name = ATTRIBUTE_NAMES[a]
        if w.shape != (n, vocab.sizes[a]):
            issues.append(f"{name}: shape {w.shape} != ({n}, {vocab.sizes[a]})")
            continue
        if (w < 0).any() or (w > 1).any():
            issues.append(f"{name}: entries outside [0,1]")
        zero = ~(w > 0).any(axis=1)
        for i in np.nonzero(zero)[0]:
            issues.append(f"AllZeroRow at slot {int(i)}, attribute {name}")
        uninformative = (w == 1.0).all(axis=1)
        multi = (~uninformative) & ((w == 1.0).sum(axis=1) >= 2)
        for i in np.nonzero(multi)[0]:
            issues.append(f"ConflictingHardOnes at slot {int(i)}, "
                          f"attribute {name}")
    return issues


# On-disk form: header plus sparse row entries; all-ones rows are implied.

def prior_to_doc(prior: VocabularyPrior, vocab: Vocabulary,
                 task_spec: dict = None) -> dict:
    entries = []
    for a in range(NUM_ATTRIBUTES):
        w = prior.rows[a]
        for i in range(prior.n_slots):
            row = w[i]
            if (row == 1.0).all():
                continue
            ent = {"slot": i, "attribute": ATTRIBUTE_NAMES[a]}
            pos = np.nonzero(row)[0]
            if pos.size == 1 and row[pos[0]] == 1.0:
                ent["point"] = int(pos[0])
            elif np.all((row == 0.0) | (row == SOFT)):
                ent["support"] = [int(j) for j in pos]
            else:
                ent["weights"] = [float(x) for x in row]
            entries.append(ent)
    doc = {"format": "loopdiff-prior", "vocab_version": vocab.version,
           "n_slots": prior.n_slots, "task": prior.task, "rows": entries}
    if task_spec is not None:
        doc["task_spec"] = task_spec
    return doc


def prior_from_doc(doc: dict, vocab: Vocabulary) -> VocabularyPrior:
    if doc.get("format") != "loopdiff-prior":
        raise ParseError("not a prior document")
    if doc.get("vocab_version") != vocab.version:
        raise VersionMismatch(f"prior written for vocabulary "
                              f"{doc.get('vocab_version')}, current is "
                              f"{vocab.version}")
    n = int(doc["n_slots"])
    rows = _ones(n, vocab)
    index = {name: a for a, name in enumerate(ATTRIBUTE_NAMES)}
    for ent in doc.get("rows", []):
        a = index.get(ent.get("attribute"))
        if a is None:
            raise ParseError(f"unknown attribute {ent.get('attribute')!r}")
        i = int(ent["slot"])
        if not 0 <= i < n:
            raise ParseError(f"slot {i} outside 0..{n - 1}")
        size = vocab.sizes[a]
        if "point" in ent:
            rows[a][i] = _point_row(size, _checked_token(ent["point"], size))
        elif "support" in ent:
            rows[a][i] = _support_row(
                size, [_checked_token(j, size) for j in ent["support"]])
        elif "weights" in ent:
            w = np.asarray(ent["weights"], dtype=np.float64)
            if w.shape != (size,) or (w < 0).any() or (w > 1).any():
                raise ParseError(f"bad weights row at slot {i}")
            rows[a][i] = w
        else:
            raise ParseError(f"row entry at slot {i} has no payload")
    return VocabularyPrior(tuple(rows), task=doc.get("task", ""))


def _checked_token(j, size: int) -> int:
    j = int(j)
    if not 0 <= j < size:
        raise ParseError(f"token index {j} outside sub-vocabulary of {size}")
    return j


def save_prior(path, prior: VocabularyPrior, vocab: Vocabulary,
               task_spec: dict = None):
    with open(path, "w") as fh:
        json.dump(prior_to_doc(prior, vocab, task_spec), fh, sort_keys=True,
                  indent=1)


def load_prior(path, vocab: Vocabulary) -> VocabularyPrior:
    with open(path) as fh:
        return prior_from_doc(json.load(fh), vocab)
