"""Note events and their token encoding.

A LoopSample is the musical view (events with raw velocity, a loop tempo
in bpm and a style tag). A TokenizedLoop is the model view: N slots of 9
local token indices, inactive slots all-undefined. Encoding quantizes
velocity into width-4 bins and tempo into 16 uniform bins over
[50, 200); decoding maps bins back to their centers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedSlot, OutOfRange, TooManyEvents
from .vocab import (
    AttributeKind, BEATS_PER_LOOP, DRUM_KEY_HI, DRUM_KEY_LO, DRUMS,
    INSTRUMENT_CLASSES, MELODIC_PITCHES, NUM_ATTRIBUTES, TICKS_PER_BEAT,
    Vocabulary, dequantize_tempo, dequantize_velocity, quantize_tempo,
    quantize_velocity,
)

DEFAULT_SLOTS = 128


@dataclass(frozen=True)
class NoteEvent:
    """One active note. Drums carry the percussion key in `pitch` and no offsets."""
    instrument: str          # class name or "Drums"
    pitch: int               # 0..126 melodic, or drum key 35..81
    onset_beat: int
    onset_tick: int
    offset_beat: int | None  # None for drums
    offset_tick: int | None
    velocity: int            # raw 0..127

    @property
    def is_drum(self):
        return self.instrument == DRUMS

    def onset_time(self):
        return self.onset_beat * TICKS_PER_BEAT + self.onset_tick

    def offset_time(self):
        if self.is_drum:
            return None
        return self.offset_beat * TICKS_PER_BEAT + self.offset_tick


@dataclass
class LoopSample:
    events: list
    tempo_bpm: float
    tag: str = "other"
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TokenizedLoop:
    """N slots of local token indices, one per attribute, canonical order."""
    tokens: np.ndarray   # (N, 9) int16

    def __post_init__(self):
        arr = np.asarray(self.tokens, dtype=np.int16)
        if arr.ndim != 2 or arr.shape[1] != NUM_ATTRIBUTES:
            raise ValueError(f"tokens must be (N, {NUM_ATTRIBUTES}), got {arr.shape}")
        object.__setattr__(self, "tokens", arr)

    @property
    def n_slots(self):
        return self.tokens.shape[0]

    def __eq__(self, other):
        return isinstance(other, TokenizedLoop) and np.array_equal(self.tokens, other.tokens)

    def __hash__(self):
        return hash(self.tokens.tobytes())

    def active_mask(self, vocab: Vocabulary) -> np.ndarray:
        und = np.array(vocab.undefined, dtype=np.int16)
        return ~(self.tokens == und).all(axis=1)


def _check_range(name, value, lo, hi):
    if not lo <= value <= hi:
        raise OutOfRange(f"{name}={value} outside [{lo}, {hi}]")


def _event_token_row(ev: NoteEvent, tempo_bin: int, tag_idx: int, vocab: Vocabulary):
    sub_i = vocab.sub(AttributeKind.INSTRUMENT)
    row = np.empty(NUM_ATTRIBUTES, dtype=np.int16)
    if ev.instrument not in INSTRUMENT_CLASSES and ev.instrument != DRUMS:
        raise OutOfRange(f"unknown instrument {ev.instrument!r}")
    row[AttributeKind.INSTRUMENT] = sub_i.index(ev.instrument)
    _check_range("onset_beat", ev.onset_beat, 0, BEATS_PER_LOOP - 1)
    _check_range("onset_tick", ev.onset_tick, 0, TICKS_PER_BEAT - 1)
    row[AttributeKind.ONSET_BEAT] = ev.onset_beat
    row[AttributeKind.ONSET_TICK] = ev.onset_tick
    _check_range("velocity", ev.velocity, 0, 127)
    row[AttributeKind.VELOCITY] = quantize_velocity(ev.velocity)
    row[AttributeKind.TEMPO] = tempo_bin
    row[AttributeKind.TAG] = tag_idx
    if ev.is_drum:
        _check_range("drum key", ev.pitch, DRUM_KEY_LO, DRUM_KEY_HI)
        row[AttributeKind.PITCH] = vocab.drum_pitch_index(ev.pitch)
        row[AttributeKind.OFFSET_BEAT] = vocab.drum_offset_beat
        row[AttributeKind.OFFSET_TICK] = vocab.drum_offset_tick
    else:
        _check_range("pitch", ev.pitch, 0, MELODIC_PITCHES - 1)
        if ev.offset_beat is None or ev.offset_tick is None:
            raise OutOfRange("melodic event without offset")
        _check_range("offset_beat", ev.offset_beat, 0, BEATS_PER_LOOP - 1)
        _check_range("offset_tick", ev.offset_tick, 0, TICKS_PER_BEAT - 1)
        if ev.offset_time() <= ev.onset_time():
            raise OutOfRange(f"offset {ev.offset_time()} not after onset {ev.onset_time()}")
        row[AttributeKind.PITCH] = ev.pitch
        row[AttributeKind.OFFSET_BEAT] = ev.offset_beat
        row[AttributeKind.OFFSET_TICK] = ev.offset_tick
    return row


def encode_loop(loop: LoopSample, n_slots: int, vocab: Vocabulary) -> TokenizedLoop:
    """Encode into N slots; events beyond the active ones are all-undefined."""
    if len(loop.events) > n_slots:
        raise TooManyEvents(f"{len(loop.events)} events > {n_slots} slots")
    _check_range("tempo_bpm", loop.tempo_bpm, 50.0, 200.0)
    tempo_bin = quantize_tempo(loop.tempo_bpm)
    sub_tag = vocab.sub(AttributeKind.TAG)
    tag = loop.tag if loop.tag in sub_tag.tokens[:-1] else "other"
    tag_idx = sub_tag.index(tag)

    tokens = np.tile(np.array(vocab.undefined, dtype=np.int16), (n_slots, 1))
    rows = [_event_token_row(ev, tempo_bin, tag_idx, vocab) for ev in loop.events]
    rows.sort(key=lambda r: (
        r[AttributeKind.ONSET_BEAT] * TICKS_PER_BEAT + r[AttributeKind.ONSET_TICK],
        r[AttributeKind.INSTRUMENT], r[AttributeKind.PITCH],
        r[AttributeKind.OFFSET_BEAT], r[AttributeKind.OFFSET_TICK],
        r[AttributeKind.VELOCITY]))
    for i, r in enumerate(rows):
        tokens[i] = r
    return TokenizedLoop(tokens)


def decode_slot(row, vocab: Vocabulary) -> NoteEvent:
    """Decode one fully-defined slot; raises MalformedSlot on inconsistency."""
    undefined = [int(row[a]) == vocab.undefined[a] for a in range(NUM_ATTRIBUTES)]
    if any(undefined):
        raise MalformedSlot(f"slot mixes defined and undefined attributes: {row.tolist()}")
    inst_local = int(row[AttributeKind.INSTRUMENT])
    pitch_local = int(row[AttributeKind.PITCH])
    ob, ot = int(row[AttributeKind.OFFSET_BEAT]), int(row[AttributeKind.OFFSET_TICK])
    is_drum_inst = inst_local == vocab.drums_instrument
    is_drum_pitch = vocab.is_drum_pitch(pitch_local)
    is_drum_off = (ob == vocab.drum_offset_beat, ot == vocab.drum_offset_tick)
    if is_drum_inst != is_drum_pitch or is_drum_off[0] != is_drum_inst or is_drum_off[1] != is_drum_inst:
        raise MalformedSlot(f"inconsistent drum/melodic tokens: {row.tolist()}")
    instrument = vocab.sub(AttributeKind.INSTRUMENT).tokens[inst_local]
    onset_beat = int(row[AttributeKind.ONSET_BEAT])
    onset_tick = int(row[AttributeKind.ONSET_TICK])
    velocity = dequantize_velocity(int(row[AttributeKind.VELOCITY]))
    if is_drum_inst:
        return NoteEvent(instrument, vocab.drum_key_of(pitch_local),
                         onset_beat, onset_tick, None, None, velocity)
    ev = NoteEvent(instrument, pitch_local, onset_beat, onset_tick, ob, ot, velocity)
    if ev.offset_time() <= ev.onset_time():
        raise MalformedSlot(f"offset not after onset: {row.tolist()}")
    return ev


def decode_loop(tok: TokenizedLoop, vocab: Vocabulary) -> LoopSample:
    """Drop inactive slots and decode the rest.

    The loop tempo and tag come from a majority vote over active slots
    (ties broken by lower bin index); dataset samples are uniform anyway.
    """
    active = tok.active_mask(vocab)
    events, tempo_bins, tag_idxs = [], [], []
    for i in np.flatnonzero(active):
        ev = decode_slot(tok.tokens[i], vocab)
        events.append(ev)
        tempo_bins.append(int(tok.tokens[i, AttributeKind.TEMPO]))
        tag_idxs.append(int(tok.tokens[i, AttributeKind.TAG]))
    if not events:
        return LoopSample(events=[], tempo_bpm=dequantize_tempo(0), tag="other")

    def majority(values):
        counts = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        return min(counts, key=lambda v: (-counts[v], v))

    tempo_bpm = dequantize_tempo(majority(tempo_bins))
    tag = vocab.sub(AttributeKind.TAG).tokens[majority(tag_idxs)]
    return LoopSample(events=events, tempo_bpm=tempo_bpm, tag=tag)


def decode_loop_lenient(tok: TokenizedLoop, vocab: Vocabulary):
    """Decode what decodes; return (LoopSample, skipped slot indices).

    Sampled loops can contain inconsistent slots on attributes no prior
    constrained, and rendering should degrade rather than fail.
    """
    active = tok.active_mask(vocab)
    good = []
    skipped = []
    for i in np.flatnonzero(active):
        try:
            decode_slot(tok.tokens[i], vocab)
            good.append(i)
        except MalformedSlot:
            skipped.append(int(i))
    keep = np.ones(tok.n_slots, dtype=bool)
    keep[skipped] = False
    cleaned = TokenizedLoop(np.where(keep[:, None], tok.tokens,
                                     np.array(vocab.undefined, dtype=np.int16)))
    return decode_loop(cleaned, vocab), skipped
