"""Global token vocabulary.

A loop is a set of note-event tuples with 9 attributes. Each attribute
draws its tokens from its own sub-vocabulary; the sub-vocabularies are
disjoint slices of one global vocabulary. Every sub-vocabulary carries
exactly one "undefined" token (always the last local index); an inactive
note event has all 9 attributes set to undefined.
"""

import hashlib
import json
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources

import numpy as np


class AttributeKind(IntEnum):
    INSTRUMENT = 0
    PITCH = 1
    ONSET_BEAT = 2
    ONSET_TICK = 3
    OFFSET_BEAT = 4
    OFFSET_TICK = 5
    VELOCITY = 6
    TEMPO = 7
    TAG = 8


ATTRIBUTE_NAMES = [
    "instrument", "pitch", "onset_beat", "onset_tick",
    "offset_beat", "offset_tick", "velocity", "tempo", "tag",
]

NUM_ATTRIBUTES = 9

BEATS_PER_LOOP = 16           # 4 bars of 4/4
TICKS_PER_BEAT = 24
NUM_VELOCITY_BINS = 32
NUM_TEMPO_BINS = 16
TEMPO_LO = 50.0
TEMPO_HI = 200.0
MELODIC_PITCHES = 127         # pitches 0..126; MIDI pitch 127 is clamped to 126
DRUM_KEY_LO = 35
DRUM_KEY_HI = 81              # inclusive; 47 drum keys

UNDEFINED = "-"
DRUM_OFFSET = "(drum)"
DRUMS = "Drums"


def _load_data(name):
    with resources.files("loopdiff.data").joinpath(name).open("r") as fh:
        return json.load(fh)


_GM = _load_data("gm_classes.json")["classes"]
INSTRUMENT_CLASSES = [c["name"] for c in _GM]
TAGS = _load_data("tags.json")["tags"]

# program (0..127) -> class name, and class name -> representative program
PROGRAM_TO_CLASS = {}
CLASS_TO_PROGRAM = {}
for _c in _GM:
    lo, hi = _c["range"]
    for _p in range(lo, hi + 1):
        PROGRAM_TO_CLASS[_p] = _c["name"]
    CLASS_TO_PROGRAM[_c["name"]] = _c["program"]


@dataclass(frozen=True)
class SubVocabulary:
    kind: AttributeKind
    tokens: tuple
    undefined_index: int

    @property
    def size(self):
        return len(self.tokens)

    def index(self, token) -> int:
        return self.tokens.index(token)


def _build_subs():
    subs = []

    def add(kind, tokens):
        tokens = tuple(tokens) + (UNDEFINED,)
        subs.append(SubVocabulary(kind, tokens, len(tokens) - 1))

    add(AttributeKind.INSTRUMENT, INSTRUMENT_CLASSES + [DRUMS])
    add(AttributeKind.PITCH,
        [str(p) for p in range(MELODIC_PITCHES)]
        + [f"{k} (drums)" for k in range(DRUM_KEY_LO, DRUM_KEY_HI + 1)])
    add(AttributeKind.ONSET_BEAT, [str(b) for b in range(BEATS_PER_LOOP)])
    add(AttributeKind.ONSET_TICK, [str(t) for t in range(TICKS_PER_BEAT)])
    add(AttributeKind.OFFSET_BEAT, [str(b) for b in range(BEATS_PER_LOOP)] + [DRUM_OFFSET])
    add(AttributeKind.OFFSET_TICK, [str(t) for t in range(TICKS_PER_BEAT)] + [DRUM_OFFSET])
    add(AttributeKind.VELOCITY, [str(v) for v in range(NUM_VELOCITY_BINS)])
    add(AttributeKind.TEMPO, [str(b) for b in range(NUM_TEMPO_BINS)])
    add(AttributeKind.TAG, TAGS + ["other"])
    return tuple(subs)


class Vocabulary:
    """The 9 sub-vocabularies plus the global id bijection."""

    def __init__(self):
        self.subs = _build_subs()
        self.sizes = tuple(s.size for s in self.subs)
        self.offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))
        self.size = int(sum(self.sizes))
        fingerprint = hashlib.sha256(
            "\x1f".join(t for s in self.subs for t in s.tokens).encode()).hexdigest()[:8]
        self.version = f"1:{fingerprint}"

        # frequently used local indices
        self.drums_instrument = self.subs[AttributeKind.INSTRUMENT].index(DRUMS)
        self.drum_offset_beat = self.subs[AttributeKind.OFFSET_BEAT].index(DRUM_OFFSET)
        self.drum_offset_tick = self.subs[AttributeKind.OFFSET_TICK].index(DRUM_OFFSET)
        self.undefined = tuple(s.undefined_index for s in self.subs)

    def sub(self, kind) -> SubVocabulary:
        return self.subs[AttributeKind(kind)]

    def to_global(self, kind, local: int) -> int:
        kind = AttributeKind(kind)
        if not 0 <= local < self.sizes[kind]:
            raise IndexError(f"local index {local} out of range for {kind.name}")
        return self.offsets[kind] + local

    def from_global(self, gid: int):
        if not 0 <= gid < self.size:
            raise IndexError(f"global id {gid} out of range")
        kind = int(np.searchsorted(self.offsets, gid, side="right") - 1)
        return AttributeKind(kind), gid - self.offsets[kind]

    def drum_pitch_index(self, key: int) -> int:
        """Local pitch index of a drum key (35..81)."""
        if not DRUM_KEY_LO <= key <= DRUM_KEY_HI:
            raise IndexError(f"drum key {key} outside {DRUM_KEY_LO}..{DRUM_KEY_HI}")
        return MELODIC_PITCHES + (key - DRUM_KEY_LO)

    def is_drum_pitch(self, local: int) -> bool:
        return MELODIC_PITCHES <= local < MELODIC_PITCHES + (DRUM_KEY_HI - DRUM_KEY_LO + 1)

    def drum_key_of(self, local: int) -> int:
        return DRUM_KEY_LO + (local - MELODIC_PITCHES)


_VOCAB = None


def build_vocabulary() -> Vocabulary:
    """The fixed global vocabulary (cached; it is immutable)."""
    global _VOCAB
    if _VOCAB is None:
        _VOCAB = Vocabulary()
    return _VOCAB


def syntax_mask(kind, vocab: Vocabulary) -> np.ndarray:
    """Binary vector over the global vocabulary, 1 on `kind`'s slice."""
    kind = AttributeKind(kind)
    mask = np.zeros(vocab.size, dtype=np.uint8)
    off = vocab.offsets[kind]
    mask[off:off + vocab.sizes[kind]] = 1
    return mask


def quantize_velocity(velocity: int) -> int:
    return int(velocity) // 4


def dequantize_velocity(bin_index: int) -> int:
    return 4 * int(bin_index) + 2


def quantize_tempo(bpm: float) -> int:
    width = (TEMPO_HI - TEMPO_LO) / NUM_TEMPO_BINS
    b = int((float(bpm) - TEMPO_LO) // width)
    return min(max(b, 0), NUM_TEMPO_BINS - 1)


def dequantize_tempo(bin_index: int) -> float:
    width = (TEMPO_HI - TEMPO_LO) / NUM_TEMPO_BINS
    return TEMPO_LO + width * (int(bin_index) + 0.5)


def choose_tag(tags, key: str) -> str:
    """Pick one tag deterministically from `tags` (seeded by `key`).

    Loops annotated with several genres get one of them; unannotated
    loops get "other". Unknown tag strings are ignored.
    """
    known = [t for t in tags if t in TAGS]
    if not known:
        return "other"
    digest = hashlib.sha256(("tag:" + key).encode()).digest()
    return sorted(known)[int.from_bytes(digest[:4], "little") % len(known)]
