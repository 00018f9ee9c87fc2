import numpy as np
import pytest

from loopdiff.codec import LoopSample, NoteEvent, encode_loop
from loopdiff.vocab import (
    DRUM_KEY_HI, DRUM_KEY_LO, INSTRUMENT_CLASSES, TAGS, build_vocabulary,
    dequantize_tempo,
)


@pytest.fixture(scope="session")
def vocab():
    return build_vocabulary()


def make_loop(vocab, n_slots=32, tempo=120.0, tag="rock"):
    """Small mixed melodic/drum loop used across modules."""
    events = [
        NoteEvent("Piano", 60, 0, 0, 1, 0, 100),
        NoteEvent("Bass", 40, 4, 0, 6, 0, 90),
        NoteEvent("Guitar", 55, 8, 12, 10, 0, 70),
        NoteEvent("Drums", 36, 0, 0, None, None, 110),
        NoteEvent("Drums", 38, 4, 0, None, None, 80),
        NoteEvent("Drums", 42, 12, 18, None, None, 64),
    ]
    sample = LoopSample(events=events, tempo_bpm=tempo, tag=tag)
    return sample, encode_loop(sample, n_slots, vocab)


def toy_dataset(vocab, n_slots=32):
    """Eight loops: a drone of one repeated note plus one odd pitch.

    Loop k repeats the same event in every slot except one, whose pitch
    is 60 + 2k (loop 0 is the pure drone). A set-structured denoiser
    then faces almost no irreducible loss at high noise: the per-slot
    pitch marginal is concentrated on the drone, so even the zero-
    information prediction is cheap, while at low noise each slot is
    recoverable from its own channel. See the training acceptance check.
    """
    loops = []
    base = NoteEvent("Piano", 60, 0, 0, 1, 0, 100)
    for k in range(8):
        odd = NoteEvent("Piano", 60 + 2 * k, 0, 0, 1, 0, 100)
        events = [base] * (n_slots - 1) + [odd]
        loops.append(encode_loop(LoopSample(events, 120.0, "rock"),
                                 n_slots, vocab))
    return loops


def canonical_key(ev, vocab):
    """Event ordering oracle, written against the public vocabulary API."""
    inst = vocab.sub(0).index(ev.instrument)
    pitch = vocab.drum_pitch_index(ev.pitch) if ev.is_drum else ev.pitch
    if ev.is_drum:
        off_beat, off_tick = vocab.drum_offset_beat, vocab.drum_offset_tick
    else:
        off_beat, off_tick = ev.offset_beat, ev.offset_tick
    return (ev.onset_beat * 24 + ev.onset_tick, inst, pitch,
            off_beat, off_tick, ev.velocity // 4)


def random_quantized_loop(rng, vocab, n_slots=128):
    """A LoopSample already on the token grid, in canonical event order."""
    n_events = int(rng.integers(0, n_slots + 1))
    events = []
    for _ in range(n_events):
        if rng.random() < 0.3:
            events.append(NoteEvent(
                "Drums", int(rng.integers(DRUM_KEY_LO, DRUM_KEY_HI + 1)),
                int(rng.integers(0, 16)), int(rng.integers(0, 24)),
                None, None, int(rng.integers(0, 32)) * 4 + 2))
        else:
            onset_beat = int(rng.integers(0, 16))
            onset_tick = int(rng.integers(0, 24))
            if onset_beat == 15 and onset_tick == 23:
                onset_tick = 22          # leave room for an offset
            onset = onset_beat * 24 + onset_tick
            offset = int(rng.integers(onset + 1, 16 * 24))
            events.append(NoteEvent(
                INSTRUMENT_CLASSES[int(rng.integers(0, len(INSTRUMENT_CLASSES)))],
                int(rng.integers(0, 127)), onset_beat, onset_tick,
                offset // 24, offset % 24, int(rng.integers(0, 32)) * 4 + 2))
    events.sort(key=lambda ev: canonical_key(ev, vocab))
    tempo = dequantize_tempo(int(rng.integers(0, 16)))
    tag = TAGS[int(rng.integers(0, len(TAGS)))]
    return LoopSample(events=events, tempo_bpm=tempo, tag=tag)
