"""MIDI-level ingestion and emission of loops.

Reading resolves note on/off pairs against per-(track, channel) program
state; channel 10 is percussion. A 16-beat window is quantized onto the
24-ticks-per-beat grid. Writing emits one track per instrument class
plus a percussion track, deterministic byte-for-byte.
"""

from dataclasses import dataclass, field

from . import smf
from .codec import LoopSample, NoteEvent
from .errors import ParseError, UnsupportedTimeSignature
from .vocab import (
    BEATS_PER_LOOP, CLASS_TO_PROGRAM, DRUM_KEY_HI, DRUM_KEY_LO, DRUMS,
    INSTRUMENT_CLASSES, PROGRAM_TO_CLASS, TICKS_PER_BEAT, Vocabulary,
    dequantize_tempo, quantize_tempo,
)

GRID = BEATS_PER_LOOP * TICKS_PER_BEAT   # 384 positions per 4-bar window
DRUM_RENDER_TICKS = 12                   # written drum length; offsets are ignored on read


@dataclass
class RawNote:
    start_tick: int
    end_tick: int
    pitch: int
    velocity: int
    is_drum: bool
    program: int


@dataclass
class ParsedMidi:
    ppq: int
    notes: list
    tempo_values: list        # distinct-preserving list of bpm values in file order
    time_signatures: list     # (numerator, denominator) pairs
    total_ticks: int = 0

    @property
    def tempo_bpm(self):
        return self.tempo_values[0] if self.tempo_values else 120.0

    def beats(self, tick: int) -> float:
        return tick / self.ppq


def parse_midi(data: bytes) -> ParsedMidi:
    """Resolve a file into raw notes with program/percussion attribution."""
    f = smf.parse(data)
    notes = []
    tempo_values = []
    time_signatures = []
    total = 0
    for ti, track in enumerate(f.tracks):
        program = {}
        open_notes = {}
        for ev in sorted(track.events, key=lambda e: e.tick):
            total = max(total, ev.tick)
            if ev.kind == smf.TEMPO:
                bpm = 60_000_000 / ev.a
                tempo_values.append(bpm)
            elif ev.kind == smf.TIME_SIGNATURE:
                time_signatures.append((ev.a, ev.b))
            elif ev.kind == smf.PROGRAM:
                program[ev.channel] = ev.a
            elif ev.kind == smf.NOTE_ON:
                key = (ev.channel, ev.a)
                open_notes.setdefault(key, []).append(
                    (ev.tick, ev.b, program.get(ev.channel, 0)))
            elif ev.kind == smf.NOTE_OFF:
                key = (ev.channel, ev.a)
                stack = open_notes.get(key)
                if stack:
                    start, vel, prog = stack.pop(0)
                    if ev.tick > start:
                        notes.append(RawNote(start, ev.tick, ev.a, vel,
                                             ev.channel == 9, prog))
        # percussion tracks in the wild often skip note-offs; close any
        # dangling note at end of track rather than drop it
        track_end = max((e.tick for e in track.events), default=0)
        for (channel, pitch), stack in open_notes.items():
            for start, vel, prog in stack:
                notes.append(RawNote(start, max(track_end, start + 1), pitch,
                                     vel, channel == 9, prog))
    notes.sort(key=lambda n: (n.start_tick, n.is_drum, n.program, n.pitch, n.end_tick))
    return ParsedMidi(ppq=f.ppq, notes=notes, tempo_values=tempo_values,
                      time_signatures=time_signatures, total_ticks=total)


def distinct_tempo_count(parsed: ParsedMidi) -> int:
    return len({round(v, 6) for v in parsed.tempo_values})


def check_time_signatures(parsed: ParsedMidi):
    for num, den in parsed.time_signatures:
        if (num, den) != (4, 4):
            raise UnsupportedTimeSignature(f"time signature {num}/{den}")


def _half_up(numerator: int, denominator: int) -> int:
    return (2 * numerator + denominator) // (2 * denominator)


def parse_midi_window(data: bytes, start_beat: int, vocab: Vocabulary,
                      tag: str = "other") -> LoopSample:
    """Quantize the 16 beats starting at `start_beat` into a LoopSample.

    Notes whose onset falls inside the window are kept; offsets past the
    window end are clipped to beat 15 tick 23.
    """
    parsed = parse_midi(data)
    check_time_signatures(parsed)
    ppq = parsed.ppq
    w0 = start_beat * ppq
    w1 = w0 + BEATS_PER_LOOP * ppq
    tempo = min(max(parsed.tempo_bpm, 50.0), 200.0)

    events = []
    for n in parsed.notes:
        if not w0 <= n.start_tick < w1:
            continue
        onq = _half_up((n.start_tick - w0) * TICKS_PER_BEAT, ppq)
        if onq >= GRID:
            continue
        if n.is_drum:
            if not DRUM_KEY_LO <= n.pitch <= DRUM_KEY_HI:
                continue
            events.append(NoteEvent(DRUMS, n.pitch, onq // TICKS_PER_BEAT,
                                    onq % TICKS_PER_BEAT, None, None, n.velocity))
            continue
        offq = _half_up((n.end_tick - w0) * TICKS_PER_BEAT, ppq)
        offq = min(offq, GRID - 1)
        if offq <= onq:
            if onq >= GRID - 1:
                continue
            offq = onq + 1
        pitch = min(n.pitch, 126)
        events.append(NoteEvent(PROGRAM_TO_CLASS[n.program], pitch,
                                onq // TICKS_PER_BEAT, onq % TICKS_PER_BEAT,
                                offq // TICKS_PER_BEAT, offq % TICKS_PER_BEAT,
                                n.velocity))
    return LoopSample(events=events, tempo_bpm=tempo, tag=tag)


RENDER_PPQ = 480
_TICKS_PER_GRID = RENDER_PPQ // TICKS_PER_BEAT
_MELODIC_CHANNELS = [c for c in range(16) if c != 9]


def render_midi(loop: LoopSample) -> bytes:
    """Write a LoopSample as a format-1 file; deterministic bytes."""
    bpm = dequantize_tempo(quantize_tempo(min(max(loop.tempo_bpm, 50.0), 200.0)))
    conductor = smf.Track()
    conductor.events.append(smf.Event(0, smf.TEMPO, 0, round(60_000_000 / bpm), 0))
    conductor.events.append(smf.Event(0, smf.TIME_SIGNATURE, 0, 4, 4))
    tracks = [conductor]

    classes = sorted({e.instrument for e in loop.events if not e.is_drum},
                     key=INSTRUMENT_CLASSES.index)
    for i, cls in enumerate(classes):
        channel = _MELODIC_CHANNELS[i % len(_MELODIC_CHANNELS)]
        tr = smf.Track()
        tr.events.append(smf.Event(0, smf.PROGRAM, channel, CLASS_TO_PROGRAM[cls], 0))
        for ev in _sorted_notes(loop, cls):
            on = ev.onset_time() * _TICKS_PER_GRID
            off = ev.offset_time() * _TICKS_PER_GRID
            # velocity 0 would read back as a note off
            tr.events.append(smf.Event(on, smf.NOTE_ON, channel, ev.pitch,
                                       max(ev.velocity, 1)))
            tr.events.append(smf.Event(off, smf.NOTE_OFF, channel, ev.pitch, 0))
        tr.events.sort(key=lambda e: (e.tick, e.kind != smf.PROGRAM, e.kind == smf.NOTE_ON))
        tracks.append(tr)

    drums = [e for e in loop.events if e.is_drum]
    if drums:
        tr = smf.Track()
        for ev in _sorted_notes(loop, DRUMS):
            on = ev.onset_time() * _TICKS_PER_GRID
            off = on + DRUM_RENDER_TICKS * _TICKS_PER_GRID
            tr.events.append(smf.Event(on, smf.NOTE_ON, 9, ev.pitch,
                                       max(ev.velocity, 1)))
            tr.events.append(smf.Event(off, smf.NOTE_OFF, 9, ev.pitch, 0))
        tr.events.sort(key=lambda e: (e.tick, e.kind == smf.NOTE_ON))
        tracks.append(tr)

    return smf.write(smf.SmfFile(ppq=RENDER_PPQ, tracks=tracks))


def _sorted_notes(loop, instrument):
    return sorted((e for e in loop.events if e.instrument == instrument),
                  key=lambda e: (e.onset_time(), e.pitch, e.velocity))
