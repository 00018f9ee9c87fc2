"""Minimal standard MIDI file (format 0/1) reader and writer.

Covers exactly what the pipeline needs: note on/off, program change,
tempo, time signature. Other events are skipped on read and never
written. Times are absolute ticks at the file's PPQ.
"""

import struct
from dataclasses import dataclass, field

from .errors import ParseError

NOTE_ON = "note_on"
NOTE_OFF = "note_off"
PROGRAM = "program"
TEMPO = "tempo"
TIME_SIGNATURE = "time_signature"


@dataclass
class Event:
    tick: int
    kind: str
    channel: int = 0
    a: int = 0      # pitch / program / numerator / tempo in us-per-beat (in `a` for TEMPO)
    b: int = 0      # velocity / denominator


@dataclass
class Track:
    events: list = field(default_factory=list)


@dataclass
class SmfFile:
    ppq: int
    tracks: list = field(default_factory=list)

    def all_events(self):
        for ti, tr in enumerate(self.tracks):
            for ev in tr.events:
                yield ti, ev


def _read_varlen(data, pos):
    value = 0
    while True:
        if pos >= len(data):
            raise ParseError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos


def _write_varlen(value):
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def parse(data: bytes) -> SmfFile:
    if len(data) < 14 or data[:4] != b"MThd":
        raise ParseError("not a standard MIDI file")
    header_len, fmt, n_tracks, division = struct.unpack(">IHHH", data[4:14])
    if header_len < 6:
        raise ParseError("bad header length")
    if fmt not in (0, 1):
        raise ParseError(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise ParseError("SMPTE time division not supported")
    ppq = division
    if ppq == 0:
        raise ParseError("zero ticks per quarter note")

    pos = 8 + header_len
    tracks = []
    for _ in range(n_tracks):
        if pos + 8 > len(data):
            raise ParseError("truncated track header")
        if data[pos:pos + 4] != b"MTrk":
            raise ParseError("missing MTrk chunk")
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        pos += 8
        end = pos + length
        if end > len(data):
            raise ParseError("truncated track data")
        tracks.append(_parse_track(data[pos:end]))
        pos = end
    return SmfFile(ppq=ppq, tracks=tracks)


def _parse_track(chunk) -> Track:
    events = []
    pos = 0
    tick = 0
    status = None
    while pos < len(chunk):
        delta, pos = _read_varlen(chunk, pos)
        tick += delta
        if pos >= len(chunk):
            raise ParseError("truncated event")
        byte = chunk[pos]
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise ParseError("running status without prior status byte")
        if status == 0xFF:
            meta = chunk[pos]
            pos += 1
            length, pos = _read_varlen(chunk, pos)
            payload = chunk[pos:pos + length]
            pos += length
            if meta == 0x51 and length == 3:
                us = (payload[0] << 16) | (payload[1] << 8) | payload[2]
                events.append(Event(tick, TEMPO, 0, us, 0))
            elif meta == 0x58 and length >= 2:
                events.append(Event(tick, TIME_SIGNATURE, 0, payload[0], 1 << payload[1]))
            elif meta == 0x2F:
                break
        elif status in (0xF0, 0xF7):
            length, pos = _read_varlen(chunk, pos)
            pos += length
        else:
            kind = status & 0xF0
            channel = status & 0x0F
            if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                if pos + 2 > len(chunk):
                    raise ParseError("truncated channel event")
                d1, d2 = chunk[pos], chunk[pos + 1]
                pos += 2
                if kind == 0x90 and d2 > 0:
                    events.append(Event(tick, NOTE_ON, channel, d1, d2))
                elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                    events.append(Event(tick, NOTE_OFF, channel, d1, 0))
            elif kind in (0xC0, 0xD0):
                if pos + 1 > len(chunk):
                    raise ParseError("truncated channel event")
                d1 = chunk[pos]
                pos += 1
                if kind == 0xC0:
                    events.append(Event(tick, PROGRAM, channel, d1, 0))
            else:
                raise ParseError(f"unexpected status byte 0x{status:02x}")
    return Track(events=events)


def _encode_event(ev: Event):
    if ev.kind == NOTE_ON:
        return bytes([0x90 | ev.channel, ev.a & 0x7F, ev.b & 0x7F])
    if ev.kind == NOTE_OFF:
        return bytes([0x80 | ev.channel, ev.a & 0x7F, 0])
    if ev.kind == PROGRAM:
        return bytes([0xC0 | ev.channel, ev.a & 0x7F])
    if ev.kind == TEMPO:
        us = ev.a
        return bytes([0xFF, 0x51, 3, (us >> 16) & 0xFF, (us >> 8) & 0xFF, us & 0xFF])
    if ev.kind == TIME_SIGNATURE:
        denom_pow = ev.b.bit_length() - 1
        return bytes([0xFF, 0x58, 4, ev.a, denom_pow, 24, 8])
    raise ValueError(f"cannot encode event kind {ev.kind}")


def write(smf: SmfFile) -> bytes:
    out = bytearray()
    out += b"MThd" + struct.pack(">IHHH", 6, 1 if len(smf.tracks) > 1 else 0,
                                 len(smf.tracks), smf.ppq)
    for tr in smf.tracks:
        body = bytearray()
        tick = 0
        for ev in sorted(tr.events, key=lambda e: e.tick):
            body += _write_varlen(ev.tick - tick)
            tick = ev.tick
            body += _encode_event(ev)
        body += _write_varlen(0) + bytes([0xFF, 0x2F, 0])
        out += b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    return bytes(out)
