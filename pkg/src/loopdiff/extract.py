"""Loop extraction: bookended 4-bar sections with metrical filtering.

The piano roll is binary at eighth-note resolution with 140 channels,
12 octave-collapsed pitch classes over all melodic instruments plus one
channel per drum key. A candidate section is bookended when its first
two frames reappear exactly at its end; metrical filtering then keeps
4-bar candidates that start on a strong boundary with a quiet interior.
"""

import hashlib
import json
import pathlib
from dataclasses import dataclass, field

import numpy as np

from .codec import TokenizedLoop, encode_loop
from .errors import (
    NoDownbeat, ParseError, TooManyEvents, UnsupportedTimeSignature,
)
from .midi_io import (
    ParsedMidi, check_time_signatures, distinct_tempo_count, parse_midi,
    parse_midi_window,
)
from .vocab import Vocabulary

FRAMES_PER_BEAT = 2          # eighth notes
PITCH_CLASS_CHANNELS = 12
DRUM_CHANNELS = 128
NUM_CHANNELS = PITCH_CLASS_CHANNELS + DRUM_CHANNELS
LOOP_FRAMES = 32             # 4 bars
BOOKEND_LEN = 2
NUM_LEVELS = 8


@dataclass(frozen=True)
class LoopCandidate:
    start_frame: int
    end_frame: int            # half-open
    bookend_len: int = BOOKEND_LEN
    source: str = ""

    @property
    def start_beat(self) -> int:
        return self.start_frame // FRAMES_PER_BEAT


def prefilter_midi(parsed: ParsedMidi):
    """Reject reason or None. One tempo value required; a file with no
    tempo event plays at the single implicit default and is accepted."""
    try:
        check_time_signatures(parsed)
    except UnsupportedTimeSignature:
        return "TimeSignature"
    if distinct_tempo_count(parsed) > 1:
        return "MultipleTempi"
    return None


def heuristic_analysis(n_beats: int) -> np.ndarray:
    """Divisibility fallback: level L fires at beat b iff 2^(L-1) | b."""
    probs = np.zeros((n_beats, NUM_LEVELS))
    beats = np.arange(n_beats)
    for level in range(1, NUM_LEVELS + 1):
        probs[beats % (1 << (level - 1)) == 0, level - 1] = 1.0
    return probs


def load_analysis(path) -> np.ndarray:
    """Sidecar format: {"beats": [[p1..p8], ...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    arr = np.asarray(doc["beats"], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != NUM_LEVELS:
        raise ParseError(f"analysis must be (beats, {NUM_LEVELS}), "
                         f"got {arr.shape}")
    if (arr < 0).any() or (arr > 1).any():
        raise ParseError("analysis probabilities outside [0,1]")
    return arr


def crop_to_first_downbeat(analysis: np.ndarray) -> int:
    """First beat whose level-4 probability exceeds 0.5."""
    hits = np.nonzero(analysis[:, 3] > 0.5)[0]
    if hits.size == 0:
        raise NoDownbeat("no beat has level-4 probability > 0.5")
    return int(hits[0])


def build_piano_roll(parsed: ParsedMidi, crop_beat: int = 0) -> np.ndarray:
    """(frames, 140) uint8. Melodic notes fill onset through sustain,
    drums mark the onset frame only; notes starting before the crop are
    dropped."""
    ppq = parsed.ppq
    origin = crop_beat * ppq
    end_frame = 0
    cells = []
    for n in parsed.notes:
        if n.start_tick < origin:
            continue
        st = n.start_tick - origin
        f0 = st * FRAMES_PER_BEAT // ppq
        if n.is_drum:
            if not 0 <= n.pitch < DRUM_CHANNELS:
                continue
            cells.append((f0, f0 + 1, PITCH_CLASS_CHANNELS + n.pitch))
            end_frame = max(end_frame, f0 + 1)
        else:
            et = n.end_tick - origin
            f1 = -((-et * FRAMES_PER_BEAT) // ppq)     # ceil division
            f1 = max(f1, f0 + 1)
            cells.append((f0, f1, n.pitch % 12))
            end_frame = max(end_frame, f1)
    roll = np.zeros((end_frame, NUM_CHANNELS), dtype=np.uint8)
    for f0, f1, ch in cells:
        roll[f0:f1, ch] = 1
    return roll


def find_bookended(roll: np.ndarray, bookend_len: int = BOOKEND_LEN,
                   source: str = "") -> list:
    """All sections [s, e) whose first bookend_len frames reappear at e.

    Bookend blocks must contain at least one active cell; equality is
    exact. Positions sharing a block are grouped by hashing the block
    bytes, so cost is linear plus output size.
    """
    frames = roll.shape[0]
    groups = {}
    for i in range(frames - bookend_len + 1):
        block = roll[i:i + bookend_len]
        if not block.any():
            continue
        groups.setdefault(block.tobytes(), []).append(i)
    out = []
    for positions in groups.values():
        for a in range(len(positions)):
            for b in range(a + 1, len(positions)):
                out.append(LoopCandidate(positions[a], positions[b],
                                         bookend_len, source))
    out.sort(key=lambda c: (c.start_frame, c.end_frame))
    return out


def filter_candidates(cands, analysis: np.ndarray) -> list:
    """Keep 32-frame beat-aligned candidates starting on a level-5
    boundary with no interior boundary above level 5."""
    kept = []
    for c in cands:
        if c.end_frame - c.start_frame != LOOP_FRAMES:
            continue
        if c.start_frame % FRAMES_PER_BEAT:
            continue
        b0 = c.start_frame // FRAMES_PER_BEAT
        b1 = c.end_frame // FRAMES_PER_BEAT
        if b1 > analysis.shape[0]:
            continue
        if not analysis[b0, 4] > 0.5:
            continue
        interior = analysis[b0 + 1:b1, 5:]
        if (interior > 0.5).any():
            continue
        kept.append(c)
    return kept


@dataclass
class ExtractResult:
    file_id: str
    status: str = "ok"               # or the rejection reason
    candidates: int = 0
    accepted: int = 0
    loops: list = field(default_factory=list)          # LoopSample
    tokenized: list = field(default_factory=list)      # TokenizedLoop
    skipped: list = field(default_factory=list)        # (start_beat, reason)


def extract_loops(data: bytes, vocab: Vocabulary, n_slots: int,
                  file_id: str = "", analysis: np.ndarray = None,
                  tag: str = "other") -> ExtractResult:
    """Full per-file pipeline; identical TokenizedLoops are reported once."""
    res = ExtractResult(file_id=file_id)
    try:
        parsed = parse_midi(data)
    except ParseError as e:
        res.status = f"ParseError: {e}"
        return res
    reason = prefilter_midi(parsed)
    if reason:
        res.status = reason
        return res
    if analysis is None:
        n_beats = parsed.total_ticks // parsed.ppq + 1
        analysis = heuristic_analysis(max(n_beats, 1))
    try:
        crop = crop_to_first_downbeat(analysis)
    except NoDownbeat:
        res.status = "NoDownbeat"
        return res
    cropped = analysis[crop:]
    roll = build_piano_roll(parsed, crop)
    cands = find_bookended(roll, BOOKEND_LEN, file_id)
    res.candidates = len(cands)
    accepted = filter_candidates(cands, cropped)
    res.accepted = len(accepted)
    digest = hashlib.sha1(data).hexdigest()
    seen = set()
    for c in accepted:
        start = crop + c.start_beat
        loop = parse_midi_window(data, start, vocab, tag)
        loop.provenance = {"file": file_id, "sha1": digest,
                           "start_beat": start}
        try:
            tok = encode_loop(loop, n_slots, vocab)
        except TooManyEvents:
            res.skipped.append((start, "TooManyEvents"))
            continue
        if tok in seen:
            res.skipped.append((start, "Duplicate"))
            continue
        seen.add(tok)
        res.loops.append(loop)
        res.tokenized.append(tok)
    return res


def loop_hash(tok: TokenizedLoop) -> str:
    """Content hash used by the dataset splitter's leakage graph."""
    return hashlib.sha1(tok.tokens.tobytes()).hexdigest()


def extract_corpus(paths, vocab: Vocabulary, n_slots: int,
                   analysis_dir=None, tag: str = "other"):
    """Run per-file extraction over `paths` in sorted order.

    Returns (tokenized loops, report dict). Files are independent, so
    ordering by file id keeps a future parallel run deterministic.
    """
    results = []
    loops = []
    for path in sorted(pathlib.Path(p) for p in paths):
        data = path.read_bytes()
        analysis = None
        if analysis_dir is not None:
            side = pathlib.Path(analysis_dir) / (path.stem + ".analysis.json")
            if side.exists():
                analysis = load_analysis(side)
        res = extract_loops(data, vocab, n_slots, file_id=path.name,
                            analysis=analysis, tag=tag)
        results.append(res)
        loops.extend(res.tokenized)
    report = {
        "files": len(results),
        "accepted_files": sum(1 for r in results if r.status == "ok"),
        "loops": len(loops),
        "per_file": [{
            "file": r.file_id, "status": r.status,
            "candidates": r.candidates, "accepted": r.accepted,
            "loops": len(r.tokenized),
            "hashes": [loop_hash(t) for t in r.tokenized],
            "skipped": [{"start_beat": b, "reason": why}
                        for b, why in r.skipped],
        } for r in results],
    }
    return loops, report


def hash_index_from_report(report: dict) -> dict:
    """Aggregate {hash: sorted file ids} for the splitter."""
    index = {}
    for entry in report["per_file"]:
        for h in entry.get("hashes", []):
            index.setdefault(h, set()).add(entry["file"])
    return {h: sorted(fs) for h, fs in index.items()}
