"""Dataset files holding tokenized loops.

Two interchangeable encodings share one header: a JSONL form for
interchange (header line, then one record per line) and a packed binary
form for training throughput (length-prefixed header, then contiguous
int16 token blocks). Loading refuses files written under a different
vocabulary version.
"""

import json
import struct

import numpy as np

from .codec import TokenizedLoop
from .errors import ParseError, VersionMismatch
from .vocab import ATTRIBUTE_NAMES, NUM_ATTRIBUTES, Vocabulary

PACKED_MAGIC = b"LDTK01\n"


def _header(n_slots: int, vocab: Vocabulary, count: int) -> dict:
    return {
        "format": "loopdiff-tokens",
        "vocab_version": vocab.version,
        "n_slots": n_slots,
        "attributes": list(ATTRIBUTE_NAMES),
        "count": count,
    }


def _check_header(head: dict, vocab: Vocabulary) -> int:
    if head.get("format") != "loopdiff-tokens":
        raise ParseError("not a loop dataset file")
    if head.get("vocab_version") != vocab.version:
        raise VersionMismatch(
            f"dataset written for vocabulary {head.get('vocab_version')}, "
            f"current is {vocab.version}")
    if head.get("attributes") != list(ATTRIBUTE_NAMES):
        raise ParseError("attribute order differs from canonical order")
    n_slots = head.get("n_slots")
    # 0 is the empty-dataset convention; records under it never validate
    if not isinstance(n_slots, int) or n_slots < 0:
        raise ParseError("bad n_slots in header")
    return n_slots


def save_jsonl(path, loops, vocab: Vocabulary):
    loops = list(loops)
    if loops:
        n_slots = loops[0].n_slots
    else:
        n_slots = 0
    with open(path, "w") as fh:
        fh.write(json.dumps(_header(n_slots, vocab, len(loops)),
                            sort_keys=True) + "\n")
        for loop in loops:
            if loop.n_slots != n_slots:
                raise ParseError("mixed slot counts in one dataset")
            fh.write(json.dumps({"tokens": loop.tokens.tolist()}) + "\n")


def load_jsonl(path, vocab: Vocabulary):
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise ParseError("empty dataset file")
        try:
            head = json.loads(first)
        except json.JSONDecodeError as e:
            raise ParseError(f"bad header line: {e}") from e
        n_slots = _check_header(head, vocab)
        loops = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad record at line {lineno}: {e}") from e
            tokens = np.asarray(rec["tokens"], dtype=np.int16)
            if tokens.shape != (n_slots, NUM_ATTRIBUTES):
                raise ParseError(f"record at line {lineno} has shape "
                                 f"{tokens.shape}, expected ({n_slots}, "
                                 f"{NUM_ATTRIBUTES})")
            loops.append(TokenizedLoop(tokens))
    if head.get("count") not in (None, len(loops)):
        raise ParseError(f"header count {head['count']} != {len(loops)} records")
    return loops


def save_packed(path, loops, vocab: Vocabulary):
    loops = list(loops)
    n_slots = loops[0].n_slots if loops else 0
    head = json.dumps(_header(n_slots, vocab, len(loops)),
                      sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(PACKED_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for loop in loops:
            if loop.n_slots != n_slots:
                raise ParseError("mixed slot counts in one dataset")
            fh.write(np.ascontiguousarray(loop.tokens, dtype="<i2").tobytes())


def load_packed(path, vocab: Vocabulary):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(PACKED_MAGIC):
        raise ParseError("bad magic; not a packed loop dataset")
    off = len(PACKED_MAGIC)
    if len(data) < off + 4:
        raise ParseError("truncated header")
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise ParseError("truncated header")
    try:
        head = json.loads(data[off:off + hlen])
    except json.JSONDecodeError as e:
        raise ParseError(f"bad header: {e}") from e
    off += hlen
    n_slots = _check_header(head, vocab)
    rec_bytes = n_slots * NUM_ATTRIBUTES * 2
    body = data[off:]
    if rec_bytes == 0:
        if body:
            raise ParseError("records present but n_slots is 0")
        return []
    if len(body) % rec_bytes:
        raise ParseError("record payload is not a whole number of records")
    count = len(body) // rec_bytes
    if head.get("count") not in (None, count):
        raise ParseError(f"header count {head['count']} != {count} records")
    flat = np.frombuffer(body, dtype="<i2").astype(np.int16)
    arr = flat.reshape(count, n_slots, NUM_ATTRIBUTES)
    return [TokenizedLoop(arr[i].copy()) for i in range(count)]


def load_dataset(path, vocab: Vocabulary):
    """Sniff the on-disk form and load either encoding."""
    with open(path, "rb") as fh:
        magic = fh.read(len(PACKED_MAGIC))
    if magic == PACKED_MAGIC:
        return load_packed(path, vocab)
    return load_jsonl(path, vocab)


def save_dataset(path, loops, vocab: Vocabulary):
    """Pick the encoding from the filename; `.jsonl` is interchange text."""
    if str(path).endswith(".jsonl"):
        save_jsonl(path, loops, vocab)
    else:
        save_packed(path, loops, vocab)
