"""Checkpoint files: JSON header plus raw little-endian float64 blocks.

Layout: magic, u32 header length, header JSON (sorted keys), then the
parameter blocks in header order. Saving the result of a load yields
identical bytes, and loads refuse files from another vocabulary.
"""

import json
import struct

import numpy as np

from . import autodiff as ad
from .errors import CorruptCheckpoint, VersionMismatch

MAGIC = b"LDCKPT01"
FORMAT_VERSION = 1


def save_params(path, params: dict, config: dict, vocab_version: str,
                train_state: dict = None, extra_blocks: dict = None):
    """`params` maps name -> Tensor; `extra_blocks` name -> ndarray."""
    # asarray rather than ascontiguousarray: the latter would lift 0-d
    # blocks to shape (1,) and break shape round trips
    blocks = [(name, np.asarray(t.data, dtype="<f8", order="C"))
              for name, t in params.items()]
    for name, arr in (extra_blocks or {}).items():
        blocks.append((name, np.asarray(arr, dtype="<f8", order="C")))
    head = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "vocab_version": vocab_version,
        "param_names": [n for n, _ in blocks[:len(params)]],
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
        "train_state": train_state or {},
    }
    head_bytes = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head_bytes)))
        fh.write(head_bytes)
        for _, arr in blocks:
            fh.write(arr.tobytes())


def load_params(path, expected_vocab_version: str):
    """Returns (params, config, train_state, extra_blocks)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CorruptCheckpoint("bad magic")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise CorruptCheckpoint("truncated header length")
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise CorruptCheckpoint("truncated header")
    try:
        head = json.loads(data[off:off + hlen])
    except json.JSONDecodeError as e:
        raise CorruptCheckpoint(f"unreadable header: {e}") from e
    off += hlen
    if head.get("format_version") != FORMAT_VERSION:
        raise CorruptCheckpoint(
            f"unsupported format version {head.get('format_version')}")
    if head.get("vocab_version") != expected_vocab_version:
        raise VersionMismatch(
            f"checkpoint for vocabulary {head.get('vocab_version')}, "
            f"current is {expected_vocab_version}")
    param_names = set(head.get("param_names", []))
    params = {}
    extra = {}
    for block in head.get("blocks", []):
        shape = tuple(int(x) for x in block["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if len(data) < off + nbytes:
            raise CorruptCheckpoint(f"truncated block {block['name']!r}")
        arr = np.frombuffer(data, dtype="<f8", count=count,
                            offset=off).reshape(shape).copy()
        off += nbytes
        if block["name"] in param_names:
            params[block["name"]] = ad.parameter(arr)
        else:
            extra[block["name"]] = arr
    if off != len(data):
        raise CorruptCheckpoint(f"{len(data) - off} trailing bytes")
    return params, head.get("config", {}), head.get("train_state", {}), extra
