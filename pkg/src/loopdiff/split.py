"""Leakage-safe dataset splitting.

A loop hash that appears in several source tracks ties those tracks
together: any split that separates them leaks near-duplicates across
the train/eval/test boundary. We therefore split by connected
components of the bipartite hash-track graph, never by raw hash.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .rng import RngHub

SPLITS = ("train", "eval", "test")
TEST_FRACTION = 0.10
EVAL_FRACTION = 0.10  # of the non-test remainder; net 0.81/0.09/0.10


def parse_index_line(line: str, lineno: int) -> tuple:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {lineno}: not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ParseError(f"line {lineno}: expected an object")
    if "hash" not in obj or "tracks" not in obj:
        raise ParseError(f"line {lineno}: needs 'hash' and 'tracks'")
    h = obj["hash"]
    tracks = obj["tracks"]
    if not isinstance(h, str) or not h:
        raise ParseError(f"line {lineno}: 'hash' must be a non-empty string")
    if (not isinstance(tracks, list)
            or not all(isinstance(t, str) and t for t in tracks)):
        raise ParseError(f"line {lineno}: 'tracks' must be a list of "
                         "non-empty strings")
    return h, tracks


def load_index(path) -> dict:
    """Reads a hash index file; returns {hash: sorted track ids}.

    One JSON object per line, {"hash": str, "tracks": [str, ...]}.
    Repeated hashes merge their track lists.
    """
    index = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            h, tracks = parse_index_line(line, lineno)
            index.setdefault(h, set()).update(tracks)
    return {h: sorted(ts) for h, ts in index.items()}


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:   # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def connected_components(index: dict) -> list:
    """Components of the bipartite hash-track graph.

    Nodes are namespaced ("hash", h) / ("track", t) pairs. Each
    component is returned as a sorted list of its hashes, and the
    component list is sorted by smallest member so the grouping is
    deterministic regardless of input order.
    """
    nodes = [("hash", h) for h in index]
    nodes += [("track", t) for ts in index.values() for t in ts]
    uf = _UnionFind(nodes)
    for h, ts in index.items():
        for t in ts:
            uf.union(("hash", h), ("track", t))
    groups = {}
    for h in index:
        groups.setdefault(uf.find(("hash", h)), []).append(h)
    comps = [sorted(g) for g in groups.values()]
    comps.sort(key=lambda g: g[0])
    return comps


@dataclass
class SplitReport:
    counts: dict = field(default_factory=dict)
    fractions: dict = field(default_factory=dict)
    n_components: int = 0
    n_multi_components: int = 0
    largest_component: int = 0
    warnings: list = field(default_factory=list)


def assign_splits(index: dict, seed: int = 0) -> tuple:
    """Assigns every hash to train/eval/test; returns (assignment, report).

    Multi-hash components are packed greedily (largest first) into the
    split furthest below its target share, so no component ever
    straddles a boundary. Singleton components are numerous enough to
    hit the target fractions by independent random assignment.
    """
    comps = connected_components(index)
    multi = [c for c in comps if len(c) > 1]
    singles = [c[0] for c in comps if len(c) == 1]

    total = len(index)
    target = {"train": (1 - TEST_FRACTION) * (1 - EVAL_FRACTION),
              "eval": (1 - TEST_FRACTION) * EVAL_FRACTION,
              "test": TEST_FRACTION}
    counts = {s: 0 for s in SPLITS}
    assignment = {}

    multi.sort(key=lambda c: (-len(c), c[0]))
    for comp in multi:
        # most-underfilled split by relative deficit; ties in SPLITS order
        deficit = {s: target[s] - counts[s] / total for s in SPLITS}
        dest = max(SPLITS, key=lambda s: deficit[s])
        for h in comp:
            assignment[h] = dest
        counts[dest] += len(comp)

    rng = RngHub(seed).stream("split.singletons")
    for h in singles:
        u = rng.random()
        if u < TEST_FRACTION:
            dest = "test"
        elif rng.random() < EVAL_FRACTION:
            dest = "eval"
        else:
            dest = "train"
        assignment[h] = dest
        counts[dest] += 1

    report = SplitReport(
        counts=dict(counts),
        fractions={s: counts[s] / total if total else 0.0 for s in SPLITS},
        n_components=len(comps),
        n_multi_components=len(multi),
        largest_component=max((len(c) for c in comps), default=0),
    )
    if total and report.largest_component > 0.5 * total:
        report.warnings.append(
            f"giant component: {report.largest_component} of {total} hashes "
            "are transitively linked; the split fractions cannot be met")
    for s in SPLITS:
        if total and abs(report.fractions[s] - target[s]) > 0.02:
            report.warnings.append(
                f"{s} fraction {report.fractions[s]:.3f} misses target "
                f"{target[s]:.3f} by more than 0.02")
    return assignment, report


def write_assignment(path, assignment: dict, report: SplitReport):
    """One tab-separated (hash, split) line per hash, sorted by hash,
    then the report as a JSON footer file next to it."""
    with open(path, "w", encoding="utf-8") as f:
        for h in sorted(assignment):
            f.write(f"{h}\t{assignment[h]}\n")
    summary = {
        "counts": report.counts,
        "fractions": report.fractions,
        "n_components": report.n_components,
        "n_multi_components": report.n_multi_components,
        "largest_component": report.largest_component,
        "warnings": report.warnings,
    }
    with open(str(path) + ".report.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
        f.write("\n")


def split_safety_violations(index: dict, assignment: dict) -> list:
    """Hash pairs that share a track yet land in different splits."""
    by_track = {}
    for h, ts in index.items():
        for t in ts:
            by_track.setdefault(t, []).append(h)
    bad = []
    for t, hs in sorted(by_track.items()):
        splits = {assignment[h] for h in hs}
        if len(splits) > 1:
            bad.append((t, sorted(hs)))
    return bad
