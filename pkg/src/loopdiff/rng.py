"""Seedable counter-based random streams.

Every stochastic operation draws from a named stream derived from
(seed, purpose, *indices) through Philox, so streams are independent of
each other and of how many draws other streams have consumed. In
particular the noise injected at inference step s does not depend on the
total step count T.
"""

import hashlib

import numpy as np


def _purpose_code(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngHub:
    """Factory of independent, reproducible random generators."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, purpose: str, *indices: int) -> np.random.Generator:
        entropy = (self.seed, _purpose_code(purpose)) + tuple(int(i) for i in indices)
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def spawn(self, purpose: str, *indices: int) -> "RngHub":
        """Derive a sub-hub, e.g. one per training example."""
        entropy = (self.seed, _purpose_code(purpose)) + tuple(int(i) for i in indices)
        digest = hashlib.sha256(repr(entropy).encode()).digest()
        return RngHub(int.from_bytes(digest[:8], "little"))
