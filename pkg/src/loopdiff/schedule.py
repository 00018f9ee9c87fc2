"""Noise schedules for the simplex diffusion process."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Endpoint contract: alpha_bar(0) >= 1 - 1e-6 and alpha_bar(1) <= 1e-3,
# monotone non-increasing in between.
ALPHA_FLOOR = 1e-5
ALPHA_CEIL = 1.0 - 1e-6


@dataclass(frozen=True)
class NoiseSchedule:
    alpha_bar: Callable


def cosine_schedule(floor: float = ALPHA_FLOOR,
                    ceil: float = ALPHA_CEIL) -> NoiseSchedule:
    """alpha_bar(t) = cos^2(pi t / 2), clamped away from 0 and 1."""

    def alpha_bar(t):
        t = np.asarray(t, dtype=np.float64)
        out = np.clip(np.cos(np.pi * t / 2.0) ** 2, floor, ceil)
        return float(out) if out.ndim == 0 else out

    return NoiseSchedule(alpha_bar=alpha_bar)
