"""Counter-based random streams keyed by (seed, particle, step, lane).

Every draw is a pure function of its key, so increments can be regenerated on any grid,
aggregated from a finer grid, or computed for a permuted particle set without changing
a single bit.
"""
from __future__ import annotations

import numpy as np

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STEP_MUL = np.uint64(0xD1342543DE82EF95)
_LANE_MUL = np.uint64(0xC2B2AE3D27D4EB4F)
_2_53 = 1.0 / 9007199254740992.0


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer (bijective on uint64)."""
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


def random_bits(seed: int, particles, step: int, lane: int = 0) -> np.ndarray:
    """64 random bits per particle for the given (seed, step, lane)."""
    with np.errstate(over="ignore"):
        p = np.asarray(particles, dtype=np.uint64)
        key = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        z = _mix(key ^ (p * _GOLDEN + _GOLDEN))
        z = _mix(z + np.uint64(step) * _STEP_MUL + np.uint64(lane) * _LANE_MUL)
        return _mix(z + _GOLDEN)


def uniform(seed: int, particles, step: int, lane: int = 0) -> np.ndarray:
    """Uniforms in the open interval (0, 1)."""
    bits = random_bits(seed, particles, step, lane)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _2_53


def normal(seed: int, particles, step: int, lane: int = 0) -> np.ndarray:
    """Standard normals by Box-Muller; consumes uniform lanes ``lane`` and ``lane + 1``."""
    u1 = uniform(seed, particles, step, lane)
    u2 = uniform(seed, particles, step, lane + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def poisson(seed: int, particles, step: int, mean: float, lane: int = 0, max_count: int = 64) -> np.ndarray:
    """Poisson(mean) counts by inversion of a single keyed uniform."""
    u = uniform(seed, particles, step, lane)
    counts = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-mean)
    cdf = np.full(u.shape, p)
    for k in range(1, max_count + 1):
        more = u > cdf
        if not more.any():
            break
        counts += more
        p = p * mean / k
        cdf = cdf + p
    return counts
