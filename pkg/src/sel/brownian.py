"""Reproducible, refinable Brownian increments.

Gaussian draws come from a counter-based generator: the splitmix64
finaliser applied to ``key + (i + 1) * GOLDEN`` gives the i-th 64-bit
word of a stream, and Box-Muller turns pairs of words into normals.
Every draw is addressed by ``(seed, level, index)`` so a path can be
regenerated or refined without replaying earlier draws.

The finaliser, bit-exact (all arithmetic mod 2**64)::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

Increments are rounded to multiples of 2**-48 so that halving a step
(Brownian bridge split ``a + b = dW``) is exact in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
QUANTUM = 2.0 ** -48


def mix64(z):
    """splitmix64 finaliser on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z):
    """Vectorised finaliser on a uint64 array (wraps modulo 2**64)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_C1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_C2)
    return z ^ (z >> np.uint64(31))


def _stream_key(seed, level):
    return mix64((seed & MASK64) ^ mix64((level + 1) * GOLDEN))


def _words(key, start, count):
    idx = np.arange(start, start + count, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + idx * np.uint64(GOLDEN)
    return mix64_array(z)


def standard_normals(seed, level, start, count):
    """Normals number ``start .. start+count-1`` of stream (seed, level)."""
    w = _words(_stream_key(seed, level), 2 * start, 2 * count)
    top = (w >> np.uint64(11)).astype(np.float64)
    u1 = (top[0::2] + 1.0) * 2.0 ** -53  # in (0, 1]
    u2 = top[1::2] * 2.0 ** -53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def quantize(x):
    return np.round(np.asarray(x) / QUANTUM) * QUANTUM


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Increments of one Wiener path on the uniform mesh ``k * dt``."""

    seed: int
    dt: float
    increments: np.ndarray
    level: int = 0

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def count(self):
        return self.increments.shape[0]

    @property
    def horizon(self):
        return self.count * self.dt

    def values(self):
        """W at the mesh points 0, dt, ..., count*dt."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def sample_brownian(seed, dt, count):
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = standard_normals(seed, 0, 0, count)
    return BrownianPath(int(seed) & MASK64, float(dt), quantize(np.sqrt(dt) * xi), 0)


def refine(path):
    """Halve the step by sampling the Brownian bridge midpoint of every increment.

    The two halves of increment k are ``a = dW/2 + sqrt(dt)/2 * xi`` and
    ``b = dW - a``; both are multiples of the quantum, so ``a + b``
    reproduces ``dW`` exactly.
    """
    level = path.level + 1
    xi = standard_normals(path.seed, level, 0, path.count)
    dW = path.increments
    a = quantize(0.5 * dW + 0.5 * np.sqrt(path.dt) * xi)
    b = dW - a
    fine = np.empty(2 * path.count)
    fine[0::2] = a
    fine[1::2] = b
    return BrownianPath(path.seed, path.dt / 2.0, fine, level)


def zero_path(dt, count):
    return BrownianPath(0, float(dt), np.zeros(count), 0)
