"""Counter-based random numbers (Philox4x32-10).

Every draw is a pure function of ``(seed, step, cell, draw)``, so results do
not depend on how cells are distributed over worker threads or in which order
they are visited.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_TO_UNIT = 1.0 / 4294967296.0


@njit(inline="always", cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block. All arguments are uint32."""
    for _ in range(10):
        p0 = np.uint64(c0) * _M0
        p1 = np.uint64(c2) * _M1
        hi0 = np.uint32(p0 >> np.uint64(32))
        lo0 = np.uint32(p0 & _MASK32)
        hi1 = np.uint32(p1 >> np.uint64(32))
        lo1 = np.uint32(p1 & _MASK32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


@njit(inline="always", cache=True)
def uniform_at(seed, step, cell, draw):
    """Uniform float64 in [0, 1) for one ``(seed, step, cell, draw)`` tuple.

    Draws are grouped four to a Philox block; ``draw // 4`` selects the block
    and ``draw % 4`` the lane.
    """
    seed = np.uint64(seed)
    step = np.uint64(step)
    k0 = np.uint32(seed & _MASK32)
    k1 = np.uint32(seed >> np.uint64(32))
    c0 = np.uint32(step & _MASK32)
    c1 = np.uint32(step >> np.uint64(32))
    c2 = np.uint32(np.uint64(cell) & _MASK32)
    c3 = np.uint32(np.uint64(draw) >> np.uint64(2))
    x0, x1, x2, x3 = philox4x32(c0, c1, c2, c3, k0, k1)
    lane = draw & 3
    if lane == 0:
        x = x0
    elif lane == 1:
        x = x1
    elif lane == 2:
        x = x2
    else:
        x = x3
    return np.float64(x) * _TO_UNIT


@njit(inline="always", cache=True)
def normal_at(seed, step, cell, draw):
    """Standard normal via Box-Muller on draws ``draw`` and ``draw + 1``."""
    u1 = uniform_at(seed, step, cell, draw)
    u2 = uniform_at(seed, step, cell, draw + 1)
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)


@njit(parallel=True, cache=True)
def _uniform_field(seed, step, n_cells, draw, out):
    for i in prange(n_cells):
        out[i] = uniform_at(seed, step, i, draw)


@njit(cache=True)
def _uniform_draws(seed, step, cell, n_draws, out):
    for d in range(n_draws):
        out[d] = uniform_at(seed, step, cell, d)


@dataclass(frozen=True)
class RandomField:
    """Keyed source of uniforms addressed by ``(step, cell, draw)``.

    Parameters
    ----------
    seed : int
        64-bit key. Two fields with the same seed produce identical values.
    """

    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")

    def uniforms(self, step: int, cell: int, n_draws: int) -> np.ndarray:
        out = np.empty(n_draws, dtype=np.float64)
        _uniform_draws(np.uint64(self.seed), np.uint64(step), np.uint64(cell), n_draws, out)
        return out

    def field(self, step: int, shape: tuple[int, int], draw: int = 0) -> np.ndarray:
        """One uniform per cell of a ``(height, width)`` grid, row-major cell index."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        _uniform_field(np.uint64(self.seed), np.uint64(step), n, draw, out)
        return out.reshape(shape)


def uniforms(rng: RandomField, step: int, cell: int, n_draws: int) -> np.ndarray:
    return rng.uniforms(step, cell, n_draws)
