"""Per-cell local connectivity shared by the neural models.

``weights[y, x, a, b]`` is the non-negative weight of the connection *into*
cell ``(x, y)`` from the presynaptic cell at offset ``(b - R, a - R)``. The
sign of every connection is the presynaptic cell's ``ei_sign`` (Dale's
principle), so weights themselves never change sign.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import ConfigError
from .rng import RandomField

# Reserved step indices for initial conditions (simulation steps never reach them).
INIT_TYPES = 2**63
INIT_WEIGHTS = 2**63 + 1
INIT_STATE = 2**63 + 2


@njit(parallel=True, cache=True)
def recurrent_input(weights, src, out):
    """``out[y, x] = sum_ab weights[y, x, a, b] * src[y + a - R, x + b - R]``."""
    h, w, k, _ = weights.shape
    r = k // 2
    for y in prange(h):
        for x in range(w):
            acc = np.float32(0.0)
            for a in range(k):
                yy = (y + a - r) % h
                for b in range(k):
                    acc += weights[y, x, a, b] * src[yy, (x + b - r) % w]
            out[y, x] = acc
    return out


@njit(parallel=True, cache=True)
def shared_input(kernel, src, out):
    """Same as :func:`recurrent_input` with one kernel shared by every cell."""
    h, w = src.shape
    k = kernel.shape[0]
    r = k // 2
    for y in prange(h):
        for x in range(w):
            acc = np.float32(0.0)
            for a in range(k):
                yy = (y + a - r) % h
                for b in range(k):
                    acc += kernel[a, b] * src[yy, (x + b - r) % w]
            out[y, x] = acc
    return out


@njit(parallel=True, cache=True)
def pairwise_update(weights, ei_sign, which, pre, post, offset, lr, floor_zero):
    """``W += lr * pre[i] * (post[j] - offset)`` for presynaptic type ``which``.

    ``i`` runs over presynaptic cells in the window of postsynaptic cell ``j``;
    connections from the other type are untouched.
    """
    h, w, k, _ = weights.shape
    r = k // 2
    for y in prange(h):
        for x in range(w):
            drive = lr * (post[y, x] - offset)
            if drive == 0.0:
                continue
            for a in range(k):
                yy = (y + a - r) % h
                for b in range(k):
                    if a == r and b == r:
                        continue
                    xx = (x + b - r) % w
                    if ei_sign[yy, xx] != which:
                        continue
                    v = weights[y, x, a, b] + drive * pre[yy, xx]
                    if floor_zero and v < 0.0:
                        v = 0.0
                    weights[y, x, a, b] = v


@njit(parallel=True, cache=True)
def _normalize_incoming(weights, ei_sign, k_exc, k_inh):
    h, w, k, _ = weights.shape
    r = k // 2
    for y in prange(h):
        for x in range(w):
            se = 0.0
            si = 0.0
            for a in range(k):
                yy = (y + a - r) % h
                for b in range(k):
                    if ei_sign[yy, (x + b - r) % w] > 0:
                        se += weights[y, x, a, b]
                    else:
                        si += weights[y, x, a, b]
            fe = k_exc / se if se > 0.0 and k_exc >= 0.0 else 1.0
            fi = k_inh / si if si > 0.0 and k_inh >= 0.0 else 1.0
            for a in range(k):
                yy = (y + a - r) % h
                for b in range(k):
                    if ei_sign[yy, (x + b - r) % w] > 0:
                        weights[y, x, a, b] *= fe
                    else:
                        weights[y, x, a, b] *= fi


@njit(parallel=True, cache=True)
def outgoing_sums(weights, out):
    """Total outgoing weight of every presynaptic cell."""
    h, w, k, _ = weights.shape
    r = k // 2
    for y in prange(h):
        for x in range(w):
            acc = 0.0
            for a in range(k):
                # the postsynaptic cell that sees (y, x) at offset (a, b)
                yy = (y - a + r) % h
                for b in range(k):
                    acc += weights[yy, (x - b + r) % w, a, b]
            out[y, x] = acc
    return out


@dataclass
class LocalConnectivity:
    """Incoming weight kernels plus the E/I type of every cell.

    Parameters
    ----------
    weights : (H, W, k, k) float32
    ei_sign : (H, W) array of +1 (excitatory) / -1 (inhibitory)
    """

    weights: np.ndarray
    ei_sign: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        self.ei_sign = np.ascontiguousarray(self.ei_sign, dtype=np.float32)
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ConfigError(f"weights must have shape (H, W, k, k), got {self.weights.shape}")
        if self.weights.shape[2] % 2 == 0:
            raise ConfigError("kernel side must be odd")
        if self.weights.shape[:2] != self.ei_sign.shape:
            raise ConfigError("ei_sign shape does not match the weight grid")
        if not np.all(np.abs(self.ei_sign) == 1):
            raise ConfigError("ei_sign entries must be +1 or -1")

    @classmethod
    def random(
        cls,
        shape: tuple[int, int],
        radius: int,
        p_exc: float,
        seed: int,
        k_exc: float = 1.0,
        k_inh: float = 1.0,
    ) -> "LocalConnectivity":
        """Random types (``P(excitatory) = p_exc``) and i.i.d. uniform weights.

        Weights are scaled so that the *expected* incoming excitatory total is
        ``p_exc * k_exc`` and the inhibitory total ``(1 - p_exc) * k_inh``.
        """
        if radius < 1:
            raise ConfigError("must be >= 1", key="radius")
        if not 0 <= p_exc <= 1:
            raise ConfigError(f"must lie in [0, 1], got {p_exc}", key="p_e")
        h, w = shape
        k = 2 * radius + 1
        if k > min(h, w):
            raise ConfigError(f"connectivity window {k} exceeds grid {w}x{h}", key="radius")
        rng = RandomField(seed)
        ei = np.where(rng.field(INIT_TYPES, shape) < p_exc, 1.0, -1.0).astype(np.float32)
        n_in = k * k - 1
        u = np.stack(
            [rng.field(INIT_WEIGHTS, shape, draw=d) for d in range(k * k)], axis=-1
        ).reshape(h, w, k, k)
        pre_sign = presynaptic_signs(ei, radius)
        scale = np.where(pre_sign > 0, k_exc, k_inh) * 2.0 / n_in
        weights = (u * scale).astype(np.float32)
        weights[:, :, radius, radius] = 0.0
        return cls(weights, ei)

    @classmethod
    def homogeneous(cls, kernel: np.ndarray, ei_sign: np.ndarray) -> "LocalConnectivity":
        h, w = ei_sign.shape
        weights = np.broadcast_to(np.asarray(kernel, dtype=np.float32), (h, w) + kernel.shape)
        return cls(weights.copy(), ei_sign)

    @property
    def radius(self) -> int:
        return self.weights.shape[2] // 2

    @property
    def shape(self) -> tuple[int, int]:
        return self.ei_sign.shape

    def copy(self) -> "LocalConnectivity":
        return LocalConnectivity(self.weights.copy(), self.ei_sign.copy())

    def input(self, src: np.ndarray) -> np.ndarray:
        out = np.empty(self.shape, dtype=np.float32)
        return recurrent_input(self.weights, np.ascontiguousarray(src, dtype=np.float32), out)

    def presynaptic_signs(self) -> np.ndarray:
        return presynaptic_signs(self.ei_sign, self.radius)

    def effective_weights(self, inh_gain: float = 1.0) -> np.ndarray:
        """Signed weights; inhibitory connections are scaled by ``inh_gain``."""
        sign = self.presynaptic_signs()
        return self.weights * np.where(sign > 0, 1.0, -inh_gain).astype(np.float32)

    def incoming_sums(self) -> np.ndarray:
        return self.weights.sum(axis=(2, 3), dtype=np.float64)

    def incoming_sums_by_type(self) -> tuple[np.ndarray, np.ndarray]:
        sign = self.presynaptic_signs()
        exc = np.where(sign > 0, self.weights, 0).sum(axis=(2, 3), dtype=np.float64)
        inh = np.where(sign < 0, self.weights, 0).sum(axis=(2, 3), dtype=np.float64)
        return exc, inh

    def outgoing_sums(self) -> np.ndarray:
        return outgoing_sums(self.weights, np.empty(self.shape, dtype=np.float64))

    def update(self, which: int, pre, post, lr: float, offset: float = 0.0, floor_zero: bool = True):
        if lr == 0:
            return self
        pairwise_update(
            self.weights,
            self.ei_sign,
            np.float32(which),
            np.ascontiguousarray(pre, dtype=np.float32),
            np.ascontiguousarray(post, dtype=np.float32),
            np.float32(offset),
            np.float32(lr),
            floor_zero,
        )
        return self

    def normalize(self, k_exc: float | None = 1.0, k_inh: float | None = 1.0):
        """Rescale each cell's incoming E and I weights to totals ``k_exc`` and ``k_inh``.

        A target of ``None`` leaves that synapse type alone. Cells whose
        incoming weights of a type sum to zero are left unchanged.
        """
        k_exc = -1.0 if k_exc is None else float(k_exc)
        k_inh = -1.0 if k_inh is None else float(k_inh)
        _normalize_incoming(self.weights, self.ei_sign, k_exc, k_inh)
        return self


def presynaptic_signs(ei_sign: np.ndarray, radius: int) -> np.ndarray:
    """``out[y, x, a, b]`` = type of the cell feeding ``(x, y)`` at offset ``(a, b)``."""
    k = 2 * radius + 1
    h, w = ei_sign.shape
    out = np.empty((h, w, k, k), dtype=ei_sign.dtype)
    for a in range(k):
        for b in range(k):
            out[:, :, a, b] = np.roll(ei_sign, shift=(radius - a, radius - b), axis=(0, 1))
    return out


def dense_matrix(conn: LocalConnectivity) -> np.ndarray:
    """Dense ``(N, N)`` matrix ``M[post, pre]`` of raw weights (small grids only)."""
    h, w = conn.shape
    r = conn.radius
    k = 2 * r + 1
    n = h * w
    mat = np.zeros((n, n))
    for y in range(h):
        for x in range(w):
            for a in range(k):
                for b in range(k):
                    pre = ((y + a - r) % h) * w + (x + b - r) % w
                    mat[y * w + x, pre] += conn.weights[y, x, a, b]
    return mat
