"""Energy-constrained leaky integrate-and-fire (eLIF) neurons on a grid.

Five channels per cell: membrane voltage ``V``, spikes ``S``, energy ``E``,
threshold offset ``V_th`` and spike trace ``A``. One tick runs, in order,

    integrate_voltage -> spike_and_reset -> energy_update -> trace_update
    -> threshold_update -> (every ``plasticity_every`` ticks) synaptic_plasticity

Spikes are per-tick unit impulses. The linear leaks of ``V``, ``E``, ``A``
and ``V_th`` use exact exponential steps, so with inputs held constant over
a tick each channel follows its closed-form solution. The effective firing
threshold is ``v_th0 + V_th``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit, prange

from .analysis import pearson
from .connectivity import INIT_STATE, INIT_TYPES, LocalConnectivity
from .errors import ConfigError
from .grid import Grid
from .rng import RandomField

CHANNELS = ("V", "S", "E", "V_th", "A")


@dataclass(frozen=True)
class SpikingParams:
    radius: int = 2
    p_e: float = 0.8
    tau: float = 10.0
    tau_e: float = 200.0
    tau_a: float = 20.0
    tau_th: float = 500.0
    dt: float = 1.0
    c: float = 5.0
    E_0: float = 1.0
    E_min: float = 0.2
    epsilon: float = 1.0
    s_c: float = 0.1
    rho_0: float = 0.02
    eta_th: float = 5.0
    v_th0: float = 1.0
    v_reset: float = 0.0
    k_exc: float = 4.0
    k_inh: float = 1000.0
    lr_e: float = 1e-3
    lr_i: float = 1e-3
    plasticity_every: int = 10
    stim_gain: float = 8.0

    def __post_init__(self):
        for name in ("tau", "tau_e", "tau_a", "tau_th", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be positive", key=name)
        if not 0 <= self.p_e <= 1:
            raise ConfigError(f"must lie in [0, 1], got {self.p_e}", key="p_e")
        if self.plasticity_every < 1:
            raise ConfigError("must be >= 1", key="plasticity_every")
        for name in ("k_exc", "k_inh", "lr_e", "lr_i", "s_c", "epsilon", "stim_gain"):
            if getattr(self, name) < 0:
                raise ConfigError("must be non-negative", key=name)


@dataclass
class SpikingState:
    """Channels of the spiking grid plus its connectivity.

    With ``shared_kernel`` set, every cell uses the same unsigned kernel
    scaled by ``k_exc`` / ``k_inh`` according to the presynaptic type, and
    ``conn`` is ``None``.
    """

    V: np.ndarray
    S: np.ndarray
    E: np.ndarray
    V_th: np.ndarray
    A: np.ndarray
    ei_sign: np.ndarray
    c: np.ndarray
    conn: LocalConnectivity | None = None
    params: SpikingParams = field(default_factory=SpikingParams)
    shared_kernel: np.ndarray | None = None

    @classmethod
    def create(
        cls, size: int, params: SpikingParams = SpikingParams(), seed: int = 0, homogeneous: bool = False
    ) -> "SpikingState":
        """Random E/I network with voltages spread uniformly in ``[0, v_th0)``."""
        shape = (size, size)
        rng = RandomField(seed)
        if homogeneous:
            k = 2 * params.radius + 1
            if params.radius < 1:
                raise ConfigError("must be >= 1", key="radius")
            if k > size:
                raise ConfigError(f"connectivity window {k} exceeds grid {size}x{size}", key="radius")
            ei = np.where(rng.field(INIT_TYPES, shape) < params.p_e, 1.0, -1.0).astype(np.float32)
            kernel = np.full((k, k), 1.0 / (k * k - 1), dtype=np.float32)
            kernel[params.radius, params.radius] = 0.0
            conn = None
        else:
            conn = LocalConnectivity.random(shape, params.radius, params.p_e, seed, params.k_exc, params.k_inh)
            ei = conn.ei_sign
            kernel = None
        V = (rng.field(INIT_STATE, shape) * params.v_th0).astype(np.float32)
        zeros = np.zeros(shape, dtype=np.float32)
        return cls(
            V=V,
            S=zeros.copy(),
            E=np.full(shape, params.E_0, dtype=np.float32),
            V_th=zeros.copy(),
            A=zeros.copy(),
            ei_sign=ei,
            c=np.full(shape, params.c, dtype=np.float32),
            conn=conn,
            params=params,
            shared_kernel=kernel,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.V.shape

    def to_grid(self) -> Grid:
        return Grid.from_channels(self.V, self.S, self.E, self.V_th, self.A)

    def copy(self) -> "SpikingState":
        return replace(
            self,
            V=self.V.copy(),
            S=self.S.copy(),
            E=self.E.copy(),
            V_th=self.V_th.copy(),
            A=self.A.copy(),
            ei_sign=self.ei_sign.copy(),
            c=self.c.copy(),
            conn=None if self.conn is None else self.conn.copy(),
        )

    def nbytes(self) -> int:
        arrays = [self.V, self.S, self.E, self.V_th, self.A, self.c, self.ei_sign]
        arrays.append(self.shared_kernel if self.conn is None else self.conn.weights)
        return int(sum(a.nbytes for a in arrays))


@njit(parallel=True, cache=True)
def _signed_source(ei_sign, S, k_exc, k_inh, r, src):
    """Signed presynaptic drive, padded by ``r`` wrapped columns on each side."""
    h, w = S.shape
    for y in prange(h):
        for xp in range(w + 2 * r):
            x = (xp - r) % w
            scale = k_exc if ei_sign[y, x] > 0 else -k_inh
            src[y, xp] = scale * S[y, x]
    return src


@njit(parallel=True, cache=True)
def _signed_input(weights, src, out):
    h, w, k, _ = weights.shape
    r = k // 2
    for y in prange(h):
        for x in range(w):
            acc = np.float32(0.0)
            for a in range(k):
                row = src[(y + a - r) % h]
                for b in range(k):
                    acc += weights[y, x, a, b] * row[x + b]
            out[y, x] = acc
    return out


@njit(parallel=True, cache=True)
def _shared_signed_input(kernel, src, out):
    # Taps outermost: the same per-cell summation order as _signed_input,
    # but the inner loop runs over contiguous rows.
    h, w = out.shape
    k = kernel.shape[0]
    r = k // 2
    for y in prange(h):
        acc = np.zeros(w, dtype=np.float32)
        for a in range(k):
            row = src[(y + a - r) % h]
            for b in range(k):
                kv = kernel[a, b]
                for x in range(w):
                    acc[x] += kv * row[x + b]
        out[y] = acc
    return out


def synaptic_input(state: SpikingState, out: np.ndarray | None = None, src: np.ndarray | None = None) -> np.ndarray:
    """``I_e = sum_j ei_sign(j) * W_ij * S_j`` over each cell's window.

    With a shared kernel the excitatory / inhibitory weights are the kernel
    scaled by ``k_exc`` / ``k_inh``.
    """
    h, w = state.shape
    if out is None:
        out = np.empty(state.shape, dtype=np.float32)
    if state.conn is None:
        p = state.params
        k_exc, k_inh, r = p.k_exc, p.k_inh, state.shared_kernel.shape[0] // 2
    else:
        k_exc, k_inh, r = 1.0, 1.0, state.conn.radius
    if src is None or src.shape != (h, w + 2 * r):
        src = np.empty((h, w + 2 * r), dtype=np.float32)
    _signed_source(state.ei_sign, state.S, np.float32(k_exc), np.float32(k_inh), r, src)
    if state.conn is None:
        return _shared_signed_input(state.shared_kernel, src, out)
    return _signed_input(state.conn.weights, src, out)


@njit(parallel=True, cache=True)
def _tick(V, S, E, V_th, A, I_e, c, extra, has_extra, k):
    """All per-cell passes of one tick, in place; same arithmetic as the separate ops."""
    dt_tau, v_th0, v_reset, e_min, e_rate, e_0, s_c, a_rate, th_rate, eta_th, rho_0 = k
    h, w = V.shape
    zero = np.float32(0.0)
    one = np.float32(1.0)
    for y in prange(h):
        for x in range(w):
            drive = I_e[y, x] + c[y, x]
            if has_extra:
                drive = drive + extra[y, x]
            v = V[y, x] + dt_tau * (drive - V[y, x])
            e = E[y, x]
            th = V_th[y, x]
            s = zero
            if v >= v_th0 + th and e >= e_min:
                s = one
                v = v_reset
            e = e + e_rate * (e_0 - e) - s_c * s
            if e < zero:
                e = zero
            a = A[y, x]
            a = a - a_rate * a + s
            th = th + th_rate * (eta_th * (a - rho_0) - th)
            V[y, x] = v
            S[y, x] = s
            E[y, x] = e
            A[y, x] = a
            V_th[y, x] = th


def relax_factor(dt: float, tau: float) -> float:
    """Exact one-step relaxation fraction ``1 - exp(-dt / tau)`` of a linear leak."""
    return -math.expm1(-dt / tau)


def integrate_voltage(state: SpikingState, dt: float | None = None, extra=None) -> np.ndarray:
    """Exponential step of ``tau dV/dt = -V + I_e + c`` driven by last tick's spikes.

    Input is held constant over the step, so the update is exact for it.
    """
    p = state.params
    dt = p.dt if dt is None else dt
    if dt <= 0:
        raise ConfigError("must be positive", key="dt")
    drive = synaptic_input(state) + state.c
    if extra is not None:
        drive = drive + extra
    return (state.V + np.float32(relax_factor(dt, p.tau)) * (drive - state.V)).astype(np.float32)


def spike_and_reset(state: SpikingState) -> tuple[np.ndarray, np.ndarray]:
    """Spike where ``V >= v_th0 + V_th`` and ``E >= E_min``; spiking cells reset."""
    p = state.params
    fired = (state.V >= p.v_th0 + state.V_th) & (state.E >= p.E_min)
    S = fired.astype(np.float32)
    V = np.where(fired, np.float32(p.v_reset), state.V).astype(np.float32)
    return S, V


def energy_update(state: SpikingState, dt: float | None = None) -> np.ndarray:
    """Relax toward ``E_0`` at rate ``epsilon / tau_e``; each spike costs ``s_c``. Floored at 0."""
    p = state.params
    dt = p.dt if dt is None else dt
    k = np.float32(relax_factor(dt * p.epsilon, p.tau_e))
    E = state.E + k * (np.float32(p.E_0) - state.E) - np.float32(p.s_c) * state.S
    return np.maximum(E, 0).astype(np.float32)


def trace_update(state: SpikingState, dt: float | None = None) -> np.ndarray:
    """Leaky spike trace: decays with ``tau_a`` and jumps by 1 per spike."""
    p = state.params
    dt = p.dt if dt is None else dt
    return (state.A - np.float32(relax_factor(dt, p.tau_a)) * state.A + state.S).astype(np.float32)


def threshold_update(state: SpikingState, dt: float | None = None) -> np.ndarray:
    """Exponential step of ``tau_th dV_th/dt = -V_th + eta_th (A - rho_0)``."""
    p = state.params
    dt = p.dt if dt is None else dt
    target = np.float32(p.eta_th) * (state.A - np.float32(p.rho_0))
    return (state.V_th + np.float32(relax_factor(dt, p.tau_th)) * (target - state.V_th)).astype(np.float32)


def synaptic_plasticity(state: SpikingState, lr_e: float, lr_i: float, normalize: str = "excitatory"):
    """Trace-based plasticity followed by synapse-type normalization.

    Excitatory: ``dW = lr_e * (A_pre * S_post + S_pre * A_post)``.
    Inhibitory: ``dW = lr_i * A_pre * (A_post - rho_0 * tau_a)``, floored at 0.
    """
    if state.conn is None:
        raise ConfigError("plasticity requires per-cell kernels", key="plasticity")
    p = state.params
    conn = state.conn
    conn.update(+1, state.A, state.S, lr_e)
    conn.update(+1, state.S, state.A, lr_e)
    conn.update(-1, state.A, state.A, lr_i, offset=p.rho_0 * p.tau_a)
    if normalize == "both":
        conn.normalize(p.k_exc, p.k_inh)
    elif normalize == "excitatory":
        conn.normalize(p.k_exc, None)
    elif normalize != "none":
        raise ConfigError(f"unknown normalization {normalize!r}", key="normalize")
    return conn


@dataclass
class SpikingNetwork:
    state: SpikingState
    plasticity: bool = False
    normalize: str = "excitatory"

    def __post_init__(self):
        if self.normalize not in ("both", "excitatory", "none"):
            raise ConfigError(f"unknown normalization {self.normalize!r}", key="normalize")
        if self.plasticity and self.state.conn is None:
            raise ConfigError("plasticity requires per-cell kernels", key="plasticity")
        self.t = 0
        self._input = np.empty(self.state.shape, dtype=np.float32)
        r = self.state.params.radius
        self._src = np.empty((self.state.shape[0], self.state.shape[1] + 2 * r), dtype=np.float32)

    @classmethod
    def create(cls, size: int, params: SpikingParams = SpikingParams(), seed: int = 0, homogeneous: bool = False, **kw):
        return cls(SpikingState.create(size, params, seed, homogeneous), **kw)

    def _constants(self) -> tuple:
        p = self.state.params
        f = np.float32
        return (
            f(relax_factor(p.dt, p.tau)),
            f(p.v_th0),
            f(p.v_reset),
            f(p.E_min),
            f(relax_factor(p.dt * p.epsilon, p.tau_e)),
            f(p.E_0),
            f(p.s_c),
            f(relax_factor(p.dt, p.tau_a)),
            f(relax_factor(p.dt, p.tau_th)),
            f(p.eta_th),
            f(p.rho_0),
        )

    def step(self, stimulus: np.ndarray | None = None) -> SpikingState:
        """One tick: integrate, spike/reset, energy, trace, threshold, then plasticity on cadence."""
        st = self.state
        p = st.params
        synaptic_input(st, self._input, self._src)
        has_extra = stimulus is not None
        extra = np.ascontiguousarray(stimulus, dtype=np.float32) if has_extra else self._input
        _tick(st.V, st.S, st.E, st.V_th, st.A, self._input, st.c, extra, has_extra, self._constants())
        self.t += 1
        if self.plasticity and self.t % p.plasticity_every == 0:
            synaptic_plasticity(st, p.lr_e, p.lr_i, self.normalize)
        return st

    def run(self, ticks: int, stimulus=None, raster: list | None = None, callback=None) -> SpikingState:
        for _ in range(ticks):
            self.step(stimulus)
            if raster is not None:
                raster.append(self.state.S.astype(bool))
            if callback is not None:
                callback(self.t, self)
        return self.state


@dataclass
class SpikeStats:
    rates: np.ndarray
    cv: np.ndarray  # CV per cell with enough ISIs
    mean_cv: float
    synchrony: float
    rate_cv: float
    n_cv_cells: int
    empty: bool


def spike_statistics(raster: np.ndarray, min_isis: int = 5, min_window: int = 1000) -> SpikeStats:
    """Rates, ISI coefficients of variation and a population synchrony index.

    ``raster`` is ``(ticks, ...)`` of 0/1. The synchrony index is the variance
    of the population-mean rate divided by the mean per-cell variance, scaled
    by the number of cells, so independent cells give about 1.
    """
    raster = np.asarray(raster)
    ticks = raster.shape[0]
    if ticks < min_window:
        raise ConfigError(f"window of {ticks} ticks is shorter than {min_window}", key="window")
    flat = raster.reshape(ticks, -1).astype(bool)
    n = flat.shape[1]
    counts = flat.sum(axis=0)
    rates = counts / ticks
    cvs = np.full(n, np.nan)
    t_idx, c_idx = np.nonzero(flat)
    order = np.lexsort((t_idx, c_idx))
    t_idx, c_idx = t_idx[order], c_idx[order]
    bounds = np.searchsorted(c_idx, np.arange(n + 1))
    for cell in np.flatnonzero(counts >= min_isis + 1):
        isi = np.diff(t_idx[bounds[cell] : bounds[cell + 1]])
        m = isi.mean()
        cvs[cell] = isi.std() / m if m > 0 else np.nan
    valid = np.isfinite(cvs)
    if counts.sum() == 0:
        return SpikeStats(rates.reshape(raster.shape[1:]), cvs.reshape(raster.shape[1:]), math.nan, math.nan, math.nan, 0, True)
    pop = flat.mean(axis=1)
    cell_var = flat.var(axis=0).mean()
    synchrony = float(pop.var() * n / cell_var) if cell_var > 0 else math.nan
    mean_rate = rates.mean()
    return SpikeStats(
        rates=rates.reshape(raster.shape[1:]),
        cv=cvs.reshape(raster.shape[1:]),
        mean_cv=float(np.mean(cvs[valid])) if valid.any() else math.nan,
        synchrony=synchrony,
        rate_cv=float(rates.std() / mean_rate) if mean_rate > 0 else math.nan,
        n_cv_cells=int(valid.sum()),
        empty=False,
    )


@dataclass
class StimulusRecording:
    ticks: np.ndarray
    corr_threshold: np.ndarray  # corr(V_th, image) per recorded tick
    corr_rate: np.ndarray  # corr(windowed spike rate, image)
    threshold_maps: dict
    rate_maps: dict
    image_defined: bool


def present_stimulus(
    net: SpikingNetwork,
    image: np.ndarray,
    t_on: int,
    t_off: int,
    total: int,
    record_every: int = 10,
    rate_window: int = 100,
    callback=None,
) -> StimulusRecording:
    """Add ``stim_gain * image`` to the input current during ``[t_on, t_off)``.

    Ticks are counted from the call. Records the correlation of the threshold
    map and of a trailing spike-rate map with the image, plus snapshots of
    both maps just before onset, just before offset, and at the end.
    ``callback(tick, net)`` runs after every tick.
    """
    st = net.state
    image = np.asarray(image, dtype=np.float64)
    if image.shape != st.shape:
        raise ConfigError(f"image shape {image.shape} does not match grid {st.shape}", key="image")
    if not 0 <= t_on <= t_off <= total:
        raise ConfigError("need 0 <= t_on <= t_off <= total", key="stim")
    defined = bool(np.ptp(image) > 0)
    stim = (st.params.stim_gain * image).astype(np.float32)
    ticks, c_th, c_rate = [], [], []
    window = np.zeros((rate_window,) + st.shape, dtype=np.float32)
    th_maps, rate_maps = {}, {}
    for t in range(total):
        if t == t_on:
            th_maps["pre"] = st.V_th.copy()
            rate_maps["pre"] = window.mean(axis=0)
        if t == t_off and t_off > t_on:
            th_maps["during"] = st.V_th.copy()
            rate_maps["during"] = window.mean(axis=0)
        net.step(stim if t_on <= t < t_off else None)
        window[t % rate_window] = st.S
        if callback is not None:
            callback(t + 1, net)
        if (t + 1) % record_every == 0:
            ticks.append(t + 1)
            c_th.append(pearson(st.V_th, image) if defined else math.nan)
            c_rate.append(pearson(window.mean(axis=0), image) if defined else math.nan)
    th_maps["post"] = st.V_th.copy()
    rate_maps["post"] = window.mean(axis=0)
    return StimulusRecording(np.array(ticks), np.array(c_th), np.array(c_rate), th_maps, rate_maps, defined)
