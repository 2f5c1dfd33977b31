"""2D Ising model with self-organizing temperature control.

Spins evolve under checkerboard Metropolis dynamics. The temperature either
stays fixed, adapts per cell from the local magnetization (``mode="local"``),
or adapts globally from the total magnetization (``mode="global"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .engine import checkerboard_mask
from .errors import ConfigError
from .grid import Grid, laplacian, neighbor_sum, neighborhood_mean
from .rng import RandomField, normal_at, uniform_at

T_MIN = 1e-3
T_MAX = 1e3
T_CRITICAL = 2.0 / math.log(1.0 + math.sqrt(2.0))

# Draw slots within one cell's stream at a given step.
DRAW_SELECT = 0
DRAW_ACCEPT = 1
# Reserved step index for initial conditions; Metropolis steps never reach it.
INIT_STEP = 2**63

MODES = ("local", "global", "fixed")


@dataclass(frozen=True)
class SocParams:
    """Coefficients of the temperature adaptation rules.

    alpha : growth from squared local (or absolute global) magnetization
    epsilon : decay rate
    diffusion : temperature diffusion coefficient
    eta : weight of the old temperature when blending old and new values
    """

    alpha: float = 0.1
    epsilon: float = 0.02
    diffusion: float = 1.0
    eta: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "epsilon", "diffusion", "eta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"must be non-negative, got {getattr(self, name)}", key=name)
        if self.eta > 1:
            raise ConfigError(f"must lie in [0, 1], got {self.eta}", key="eta")


@dataclass
class IsingState:
    """Spins in {-1, +1} plus either a temperature field or a scalar temperature."""

    spins: np.ndarray
    temps: np.ndarray | float
    J: float = 1.0
    clamp_count: int = 0

    def __post_init__(self):
        self.spins = np.ascontiguousarray(self.spins, dtype=np.float32)
        if not np.isscalar(self.temps):
            self.temps = np.ascontiguousarray(self.temps, dtype=np.float32)
            if self.temps.shape != self.spins.shape:
                raise ConfigError(
                    f"temperature field shape {self.temps.shape} != spin shape {self.spins.shape}"
                )
        else:
            self.temps = float(self.temps)

    @property
    def is_local(self) -> bool:
        return not np.isscalar(self.temps)

    def temperature_field(self) -> np.ndarray:
        if self.is_local:
            return self.temps
        return np.full(self.spins.shape, self.temps, dtype=np.float32)

    def mean_temperature(self) -> float:
        return float(np.mean(self.temps, dtype=np.float64))

    def abs_magnetization(self) -> float:
        return abs(float(np.mean(self.spins, dtype=np.float64)))

    def energy_per_spin(self) -> float:
        return total_energy(self.spins, self.J) / self.spins.size

    def to_grid(self) -> Grid:
        """Channels ``[spins, temps]``: the cell state followed by its rule parameter."""
        return Grid.from_channels(self.spins, self.temperature_field())

    def copy(self) -> "IsingState":
        temps = self.temps.copy() if self.is_local else self.temps
        return IsingState(self.spins.copy(), temps, self.J, self.clamp_count)


def random_spins(shape, seed: int) -> np.ndarray:
    u = RandomField(seed).field(INIT_STEP, shape)
    return np.where(u < 0.5, 1.0, -1.0).astype(np.float32)


def total_energy(spins: np.ndarray, J: float = 1.0) -> float:
    """``-J * sum over nearest-neighbor bonds of s_i s_j`` on the torus.

    Each cell contributes its right and down bond, so every bond is counted
    once (for L = 2 the two bonds between a pair are distinct bonds).
    """
    s = np.asarray(spins, dtype=np.float64)
    right = np.roll(s, -1, axis=1)
    down = np.roll(s, -1, axis=0)
    return float(-J * np.sum(s * (right + down)))


def delta_energy(spins: np.ndarray, x: int, y: int, J: float = 1.0) -> float:
    """Energy change from flipping the spin at ``(x, y)``."""
    h, w = spins.shape
    s = float(spins[y, x])
    nb = (
        float(spins[(y - 1) % h, x])
        + float(spins[(y + 1) % h, x])
        + float(spins[y, (x - 1) % w])
        + float(spins[y, (x + 1) % w])
    )
    return 2.0 * J * s * nb


def delta_energy_field(spins: np.ndarray, J: float = 1.0) -> np.ndarray:
    s = np.asarray(spins, dtype=np.float64)
    return 2.0 * J * s * neighbor_sum(s)


def metropolis_step(
    state: IsingState, mask: np.ndarray, rng: RandomField, step: int
) -> IsingState:
    """One synchronous Metropolis update of the masked cells.

    Flips with ``dE <= 0`` are always accepted; others with probability
    ``exp(-dE / T)`` using the cell's own temperature in local mode. All
    energy differences are taken from the incoming configuration.
    """
    new = state.copy()
    temps = state.temperature_field().astype(np.float64)
    bad = temps <= 0
    if bad.any():
        new.clamp_count += int(np.count_nonzero(bad & mask))
        temps = np.where(bad, T_MIN, temps)
    dE = delta_energy_field(state.spins, state.J)
    u = rng.field(step, state.spins.shape, draw=DRAW_ACCEPT)
    with np.errstate(over="ignore"):
        accept = (dE <= 0) | (u < np.exp(-dE / temps))
    flip = mask & accept
    new.spins[flip] = -new.spins[flip]
    return new


@njit(parallel=True, cache=True)
def _checkerboard_kernel(spins, temps, t_scalar, J, seed, step, parity, fraction):
    """In-place Metropolis update of one sub-lattice.

    Cells of one parity never neighbor each other (even side lengths), so the
    in-place write is equivalent to a double-buffered update. Returns the
    number of non-positive temperatures that had to be clamped.
    """
    h, w = spins.shape
    clamped = 0
    for y in prange(h):
        ym = (y - 1) % h
        yp = (y + 1) % h
        x0 = (parity + y) & 1
        for x in range(x0, w, 2):
            cell = y * w + x
            if fraction < 1.0 and uniform_at(seed, step, cell, 0) >= fraction:
                continue
            s = np.float64(spins[y, x])
            nb = (
                np.float64(spins[ym, x])
                + np.float64(spins[yp, x])
                + np.float64(spins[y, (x - 1) % w])
                + np.float64(spins[y, (x + 1) % w])
            )
            dE = 2.0 * J * s * nb
            if dE <= 0.0:
                spins[y, x] = -spins[y, x]
                continue
            T = t_scalar if t_scalar > 0.0 else np.float64(temps[y, x])
            if T <= 0.0:
                T = 1e-3
                clamped += 1
            if uniform_at(seed, step, cell, 1) < np.exp(-dE / T):
                spins[y, x] = -spins[y, x]
    return clamped


def checkerboard_step(
    state: IsingState, seed: int, step: int, fraction: float = 1.0
) -> IsingState:
    """Fast in-place equivalent of ``metropolis_step`` with a checkerboard mask.

    The sub-lattice is ``step % 2`` and the mask draws match
    ``checkerboard_mask(..., rng=RandomField(seed), step_index=step)``.
    """
    h, w = state.spins.shape
    if h % 2 or w % 2:
        raise ConfigError("checkerboard updates need even grid dimensions", key="size")
    if state.is_local:
        temps, t_scalar = state.temps, 0.0
    else:
        temps, t_scalar = np.empty((1, 1), dtype=np.float32), state.temps
        if t_scalar <= 0:
            state.clamp_count += 1
            t_scalar = T_MIN
    state.clamp_count += _checkerboard_kernel(
        state.spins, temps, float(t_scalar), float(state.J), np.uint64(seed), int(step), step % 2, float(fraction)
    )
    return state


def local_magnetization(spins: np.ndarray, patch_size: int | None = 5) -> np.ndarray:
    """Mean spin around each cell.

    ``patch_size=None`` uses the four Von Neumann neighbors (center excluded);
    an odd integer uses the full square patch including the center.
    """
    if patch_size is None:
        return neighborhood_mean(spins, 3, exclude_center=True, von_neumann=True)
    return neighborhood_mean(spins, patch_size, exclude_center=False)


def local_temperature_update(
    state: IsingState,
    params: SocParams,
    patch_size: int | None = 5,
    t_min: float = T_MIN,
    t_max: float = T_MAX,
) -> np.ndarray:
    """New per-cell temperatures from growth, decay and diffusion.

    ``dT = alpha*m**2 - epsilon*T + D*lap(T)/4`` where ``lap/4`` is the
    neighbor mean minus the cell value, and the result is blended with the old
    temperature: ``T' = eta*T + (1 - eta)*(T + dT)``. Homogeneous fixed point:
    ``T* = alpha*m**2/epsilon``.
    """
    if not state.is_local:
        raise ConfigError("local temperature update needs a temperature field")
    T = state.temps.astype(np.float64)
    m = local_magnetization(state.spins.astype(np.float64), patch_size)
    dT = params.alpha * m * m - params.epsilon * T + params.diffusion * laplacian(T) / 4.0
    new = params.eta * T + (1.0 - params.eta) * (T + dT)
    return np.clip(new, t_min, t_max).astype(np.float32)


def global_noise(rng: RandomField, step: int, params: SocParams, linear_size: int) -> float:
    """Folded-normal decay noise: ``|N(epsilon, (epsilon/L)**2)|``."""
    n_cells = linear_size * linear_size
    z = normal_at(np.uint64(rng.seed), np.uint64(step), np.uint64(n_cells), 0)
    return abs(params.epsilon + params.epsilon / linear_size * z)


def global_temperature_update(
    state: IsingState,
    params: SocParams,
    rng: RandomField,
    step: int,
    t_min: float = T_MIN,
    t_max: float = T_MAX,
) -> float:
    """Scalar temperature driven by ``dT = alpha*|M| - xi*T**2``.

    ``xi`` comes from :func:`global_noise` and the increment is blended with
    the old value as in the local rule.
    """
    if state.is_local:
        raise ConfigError("global temperature update needs a scalar temperature")
    L = state.spins.shape[1]
    M = state.abs_magnetization()
    xi = global_noise(rng, step, params, L)
    T = state.temps
    new = T + (1.0 - params.eta) * (params.alpha * M - xi * T * T)
    return float(min(max(new, t_min), t_max))


def exact_observables(L: int, T: float, J: float = 1.0) -> tuple[float, float]:
    """Exact ``(<|M|>, <E>/N)`` on an ``L x L`` torus by enumerating all states."""
    if L not in (2, 3, 4):
        raise ConfigError(f"exact enumeration supports L in {{2, 3, 4}}, got {L}", key="L")
    if T <= 0:
        raise ConfigError("temperature must be positive", key="T")
    n = L * L
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    s = (2 * bits - 1).reshape(-1, L, L).astype(np.float64)
    energy = -J * np.sum(s * (np.roll(s, -1, axis=2) + np.roll(s, -1, axis=1)), axis=(1, 2))
    absm = np.abs(s.sum(axis=(1, 2))) / n
    logw = -(energy - energy.min()) / T
    w = np.exp(logw)
    z = w.sum()
    return float((w * absm).sum() / z), float((w * energy).sum() / z / n)


@njit(cache=True)
def _sample_sweeps(spins, T, J, seed, start_step, n_sweeps, fraction, out_absm, out_e):
    h, w = spins.shape
    n = h * w
    step = start_step
    for k in range(n_sweeps):
        for _ in range(2):
            parity = step & 1
            for y in range(h):
                for x in range((parity + y) & 1, w, 2):
                    cell = y * w + x
                    if fraction < 1.0 and uniform_at(seed, step, cell, 0) >= fraction:
                        continue
                    s = spins[y, x]
                    nb = spins[(y - 1) % h, x] + spins[(y + 1) % h, x] + spins[y, (x - 1) % w] + spins[y, (x + 1) % w]
                    dE = 2.0 * J * s * nb
                    if dE <= 0.0 or uniform_at(seed, step, cell, 1) < np.exp(-dE / T):
                        spins[y, x] = -s
            step += 1
        m = 0.0
        e = 0.0
        for y in range(h):
            for x in range(w):
                s = spins[y, x]
                m += s
                e -= J * s * (spins[y, (x + 1) % w] + spins[(y + 1) % h, x])
        out_absm[k] = abs(m) / n
        out_e[k] = e / n
    return step


def sample_observables(
    L: int,
    T: float,
    sweeps: int,
    seed: int = 0,
    fraction: float = 1.0,
    burn_in: int = 1000,
    J: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sweep ``|M|`` and energy per spin of a fixed-temperature run.

    Used to check the Metropolis kernel against :func:`exact_observables`.
    """
    spins = random_spins((L, L), seed).astype(np.float64)
    absm = np.empty(sweeps)
    energy = np.empty(sweeps)
    scratch_m = np.empty(burn_in)
    scratch_e = np.empty(burn_in)
    step = _sample_sweeps(spins, float(T), float(J), np.uint64(seed), 0, burn_in, fraction, scratch_m, scratch_e)
    _sample_sweeps(spins, float(T), float(J), np.uint64(seed), int(step), sweeps, fraction, absm, energy)
    return absm, energy


def onsager_magnetization(T: float) -> float:
    """Spontaneous magnetization of the infinite square lattice (J = 1)."""
    if T >= T_CRITICAL:
        return 0.0
    return (1.0 - math.sinh(2.0 / T) ** -4) ** 0.125


@dataclass
class IsingSimulation:
    """Driver for one Ising run.

    One call to :meth:`step` updates one checkerboard sub-lattice (a random
    ``update_fraction`` of it) and, every ``adapt_every`` steps, the
    temperature. Two steps make one sweep.

    Parameters
    ----------
    size : int
        Linear lattice size (even).
    mode : {"local", "global", "fixed"}
    temp_init : float
        Initial temperature, uniform over the lattice.
    measure_patch : int or None
        Patch used for the local magnetization; ``None`` selects the four
        Von Neumann neighbors.
    spin_init : {"random", "up"}
    """

    size: int = 64
    mode: str = "local"
    temp_init: float = 1.5
    params: SocParams = field(default_factory=SocParams)
    update_fraction: float = 0.5
    adapt_every: int = 1
    measure_patch: int | None = 5
    J: float = 1.0
    seed: int = 0
    spin_init: str = "random"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}", key="mode")
        if self.size < 2 or self.size % 2:
            raise ConfigError(f"size must be an even integer >= 2, got {self.size}", key="size")
        if not 0 < self.update_fraction <= 1:
            raise ConfigError(f"must lie in (0, 1], got {self.update_fraction}", key="update_fraction")
        if self.adapt_every < 1:
            raise ConfigError("must be >= 1", key="adapt_every")
        if self.temp_init <= 0:
            raise ConfigError("must be positive", key="temp_init")
        if self.measure_patch is not None and (self.measure_patch < 1 or self.measure_patch % 2 == 0):
            raise ConfigError("must be a positive odd integer", key="measure_patch")
        shape = (self.size, self.size)
        if self.spin_init == "random":
            spins = random_spins(shape, self.seed)
        elif self.spin_init == "up":
            spins = np.ones(shape, dtype=np.float32)
        else:
            raise ConfigError(f"unknown spin_init {self.spin_init!r}", key="spin_init")
        temps = np.full(shape, self.temp_init, dtype=np.float32) if self.mode == "local" else self.temp_init
        self.state = IsingState(spins, temps, self.J)
        self.rng = RandomField(self.seed)
        self.t = 0

    def step(self) -> IsingState:
        checkerboard_step(self.state, self.seed, self.t, self.update_fraction)
        self.t += 1
        if self.mode != "fixed" and self.t % self.adapt_every == 0:
            if self.mode == "local":
                self.state.temps = local_temperature_update(self.state, self.params, self.measure_patch)
            else:
                self.state.temps = global_temperature_update(self.state, self.params, self.rng, self.t)
        return self.state

    def sweep(self) -> IsingState:
        self.step()
        return self.step()

    def observables(self) -> dict:
        return {
            "step": self.t,
            "mean_T": self.state.mean_temperature(),
            "abs_M": self.state.abs_magnetization(),
            "E_per_spin": self.state.energy_per_spin(),
        }

    def run(self, steps: int, record_every: int = 1, callback=None) -> list[dict]:
        records = []
        for _ in range(steps):
            self.step()
            if self.t % record_every == 0:
                obs = self.observables()
                records.append(obs)
                if callback is not None:
                    callback(self, obs)
        return records


def selection_mask(size: int, seed: int, step: int, fraction: float) -> np.ndarray:
    """The mask :func:`checkerboard_step` uses at ``step``."""
    return checkerboard_mask(
        size, size, step % 2, fraction, RandomField(seed), step_index=step, draw=DRAW_SELECT
    )


__all__ = [
    "SocParams",
    "IsingState",
    "IsingSimulation",
    "T_CRITICAL",
    "checkerboard_step",
    "delta_energy",
    "delta_energy_field",
    "exact_observables",
    "global_temperature_update",
    "local_temperature_update",
    "metropolis_step",
    "onsager_magnetization",
    "sample_observables",
    "selection_mask",
    "total_energy",
]
