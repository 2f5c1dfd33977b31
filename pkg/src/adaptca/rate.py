"""Wilson-Cowan rate neurons on a grid with local plastic connectivity."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import pearson
from .connectivity import INIT_STATE, LocalConnectivity
from .errors import ConfigError
from .rng import RandomField


@dataclass(frozen=True)
class RateParams:
    """Parameters of the rate network.

    The gain function is ``s(x) = 1 / (1 + exp(-gain_slope * (x - gain_threshold)))``.
    ``g`` scales every inhibitory connection; ``k_exc``/``k_inh`` are the
    incoming weight totals restored by normalization.
    """

    radius: int = 2
    p_e: float = 0.8
    g: float = 4.0
    tau: float = 10.0
    dt: float = 1.0
    c: float = 1.0
    gain_slope: float = 4.0
    gain_threshold: float = 1.0
    beta: float = 0.2
    k_exc: float = 1.0
    k_inh: float = 1.0
    lr_e: float = 1e-3
    lr_i: float = 1e-3
    r_init: float = 0.1

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("must be positive", key="dt")
        if self.tau <= 0:
            raise ConfigError("must be positive", key="tau")
        if not 0 <= self.p_e <= 1:
            raise ConfigError(f"must lie in [0, 1], got {self.p_e}", key="p_e")
        for name in ("g", "k_exc", "k_inh", "lr_e", "lr_i", "beta", "r_init"):
            if getattr(self, name) < 0:
                raise ConfigError("must be non-negative", key=name)


def sigmoid(x, slope: float = 4.0, threshold: float = 1.0):
    return 1.0 / (1.0 + np.exp(-slope * (np.asarray(x, dtype=np.float64) - threshold)))


@dataclass
class RateState:
    r: np.ndarray
    conn: LocalConnectivity
    c: np.ndarray
    params: RateParams = field(default_factory=RateParams)

    @classmethod
    def create(cls, size: int, params: RateParams = RateParams(), seed: int = 0) -> "RateState":
        conn = LocalConnectivity.random(
            (size, size), params.radius, params.p_e, seed, params.k_exc, params.k_inh
        )
        r = (RandomField(seed).field(INIT_STATE, (size, size)) * params.r_init).astype(np.float32)
        c = np.full((size, size), params.c, dtype=np.float32)
        return cls(r, conn, c, params)

    @property
    def ei_sign(self) -> np.ndarray:
        return self.conn.ei_sign

    def copy(self) -> "RateState":
        return RateState(self.r.copy(), self.conn.copy(), self.c.copy(), self.params)


def presynaptic_drive(state: RateState) -> np.ndarray:
    """Signed, gain-scaled activity each cell sends: ``r`` or ``-g * r``."""
    gain = np.where(state.ei_sign > 0, 1.0, -state.params.g)
    return (gain * state.r).astype(np.float32)


def total_input(state: RateState) -> np.ndarray:
    return state.conn.input(presynaptic_drive(state)) + state.c


def rate_step(state: RateState, dt: float | None = None) -> np.ndarray:
    """Forward-Euler step of ``tau dr/dt = -r + (1 - r) s(W R + c)``, clipped to [0, 1]."""
    p = state.params
    dt = p.dt if dt is None else dt
    if dt <= 0:
        raise ConfigError("must be positive", key="dt")
    u = total_input(state)
    s = sigmoid(u, p.gain_slope, p.gain_threshold)
    r = state.r.astype(np.float64)
    r = r + dt / p.tau * (-r + (1.0 - r) * s)
    return np.clip(r, 0.0, 1.0).astype(np.float32)


def hebbian_update(state: RateState, lr_e: float) -> LocalConnectivity:
    """Excitatory connections grow by ``lr_e * r_pre * r_post``."""
    return state.conn.update(+1, state.r, state.r, lr_e)


def inhibitory_update(state: RateState, lr_i: float) -> LocalConnectivity:
    """Inhibitory connections change by ``lr_i * r_pre * (r_post - beta)``, floored at 0."""
    return state.conn.update(-1, state.r, state.r, lr_i, offset=state.params.beta)


NORMALIZE_MODES = ("both", "excitatory", "none")


def normalize_weights(state: RateState, types: str = "both") -> LocalConnectivity:
    """Multiplicative per-cell rescaling of incoming weights by synapse type.

    ``types="both"`` fixes the excitatory total at ``k_exc`` and the inhibitory
    total at ``k_inh``; ``"excitatory"`` rescales only excitatory weights.
    """
    p = state.params
    if types == "both":
        return state.conn.normalize(p.k_exc, p.k_inh)
    if types == "excitatory":
        return state.conn.normalize(p.k_exc, None)
    if types == "none":
        return state.conn
    raise ConfigError(f"unknown normalization {types!r}; expected one of {NORMALIZE_MODES}", key="normalize")


@dataclass
class RateNetwork:
    """Runs the rate dynamics with optional plasticity.

    Each tick is: activity update, then (if enabled) Hebbian and inhibitory
    plasticity on the updated activity, then normalization.

    By default only excitatory weights are normalized: Hebbian growth needs
    the bound, while the homeostatic inhibitory rule is self-limiting and
    fixing inhibitory totals would cancel it.
    """

    state: RateState
    hebbian: bool = False
    inhibitory: bool = False
    normalize: str = "excitatory"

    def __post_init__(self):
        if self.normalize not in NORMALIZE_MODES:
            raise ConfigError(
                f"unknown normalization {self.normalize!r}; expected one of {NORMALIZE_MODES}",
                key="normalize",
            )
        self.t = 0

    @classmethod
    def create(cls, size: int, params: RateParams = RateParams(), seed: int = 0, **kwargs) -> "RateNetwork":
        return cls(RateState.create(size, params, seed), **kwargs)

    @property
    def plastic(self) -> bool:
        return self.hebbian or self.inhibitory

    def step(self) -> RateState:
        st = self.state
        st.r = rate_step(st)
        if self.hebbian:
            hebbian_update(st, st.params.lr_e)
        if self.inhibitory:
            inhibitory_update(st, st.params.lr_i)
        if self.plastic:
            normalize_weights(st, self.normalize)
        self.t += 1
        return st

    def run(self, steps: int, record=None) -> list:
        out = []
        for _ in range(steps):
            self.step()
            if record is not None:
                out.append(record(self))
        return out


def balance_g(p_e, k_exc: float = 1.0, k_inh: float = 1.0):
    """``g`` at which expected incoming excitation equals inhibition."""
    p_e = np.asarray(p_e, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(p_e < 1, p_e * k_exc / ((1 - p_e) * k_inh), np.inf)


@dataclass
class PhaseDiagram:
    p_e: np.ndarray
    g: np.ndarray
    mean_activity: np.ndarray  # [i_g, i_p]
    cv: np.ndarray
    cv_undefined: np.ndarray
    balance: np.ndarray  # balancing g for each p_e

    def excitation_ratio(self, k_exc: float = 1.0, k_inh: float = 1.0) -> np.ndarray:
        """Expected excitatory / inhibitory drive for each grid point."""
        P, G = np.meshgrid(self.p_e, self.g)
        with np.errstate(divide="ignore", invalid="ignore"):
            return P * k_exc / ((1 - P) * G * k_inh)


def phase_sweep(
    p_values,
    g_values,
    steps: int = 1000,
    seed: int = 0,
    size: int = 32,
    params: RateParams = RateParams(),
    average_last: float = 0.5,
) -> PhaseDiagram:
    """Mean activity and spatial CV over a grid of ``(p_E, g)`` with fixed weights.

    Activity is averaged over the last ``average_last`` fraction of ``steps``.
    The CV is the across-cell std / mean of that time-averaged activity; a zero
    mean yields CV 0 and sets ``cv_undefined``.
    """
    p_values = np.asarray(p_values, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    mean = np.zeros((len(g_values), len(p_values)))
    cv = np.zeros_like(mean)
    undefined = np.zeros(mean.shape, dtype=bool)
    n_avg = max(1, int(round(steps * average_last)))
    for i, g in enumerate(g_values):
        for j, p in enumerate(p_values):
            pp = replace(params, p_e=float(p), g=float(g))
            net = RateNetwork.create(size, pp, seed)
            acc = np.zeros((size, size))
            for t in range(steps):
                net.step()
                if t >= steps - n_avg:
                    acc += net.state.r
            acc /= n_avg
            m = acc.mean()
            mean[i, j] = m
            if m > 0:
                cv[i, j] = acc.std() / m
            else:
                undefined[i, j] = True
    return PhaseDiagram(
        p_values, g_values, mean, cv, undefined, balance_g(p_values, params.k_exc, params.k_inh)
    )


@dataclass
class ImprintResult:
    weights: LocalConnectivity
    incoming: np.ndarray
    outgoing: np.ndarray
    corr_incoming: float
    corr_outgoing: float
    steps: int
    converged: bool


def imprint_image(
    state: RateState,
    image: np.ndarray,
    steps: int = 5000,
    tol: float = 1e-5,
    input_gain: float = 1.0,
    normalize: str = "excitatory",
) -> ImprintResult:
    """Drive the network with ``image`` as extra input and let all plasticity run.

    Stops when the largest per-step weight change falls below ``tol`` or the
    step budget is spent. Correlations are Pearson coefficients of the summed
    incoming / outgoing weight maps with the image (``nan`` if undefined).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != state.r.shape:
        raise ConfigError(f"image shape {image.shape} does not match grid {state.r.shape}", key="image")
    state.c = (state.params.c + input_gain * image).astype(np.float32)
    net = RateNetwork(state, hebbian=True, inhibitory=True, normalize=normalize)
    converged = False
    done = 0
    p = state.params
    if p.lr_e == 0 and p.lr_i == 0:
        net.hebbian = net.inhibitory = False
    for done in range(1, steps + 1):
        before = state.conn.weights.copy() if net.plastic else None
        net.step()
        if before is not None and np.max(np.abs(state.conn.weights - before)) < tol:
            converged = True
            break
    incoming = state.conn.incoming_sums()
    outgoing = state.conn.outgoing_sums()
    return ImprintResult(
        state.conn,
        incoming,
        outgoing,
        pearson(incoming, image),
        pearson(outgoing, image),
        done,
        converged,
    )
