import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptca.analysis import blocked_stderr
from adaptca.errors import ConfigError
from adaptca.ising import (
    T_MAX,
    T_MIN,
    IsingSimulation,
    IsingState,
    SocParams,
    checkerboard_step,
    delta_energy,
    exact_observables,
    global_temperature_update,
    local_magnetization,
    local_temperature_update,
    metropolis_step,
    onsager_magnetization,
    random_spins,
    sample_observables,
    selection_mask,
    total_energy,
)
from adaptca.rng import RandomField

# frozen output of the exact enumeration oracle
L4_GOLDEN = (0.8439202533909661, -1.5657689313277199)

spin_grids = st.integers(0, 2**32 - 1).map(lambda s: random_spins((4, 4), s))


def test_delta_energy_aligned_neighbors():
    s = np.ones((4, 4), np.float32)
    assert delta_energy(s, 1, 1) == 8.0


def test_delta_energy_balanced_neighbors():
    s = np.ones((4, 4), np.float32)
    s[0, 1] = s[2, 1] = -1
    assert delta_energy(s, 1, 1) == 0.0


@given(spin_grids, st.integers(0, 3), st.integers(0, 3), st.floats(0.1, 3.0))
def test_delta_energy_matches_total_energy_difference(spins, x, y, J):
    flipped = spins.copy()
    flipped[y, x] *= -1
    expected = total_energy(flipped, J) - total_energy(spins, J)
    assert delta_energy(spins, x, y, J) == pytest.approx(expected, abs=1e-9)


def test_total_energy_ground_state():
    assert total_energy(np.ones((6, 6))) == -72.0


def _all_cells_mask(shape):
    return np.ones(shape, bool)


def test_zero_temperature_never_accepts_uphill():
    state = IsingState(np.ones((4, 4), np.float32), 1e-12)
    for step in range(50):
        out = metropolis_step(state, _all_cells_mask((4, 4)), RandomField(step), step)
        assert np.array_equal(out.spins, state.spins)


def _block_checkerboard(n):
    """2x2 blocks of alternating sign: every cell's four neighbors sum to zero."""
    i = np.arange(n) // 2
    return np.where(np.add.outer(i, i) % 2 == 0, 1.0, -1.0).astype(np.float32)


def test_zero_energy_change_always_flips():
    state = IsingState(_block_checkerboard(8), 0.5)
    assert all(delta_energy(state.spins, x, y) == 0 for y in range(8) for x in range(8))
    out = metropolis_step(state, _all_cells_mask((8, 8)), RandomField(3), 0)
    assert np.array_equal(out.spins, -state.spins)


def test_acceptance_rate_matches_boltzmann_factor():
    T = 2.269
    p = math.exp(-8.0 / T)
    assert p == pytest.approx(0.0295, abs=5e-4)
    trials = 100_000
    # every cell of an even-sided ferromagnet is a dE = 8 trial
    n = 318
    state = IsingState(np.ones((n, n), np.float32), T)
    out = metropolis_step(state, _all_cells_mask((n, n)), RandomField(11), 4)
    accepted = np.count_nonzero(out.spins < 0)
    sigma = math.sqrt(n * n * p * (1 - p))
    assert n * n >= trials
    assert abs(accepted - n * n * p) < 3 * sigma


def test_non_positive_temperature_is_clamped_and_counted():
    temps = np.full((4, 4), 1.0, np.float32)
    temps[0, 0] = 0.0
    state = IsingState(np.ones((4, 4), np.float32), temps)
    out = metropolis_step(state, _all_cells_mask((4, 4)), RandomField(0), 0)
    assert out.clamp_count == 1


@given(st.integers(0, 2**32 - 1), st.integers(0, 10_000), st.sampled_from([0.3, 0.5, 1.0]), st.booleans())
def test_checkerboard_kernel_matches_masked_reference(seed, step, fraction, local):
    spins = random_spins((8, 8), seed)
    temps = RandomField(seed + 1).field(0, (8, 8)).astype(np.float32) * 3 + 0.5 if local else 2.0
    state = IsingState(spins, temps)
    mask = selection_mask(8, seed, step, fraction)
    # the reference takes its acceptance draws from the same stream
    ref = metropolis_step(state, mask, RandomField(seed), step)
    fast = checkerboard_step(state.copy(), seed, step, fraction)
    assert np.array_equal(fast.spins, ref.spins)


def test_checkerboard_rejects_odd_size():
    with pytest.raises(ConfigError):
        checkerboard_step(IsingState(np.ones((5, 5)), 1.0), 0, 0)


def _uniform_state(m_sign_pattern, T0):
    return IsingState(m_sign_pattern.astype(np.float32), np.full(m_sign_pattern.shape, T0, np.float32))


def test_local_update_fully_magnetized():
    p = SocParams()
    T0 = 1.7
    state = _uniform_state(np.ones((8, 8)), T0)
    new = local_temperature_update(state, p)
    expected = T0 + (1 - p.eta) * (p.alpha - p.epsilon * T0)
    assert np.allclose(new, expected, rtol=1e-6)


def test_local_update_zero_magnetization_decays():
    p = SocParams()
    T0 = 1.7
    pairs = _block_checkerboard(8)
    state = _uniform_state(pairs, T0)
    assert np.all(local_magnetization(pairs, None) == 0)
    new = local_temperature_update(state, p, patch_size=None)
    expected = T0 * (1 - (1 - p.eta) * p.epsilon)
    assert np.allclose(new, expected, rtol=1e-6)
    assert np.all(new < T0)


def _straight_line_local(spins, temps, p, patch):
    h, w = spins.shape
    r = patch // 2
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            m = np.mean([spins[(y + a) % h, (x + b) % w] for a in range(-r, r + 1) for b in range(-r, r + 1)])
            T = float(temps[y, x])
            nb = (
                float(temps[(y - 1) % h, x]) + float(temps[(y + 1) % h, x])
                + float(temps[y, (x - 1) % w]) + float(temps[y, (x + 1) % w])
            )
            dT = p.alpha * m * m - p.epsilon * T + p.diffusion * (nb / 4 - T)
            out[y, x] = min(max(p.eta * T + (1 - p.eta) * (T + dT), T_MIN), T_MAX)
    return out


@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 5]))
def test_local_update_matches_straight_line_oracle(seed, patch):
    p = SocParams(alpha=0.3, epsilon=0.05, diffusion=0.7, eta=0.4)
    spins = random_spins((6, 6), seed)
    temps = (RandomField(seed).field(1, (6, 6)) * 4 + 0.1).astype(np.float32)
    new = local_temperature_update(IsingState(spins, temps), p, patch_size=patch)
    assert np.allclose(new, _straight_line_local(spins, temps, p, patch), rtol=1e-6, atol=1e-7)


@given(st.floats(0.01, 1.0), st.floats(0.005, 0.5), st.floats(0.0, 0.95), st.sampled_from([1.0, 0.6, 0.2]))
def test_local_update_homogeneous_fixed_point(alpha, epsilon, eta, m):
    p = SocParams(alpha=alpha, epsilon=epsilon, eta=eta)
    T_star = alpha * m * m / epsilon
    if not T_MIN <= T_star <= T_MAX:
        return
    spins = np.ones((10, 10), np.float32)
    # a magnetization of m over 5x5 patches needs an exact fraction of down spins
    n_down = int(round((1 - m) / 2 * 25))
    if n_down:
        tile = np.ones(25)
        tile[:n_down] = -1
        spins = np.tile(tile.reshape(5, 5), (2, 2)).astype(np.float32)
    if not np.allclose(local_magnetization(spins, 5), m):
        return
    state = IsingState(spins, np.full((10, 10), T_star, np.float32))
    new = local_temperature_update(state, p, patch_size=5)
    assert np.allclose(new, T_star, rtol=1e-6)


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 50.0))
def test_temperatures_stay_positive(seed, T0):
    p = SocParams(alpha=0.0, epsilon=0.9, diffusion=4.0, eta=0.0)
    state = IsingState(random_spins((8, 8), seed), np.full((8, 8), T0, np.float32))
    for _ in range(5):
        state.temps = local_temperature_update(state, p)
        assert np.all(state.temps >= np.float32(T_MIN))


def test_global_magnetization_all_up():
    assert IsingState(np.ones((8, 8)), 2.0).abs_magnetization() == 1.0


@given(st.floats(0.01, 50.0), st.integers(0, 1000))
def test_global_update_zero_magnetization_cannot_heat(T0, step):
    spins = np.ones((8, 8), np.float32)
    spins[:4] = -1
    state = IsingState(spins, T0)
    assert state.abs_magnetization() == 0
    assert global_temperature_update(state, SocParams(), RandomField(5), step) <= T0


def test_global_trajectory_replays_bitwise():
    def trajectory():
        sim = IsingSimulation(size=16, mode="global", temp_init=3.0, seed=42)
        return [sim.step().temps for _ in range(300)]

    assert trajectory() == trajectory()


def test_exact_small_lattice_limits():
    absm, e = exact_observables(2, 1e6)
    assert absm == pytest.approx(0.375, abs=1e-5)
    assert e == pytest.approx(0.0, abs=1e-5)
    absm, e = exact_observables(2, 0.05)
    assert absm == pytest.approx(1.0, abs=1e-9)
    assert e == pytest.approx(-2.0, abs=1e-9)


def test_exact_golden_values():
    assert exact_observables(4, 2.269) == pytest.approx(L4_GOLDEN, rel=1e-12)


def test_exact_refuses_large_lattices():
    with pytest.raises(ConfigError):
        exact_observables(5, 2.0)


@pytest.mark.parametrize("T", [1.5, 2.269, 4.0])
def test_sampling_matches_exact_enumeration(T):
    absm, e = sample_observables(4, T, 200_000, seed=7)
    ex_m, ex_e = exact_observables(4, T)
    assert abs(absm.mean() - ex_m) < 3 * blocked_stderr(absm)
    assert abs(e.mean() - ex_e) < 3 * blocked_stderr(e)


def test_onsager_value():
    assert onsager_magnetization(1.5) == pytest.approx(0.986, abs=5e-4)
    assert onsager_magnetization(3.0) == 0.0


def test_spins_stay_binary():
    sim = IsingSimulation(size=16, mode="local", seed=3)
    sim.run(50)
    assert set(np.unique(sim.state.spins)) <= {-1.0, 1.0}


@pytest.mark.parametrize(
    "kwargs",
    [dict(mode="nope"), dict(size=7), dict(update_fraction=0), dict(measure_patch=4), dict(temp_init=-1)],
)
def test_simulation_rejects_bad_config(kwargs):
    with pytest.raises(ConfigError):
        IsingSimulation(**kwargs)
