import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from adaptca.analysis import (
    TimeSeries,
    blocked_stderr,
    histogram,
    pearson,
    running_mean_convergence,
    write_csv,
)
from adaptca.errors import ConfigError

fields = arrays(np.float64, (6, 6), elements=st.floats(-100, 100))


def test_pearson_self_and_anti():
    a = np.random.default_rng(0).random((10, 10))
    assert pearson(a, a) == pytest.approx(1.0)
    assert pearson(a, -a) == pytest.approx(-1.0)


def test_pearson_independent_fields_near_zero():
    rng = np.random.default_rng(1)
    # null sd is 1/sqrt(n) = 0.01
    assert abs(pearson(rng.random((100, 100)), rng.random((100, 100)))) < 0.03


def test_pearson_zero_variance_undefined():
    assert math.isnan(pearson(np.ones((4, 4)), np.arange(16.0).reshape(4, 4)))


def test_pearson_shape_mismatch():
    with pytest.raises(ConfigError):
        pearson(np.ones(3), np.ones(4))


@given(fields, fields, st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_symmetric_and_scale_invariant(a, b, alpha, beta):
    r = pearson(a, b)
    if math.isnan(r):
        return
    assert pearson(b, a) == pytest.approx(r, abs=1e-12)
    scaled = pearson(alpha * a + beta, b)
    if not math.isnan(scaled):
        assert scaled == pytest.approx(r, abs=1e-6)
    assert -1 <= r <= 1


def _series(values):
    ts = TimeSeries("x")
    for i, v in enumerate(values):
        ts.append(i, v)
    return ts


def test_convergence_constant_series():
    assert running_mean_convergence(_series(np.full(50, 2.0)), window=10, tol=0.01) == 9


def test_convergence_diverging_series():
    assert running_mean_convergence(_series(np.arange(100.0)), window=10, tol=0.5) is None


def test_convergence_decaying_envelope():
    t = np.arange(3000)
    noise = np.random.default_rng(2).uniform(-1, 1, t.size)
    ts = _series(2.269 + 0.5 * np.exp(-t / 100) * noise)
    hit = running_mean_convergence(ts, window=100, tol=0.05)
    # the envelope width exp(-t/100) falls below 0.05 at t = 100 ln 20
    t_env = 100 * math.log(2 * 0.5 / 0.05)
    assert t_env - 100 <= hit <= t_env + 100


def test_convergence_rejects_short_window():
    with pytest.raises(ConfigError):
        running_mean_convergence(_series([1.0, 2.0]), window=1)


def test_time_series_strictly_increasing():
    ts = TimeSeries("x")
    ts.append(1, 0.0)
    with pytest.raises(ValueError):
        ts.append(1, 0.0)
    assert len(ts) == 1


def test_histogram_single_value():
    counts, _ = histogram([3.0], bins=5)
    assert counts.sum() == 1 and np.count_nonzero(counts) == 1


def test_histogram_empty():
    counts, edges = histogram([], bins=4)
    assert np.array_equal(counts, np.zeros(4)) and len(edges) == 5


def test_histogram_uniform_chi_square():
    v = np.random.default_rng(3).random(100_000)
    counts, _ = histogram(v, bins=20, range=(0, 1))
    assert stats.chisquare(counts).pvalue > 0.01


@given(arrays(np.float64, st.integers(0, 200), elements=st.one_of(st.floats(-1e6, 1e6), st.just(np.nan), st.just(np.inf))), st.integers(1, 30))
def test_histogram_mass_conservation(v, bins):
    counts, _ = histogram(v, bins=bins)
    assert counts.sum() == np.isfinite(v).sum()


def test_histogram_rejects_zero_bins():
    with pytest.raises(ConfigError):
        histogram([1.0], bins=0)


def test_csv_nine_significant_digits(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("step", "value", "flag"), [(1, math.pi, True), (2, 1e-12 / 3, False)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["step", "value", "flag"]
    assert rows[1] == ["1", "3.14159265", "1"]
    assert rows[2][1] == "3.33333333e-13"


def test_blocked_stderr_of_iid_samples():
    x = np.random.default_rng(4).normal(size=100_000)
    assert blocked_stderr(x) == pytest.approx(1 / math.sqrt(x.size), rel=0.2)
