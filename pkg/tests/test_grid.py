import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaptca.errors import ConfigError
from adaptca.grid import Grid, conv2d, laplacian, neighborhood_mean, unfold

finite = st.floats(-100, 100, allow_nan=False, width=32)


def naive_conv(plane, kernel):
    h, w = plane.shape
    k = kernel.shape[0]
    r = k // 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            for a in range(k):
                for b in range(k):
                    out[y, x] += kernel[a, b] * plane[(y + a - r) % h, (x + b - r) % w]
    return out


def test_grid_shape_and_length():
    g = Grid.zeros(5, 3, channels=2)
    assert g.data.shape == (2, 3, 5)
    assert g.data.size == 5 * 3 * 2
    assert g.data.dtype == np.float32


def test_wrapped_access():
    g = Grid.zeros(4, 3)
    g.set(-1, -1, 7.0)
    assert g.get(3, 2) == 7.0
    assert g.get(7, 5) == 7.0


def test_unfold_full_grid_patch_is_permutation():
    g = Grid(np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3))
    patches = unfold(g, 3)
    assert patches.shape == (3, 3, 1, 3, 3)
    assert sorted(patches[0, 0].ravel()) == list(range(1, 10))


def test_unfold_identity_kernel():
    data = np.random.default_rng(0).random((2, 4, 5)).astype(np.float32)
    p = unfold(Grid(data), 1)
    assert np.array_equal(p[..., 0, 0].transpose(2, 0, 1), data)


def test_unfold_wraps_corner():
    plane = np.arange(25, dtype=np.float32).reshape(5, 5)
    p = unfold(Grid(plane[None]), 3)[4, 4, 0]  # centered on (x=4, y=4)
    got = set(p.ravel().tolist())
    for x, y in [(0, 0), (0, 4), (4, 0)]:
        assert plane[y, x] in got


def test_grid_patch_matches_unfold():
    data = np.random.default_rng(1).random((2, 6, 7)).astype(np.float32)
    g = Grid(data)
    patch = g.patch(6, 0, 3)
    assert np.array_equal(patch.values, unfold(g, 3)[0, 6])
    assert np.array_equal(patch.center_value, data[:, 0, 6])


@given(arrays(np.float32, st.tuples(st.integers(1, 3), st.integers(3, 9), st.integers(3, 9)), elements=finite))
def test_unfold_center_reproduces_grid(data):
    k = 3
    p = unfold(Grid(data), k)
    assert np.array_equal(p[:, :, :, 1, 1].transpose(2, 0, 1), data)


@pytest.mark.parametrize("size", [2, 4, 0, 11])
def test_unfold_rejects_bad_sizes(size):
    with pytest.raises(ConfigError):
        unfold(Grid.zeros(9, 9), size)


@given(arrays(np.float32, (6, 7), elements=finite))
def test_conv_delta_kernel_is_bitwise_identity(plane):
    delta = np.zeros((3, 3), dtype=np.float32)
    delta[1, 1] = 1
    assert np.array_equal(conv2d(Grid(plane[None]), delta).data[0], plane)


def test_conv_constant_field():
    g = Grid(np.full((1, 5, 5), 2.0, dtype=np.float32))
    kernel = np.arange(9, dtype=np.float32).reshape(3, 3)
    assert np.allclose(conv2d(g, kernel).data, 2.0 * kernel.sum())


def test_conv_matches_naive_4x4():
    rng = np.random.default_rng(3)
    plane = rng.random((4, 4)).astype(np.float32)
    kernel = rng.random((3, 3)).astype(np.float32)
    assert np.allclose(conv2d(Grid(plane[None]), kernel).data[0], naive_conv(plane, kernel), rtol=1e-5)


@given(
    arrays(np.float32, (8, 8), elements=st.floats(-1, 1, width=32)),
    arrays(np.float32, (3, 3), elements=st.floats(-1, 1, width=32)),
)
def test_conv_matches_naive_8x8(plane, kernel):
    ref = naive_conv(plane.astype(np.float64), kernel.astype(np.float64))
    got = conv2d(Grid(plane[None]), kernel).data[0]
    assert np.allclose(got, ref, rtol=1e-5, atol=1e-5)


def test_conv_multichannel_sums_channels():
    rng = np.random.default_rng(4)
    data = rng.random((2, 5, 5)).astype(np.float32)
    kernel = rng.random((2, 3, 3)).astype(np.float32)
    ref = naive_conv(data[0], kernel[0]) + naive_conv(data[1], kernel[1])
    assert np.allclose(conv2d(Grid(data), kernel).data[0], ref, rtol=1e-5)


def test_conv_channel_mismatch():
    with pytest.raises(ConfigError):
        conv2d(Grid.zeros(5, 5, channels=2), np.ones((3, 3)))
    with pytest.raises(ConfigError):
        conv2d(Grid.zeros(5, 5), np.ones((2, 2)))


def test_laplacian_constant_is_zero():
    assert np.all(laplacian(np.full((5, 6), 3.5)) == 0)


def test_laplacian_point_source():
    f = np.zeros((4, 4))
    f[0, 0] = 1.0
    lap = laplacian(f)
    assert lap[0, 0] == -4
    for y, x in [(0, 1), (1, 0), (0, 3), (3, 0)]:
        assert lap[y, x] == 1
    assert lap.sum() == 0


def test_laplacian_parabola_second_difference():
    W = 16
    x = np.arange(W, dtype=np.float64)
    f = np.tile(x * (x - W), (8, 1))
    lap = laplacian(f)
    assert np.allclose(lap[:, 1:-1], 2.0)


def test_laplacian_sum_conserved_large():
    f = np.random.default_rng(5).random((1000, 1000)).astype(np.float32)
    assert abs(float(laplacian(f).astype(np.float64).sum())) < 1e-3


@given(arrays(np.float64, (6, 6), elements=st.floats(-10, 10)))
def test_laplacian_sum_zero_property(f):
    assert abs(laplacian(f).sum()) < 1e-9


def test_neighborhood_mean_uniform():
    assert np.all(neighborhood_mean(np.ones((6, 6)), 3, True, von_neumann=True) == 1)
    assert np.all(neighborhood_mean(np.ones((6, 6)), 5, False) == 1)


def test_neighborhood_mean_checkerboard():
    yy, xx = np.indices((6, 6))
    s = np.where((xx + yy) % 2 == 0, 1.0, -1.0)
    m = neighborhood_mean(s, 3, exclude_center=True, von_neumann=True)
    assert np.array_equal(m, -s)


def test_neighborhood_mean_hand_sum():
    s = np.where(np.random.default_rng(6).random((4, 4)) < 0.5, 1.0, -1.0)
    m = neighborhood_mean(s, 3, exclude_center=True, von_neumann=True)
    for y in range(4):
        for x in range(4):
            ref = (s[(y - 1) % 4, x] + s[(y + 1) % 4, x] + s[y, (x - 1) % 4] + s[y, (x + 1) % 4]) / 4
            assert m[y, x] == ref
    box = neighborhood_mean(s, 3, exclude_center=False)
    for y in range(4):
        for x in range(4):
            ref = sum(s[(y + a) % 4, (x + b) % 4] for a in (-1, 0, 1) for b in (-1, 0, 1)) / 9
            assert np.isclose(box[y, x], ref)
