"""Multi-channel periodic grids and the stencil primitives built on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError


class Boundary(Enum):
    PERIODIC = "periodic"


@dataclass
class Grid:
    """A ``channels x height x width`` field of float32 values on a torus.

    Data is stored channel-outermost and row-major, i.e. ``data[c, y, x]``.
    All coordinate access wraps modulo the grid size.
    """

    data: np.ndarray
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or min(data.shape) < 1:
            raise ConfigError(f"grid data must have shape (channels, height, width), got {data.shape}")
        self.data = np.ascontiguousarray(data, dtype=np.float32)

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1) -> "Grid":
        if width < 1 or height < 1 or channels < 1:
            raise ConfigError("width, height and channels must be positive")
        return cls(np.zeros((channels, height, width), dtype=np.float32))

    @classmethod
    def from_channels(cls, *planes: np.ndarray) -> "Grid":
        return cls(np.stack([np.asarray(p, dtype=np.float32) for p in planes]))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def channel(self, c: int) -> np.ndarray:
        return self.data[c]

    def get(self, x: int, y: int, c: int = 0) -> np.float32:
        return self.data[c, y % self.height, x % self.width]

    def set(self, x: int, y: int, value, c: int = 0) -> None:
        self.data[c, y % self.height, x % self.width] = value

    def copy(self) -> "Grid":
        return Grid(self.data.copy(), self.boundary)

    def patch(self, x: int, y: int, size: int) -> "Patch":
        _check_patch_size(size, self.width, self.height)
        r = size // 2
        ys = np.arange(y - r, y + r + 1) % self.height
        xs = np.arange(x - r, x + r + 1) % self.width
        values = self.data[:, ys[:, None], xs[None, :]]
        return Patch(center=(x % self.width, y % self.height), size=size, values=values)


@dataclass
class Patch:
    """A ``size x size`` window (all channels) centered on one cell.

    ``values[c, dy + r, dx + r]`` holds the grid value at offset ``(dx, dy)``
    from ``center``, with ``r = size // 2``.
    """

    center: tuple[int, int]
    size: int
    values: np.ndarray = field(repr=False)

    @property
    def center_value(self) -> np.ndarray:
        r = self.size // 2
        return self.values[:, r, r]


def _check_patch_size(size: int, width: int, height: int) -> None:
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"patch size must be a positive odd integer, got {size}")
    if size > min(width, height):
        raise ConfigError(f"patch size {size} exceeds grid dimensions {width}x{height}")


def _as_grid(field_) -> Grid:
    return field_ if isinstance(field_, Grid) else Grid(field_)


def pad_periodic(data: np.ndarray, radius: int) -> np.ndarray:
    """Wrap-pad the two trailing axes by ``radius`` cells."""
    pad = [(0, 0)] * (data.ndim - 2) + [(radius, radius), (radius, radius)]
    return np.pad(data, pad, mode="wrap")


def unfold(grid: Grid, patch_size: int) -> np.ndarray:
    """All periodic patches of ``grid`` as a read-only view.

    Returns an array of shape ``(height, width, channels, k, k)`` where
    ``out[y, x]`` is the patch centered on cell ``(x, y)``. Only the wrap
    border is copied; interior windows are strided views.
    """
    grid = _as_grid(grid)
    _check_patch_size(patch_size, grid.width, grid.height)
    r = patch_size // 2
    padded = pad_periodic(grid.data, r)
    windows = sliding_window_view(padded, (patch_size, patch_size), axis=(1, 2))
    # (C, H, W, k, k) -> (H, W, C, k, k)
    return windows.transpose(1, 2, 0, 3, 4)


def conv2d(grid: Grid, kernel) -> Grid:
    """Periodic cross-correlation of ``grid`` with a square odd kernel.

    ``kernel`` is ``(k, k)`` for a single-channel grid, or ``(C, k, k)`` to
    sum over all ``C`` channels. The result is a single-channel grid with
    ``out[y, x] = sum(patch(x, y) * kernel)``.
    """
    grid = _as_grid(grid)
    kernel = np.asarray(kernel, dtype=np.float32)
    if kernel.ndim == 2:
        kernel = kernel[None]
    if kernel.ndim != 3 or kernel.shape[1] != kernel.shape[2] or kernel.shape[1] % 2 == 0:
        raise ConfigError(f"kernel must be square with odd side, got shape {kernel.shape}")
    if kernel.shape[0] != grid.channels:
        raise ConfigError(
            f"kernel has {kernel.shape[0]} channel(s) but grid has {grid.channels}"
        )
    k = kernel.shape[1]
    _check_patch_size(k, grid.width, grid.height)
    r = k // 2
    out = np.zeros(grid.shape, dtype=np.float32)
    for c in range(grid.channels):
        plane = grid.data[c]
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                w = kernel[c, dy + r, dx + r]
                if w == 0:
                    continue
                # value at (y + dy, x + dx) lands on (y, x)
                out += w * np.roll(plane, shift=(-dy, -dx), axis=(0, 1))
    return Grid(out)


def _plane(field_) -> np.ndarray:
    if isinstance(field_, Grid):
        if field_.channels != 1:
            raise ConfigError("expected a single-channel grid")
        return field_.data[0]
    arr = np.asarray(field_)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-D field, got shape {arr.shape}")
    return arr


def neighbor_sum(plane: np.ndarray) -> np.ndarray:
    """Sum of the four orthogonal neighbors, periodic."""
    return (
        np.roll(plane, 1, axis=0)
        + np.roll(plane, -1, axis=0)
        + np.roll(plane, 1, axis=1)
        + np.roll(plane, -1, axis=1)
    )


def laplacian(field_) -> np.ndarray:
    """Five-point periodic Laplacian (unit spacing)."""
    plane = _plane(field_)
    return neighbor_sum(plane) - 4 * plane


def box_sum(plane: np.ndarray, patch_size: int) -> np.ndarray:
    """Periodic sum over the ``patch_size`` square around each cell."""
    r = patch_size // 2
    rows = np.zeros_like(plane)
    for d in range(-r, r + 1):
        rows += np.roll(plane, d, axis=0)
    out = np.zeros_like(plane)
    for d in range(-r, r + 1):
        out += np.roll(rows, d, axis=1)
    return out


def neighborhood_mean(
    field_, patch_size: int = 3, exclude_center: bool = True, von_neumann: bool = False
) -> np.ndarray:
    """Per-cell mean over a square patch or the Von Neumann cross.

    With ``von_neumann=True`` the cross of the four orthogonal neighbors (plus
    the center unless excluded) is used and ``patch_size`` must be 3.
    """
    plane = _plane(field_)
    h, w = plane.shape
    _check_patch_size(patch_size, w, h)
    if von_neumann:
        if patch_size != 3:
            raise ConfigError("the Von Neumann neighborhood is only defined for patch size 3")
        total, n = neighbor_sum(plane) + plane, 5
    else:
        total, n = box_sum(plane, patch_size), patch_size * patch_size
    if exclude_center:
        total, n = total - plane, n - 1
    return total / n
