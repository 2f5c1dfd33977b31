"""Generic adaptive-rule machinery.

A cell's full state is its dynamical channels ``sigma`` concatenated with its
rule-parameter channels ``theta``. An :class:`AdaptiveRule` maps the patch
around a cell (both parts) to the cell's next ``sigma`` and ``theta``, so the
rule itself evolves with the grid.
"""
from __future__ import annotations

import abc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import Grid, _check_patch_size, unfold
from .rng import RandomField


@dataclass(frozen=True)
class CellState:
    """Partition of grid channels into state (``sigma``) and rule parameters (``theta``)."""

    sigma: tuple[int, ...]
    theta: tuple[int, ...] = ()

    @property
    def channels(self) -> int:
        return len(self.sigma) + len(self.theta)

    def validate(self, grid: Grid) -> None:
        used = list(self.sigma) + list(self.theta)
        if len(set(used)) != len(used):
            raise ConfigError(f"channels {sorted(used)} assigned to both sigma and theta")
        if sorted(used) != list(range(grid.channels)):
            raise ConfigError(
                f"sigma {self.sigma} and theta {self.theta} do not partition the "
                f"{grid.channels} grid channel(s)"
            )


class AdaptiveRule(abc.ABC):
    """Update contract for one cell.

    Subclasses set ``layout``, ``patch_size`` and ``n_draws`` and implement
    :meth:`update`. Rules must be pure: no state may be written during
    :meth:`update`, since cells are evaluated concurrently.
    """

    layout: CellState
    patch_size: int = 3
    n_draws: int = 0

    @abc.abstractmethod
    def update(
        self, sigma: np.ndarray, theta: np.ndarray, randoms: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return the center cell's new ``(sigma, theta)``.

        ``sigma`` and ``theta`` are ``(n_channels, k, k)`` patches.
        """


def step(
    grid: Grid,
    rule: AdaptiveRule,
    mask: np.ndarray | None = None,
    rng: RandomField | None = None,
    step_index: int = 0,
    threads: int = 1,
) -> Grid:
    """Apply ``rule`` synchronously to every masked cell.

    Every rule evaluation reads from ``grid`` and writes into a fresh output
    buffer, so the result is independent of evaluation order and of
    ``threads``. Unmasked cells are copied unchanged.
    """
    rule.layout.validate(grid)
    _check_patch_size(rule.patch_size, grid.width, grid.height)
    h, w = grid.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w):
        raise ConfigError(f"mask shape {mask.shape} does not match grid shape {(h, w)}")
    if rule.n_draws and rng is None:
        raise ConfigError("rule requires random draws but no RandomField was given")

    windows = unfold(grid, rule.patch_size)
    sig = list(rule.layout.sigma)
    th = list(rule.layout.theta)
    out = grid.data.copy()

    def run_rows(rows):
        for y in rows:
            for x in np.flatnonzero(mask[y]):
                # contiguous copy: rule results must not depend on memory layout
                patch = np.ascontiguousarray(windows[y, x])
                randoms = (
                    rng.uniforms(step_index, y * w + x, rule.n_draws)
                    if rule.n_draws
                    else np.empty(0)
                )
                new_sigma, new_theta = rule.update(patch[sig], patch[th], randoms)
                out[sig, y, x] = new_sigma
                if th:
                    out[th, y, x] = new_theta

    bands = np.array_split(np.arange(h), max(1, min(threads, h)))
    if threads <= 1:
        run_rows(bands[0])
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_rows, bands))
    return Grid(out, grid.boundary)


def checkerboard_mask(
    width: int,
    height: int,
    parity: int,
    fraction: float = 1.0,
    rng: RandomField | None = None,
    step_index: int = 0,
    draw: int = 0,
) -> np.ndarray:
    """Cells with ``(x + y) % 2 == parity``, each kept with probability ``fraction``.

    Selection uses draw ``draw`` of the cell's random stream at ``step_index``.
    """
    if parity not in (0, 1):
        raise ConfigError(f"parity must be 0 or 1, got {parity}")
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}", key="update_fraction")
    yy, xx = np.indices((height, width))
    mask = (xx + yy) % 2 == parity
    if fraction < 1:
        if rng is None:
            raise ConfigError("a RandomField is required when fraction < 1")
        mask &= rng.field(step_index, (height, width), draw=draw) < fraction
    return mask
