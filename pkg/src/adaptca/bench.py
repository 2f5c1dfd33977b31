"""Scaling benchmark of the spiking model over kernel variants and grid sizes."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .analysis import write_csv
from .errors import ConfigError
from .spiking import SpikingNetwork, SpikingParams

VARIANTS = ("homogeneous", "heterogeneous", "heterogeneous-plastic")
MIN_STEPS = 10
MIN_WARMUP = 3


@dataclass
class BenchPoint:
    variant: str
    size: int
    seconds_per_step: float = math.nan
    cells_per_second: float = math.nan
    memory_bytes: int = 0
    steps: int = 0
    ok: bool = True
    error: str = ""


@dataclass
class BenchReport:
    points: list[BenchPoint] = field(default_factory=list)
    threads: int = 1
    seed: int = 0

    HEADER = ("variant", "size", "cells", "seconds_per_step", "cells_per_second", "memory_bytes", "steps", "ok", "error", "threads")

    def rows(self):
        for p in self.points:
            yield (
                p.variant, p.size, p.size * p.size, p.seconds_per_step, p.cells_per_second,
                p.memory_bytes, p.steps, p.ok, p.error, self.threads,
            )

    def point(self, variant: str, size: int) -> BenchPoint:
        for p in self.points:
            if p.variant == variant and p.size == size:
                return p
        raise KeyError((variant, size))

    def write_csv(self, path):
        return write_csv(path, self.HEADER, self.rows())


def make_network(variant: str, size: int, seed: int = 0, params: SpikingParams = SpikingParams()) -> SpikingNetwork:
    if variant == "homogeneous":
        return SpikingNetwork.create(size, params, seed, homogeneous=True)
    if variant == "heterogeneous":
        return SpikingNetwork.create(size, params, seed)
    if variant == "heterogeneous-plastic":
        # plasticity on every tick so each timed step pays for it
        return SpikingNetwork.create(size, replace(params, plasticity_every=1), seed, plasticity=True)
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}", key="variant")


def _block_size(net: SpikingNetwork, warmup: int, min_block: float) -> int:
    for _ in range(warmup):
        net.step()
    t0 = time.perf_counter()
    net.step()
    single = max(time.perf_counter() - t0, 1e-7)
    return max(1, int(math.ceil(min_block / single)))


def _time_block(net: SpikingNetwork, block: int) -> float:
    t0 = time.perf_counter()
    for _ in range(block):
        net.step()
    return (time.perf_counter() - t0) / block


def time_steps(net: SpikingNetwork, steps: int, warmup: int = 3, min_block: float = 0.02) -> float:
    """Median wall time per step.

    Steps are timed in blocks lasting at least ``min_block`` seconds, so very
    fast steps are not dominated by timer and scheduler jitter; the result is
    the median over ``steps`` block averages.
    """
    block = _block_size(net, warmup, min_block)
    return float(np.median([_time_block(net, block) for _ in range(steps)]))


def run_benchmark(
    sizes,
    variants=VARIANTS,
    steps_per_point: int = 10,
    seed: int = 0,
    warmup: int = 3,
    params: SpikingParams = SpikingParams(),
    min_block: float = 0.02,
) -> BenchReport:
    """Time one spiking step for every ``(variant, size)``.

    Within a variant, timed blocks of the different sizes are interleaved
    round-robin so that slow drifts in machine load affect all sizes alike.
    An allocation failure marks that size as failed and skips the larger
    sizes of the variant; the sweep goes on with the next variant.
    """
    sizes = list(sizes)
    if steps_per_point < MIN_STEPS:
        raise ConfigError(f"must be >= {MIN_STEPS}", key="steps_per_point")
    if warmup < MIN_WARMUP:
        raise ConfigError(f"must be >= {MIN_WARMUP}", key="warmup")
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("sizes must be non-empty and strictly ascending", key="sizes")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; expected one of {VARIANTS}", key="variants")
    report = BenchReport(threads=numba.get_num_threads(), seed=seed)
    for variant in variants:
        running = []
        for size in sizes:
            point = BenchPoint(variant, size)
            report.points.append(point)
            try:
                net = make_network(variant, size, seed, params)
                block = _block_size(net, warmup, min_block)
            except MemoryError:
                point.ok = False
                point.error = "allocation failed"
                break
            point.memory_bytes = net.state.nbytes()
            running.append((point, net, block, []))
        for _ in range(steps_per_point):
            for point, net, block, samples in running:
                samples.append(_time_block(net, block))
        for point, _, _, samples in running:
            point.seconds_per_step = float(np.median(samples))
            point.cells_per_second = point.size * point.size / point.seconds_per_step
            point.steps = steps_per_point
        running = None
    return report
