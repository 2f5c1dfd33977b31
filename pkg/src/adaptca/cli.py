"""Command-line entry point: ``adaptca {ising,rate,spiking,bench} [flags]``.

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import histogram, write_csv
from .config import RunConfig, parse_config, serialize
from .errors import ConfigError, FormatError
from .grid import Grid
from .io import load_pgm, write_pgm, write_snapshot, write_snapshot_pgms
from .ising import IsingSimulation, SocParams
from .rate import RateNetwork, RateParams, RateState, imprint_image, phase_sweep
from .spiking import CHANNELS, SpikingNetwork, SpikingParams, present_stimulus, spike_statistics

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_param_flags(parser, params_cls, prefix: str, skip=()):
    group = parser.add_argument_group(f"{params_cls.__name__} overrides")
    for f in dataclasses.fields(params_cls):
        if f.name in skip:
            continue
        kind = type(f.default)
        group.add_argument(
            _flag(f.name), dest=f"{prefix}.{f.name}", type=kind, default=argparse.SUPPRESS,
            metavar=kind.__name__.upper(), help=f"default {f.default}",
        )


def _common(parser):
    s = argparse.SUPPRESS
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=s)
    parser.add_argument("--threads", type=int, default=s)
    parser.add_argument("--out-dir", dest="out_dir", default=s)
    parser.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=s)
    parser.add_argument("--size", type=int, default=s)
    parser.add_argument("--steps", type=int, default=s)


def build_parser() -> argparse.ArgumentParser:
    s = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="adaptca", description="Adaptive cellular automata simulations")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="model", required=True)

    p = sub.add_parser("ising", help="self-organizing Ising model")
    _common(p)
    p.add_argument("--mode", dest="ising.mode", choices=("local", "global", "fixed"), default=s)
    p.add_argument("--temp-init", dest="ising.temp_init", type=float, default=s)
    p.add_argument("--update-fraction", dest="ising.update_fraction", type=float, default=s)
    p.add_argument("--measure-patch", dest="ising.measure_patch", type=int, default=s)
    p.add_argument("--spin-init", dest="ising.spin_init", choices=("random", "up"), default=s)
    p.add_argument("--record-every", dest="ising.record_every", type=int, default=s)
    _add_param_flags(p, SocParams, "ising.params")

    p = sub.add_parser("rate", help="plastic rate network")
    _common(p)
    p.add_argument("--plasticity", dest="rate.plasticity", type=_on_off, default=s, metavar="{on,off}")
    p.add_argument("--image", dest="rate.image", default=s, help="PGM stimulus; runs imprinting")
    p.add_argument("--input-gain", dest="rate.input_gain", type=float, default=s)
    p.add_argument("--normalize", dest="rate.normalize", choices=("both", "excitatory", "none"), default=s)
    p.add_argument("--sweep", dest="rate.sweep", action="store_true", default=s, help="run the (p_E, g) phase sweep")
    p.add_argument("--sweep-n", dest="rate.sweep_n", type=int, default=s)
    p.add_argument("--record-every", dest="rate.record_every", type=int, default=s)
    _add_param_flags(p, RateParams, "rate.params")

    p = sub.add_parser("spiking", help="plastic eLIF spiking network")
    _common(p)
    p.add_argument("--plasticity", dest="spiking.plasticity", type=_on_off, default=s, metavar="{on,off}")
    p.add_argument("--image", dest="spiking.image", default=s, help="PGM stimulus for the memory probe")
    p.add_argument("--stim-on", dest="spiking.stim_on", type=int, default=s)
    p.add_argument("--stim-off", dest="spiking.stim_off", type=int, default=s)
    p.add_argument("--normalize", dest="spiking.normalize", choices=("both", "excitatory", "none"), default=s)
    p.add_argument("--record-every", dest="spiking.record_every", type=int, default=s)
    _add_param_flags(p, SpikingParams, "spiking.params")

    p = sub.add_parser("bench", help="spiking-model scaling benchmark")
    _common(p)
    p.add_argument("--sizes", dest="bench.sizes", type=int, nargs="+", default=s)
    p.add_argument(
        "--variants", dest="bench.variants", nargs="+", default=s,
        choices=("homogeneous", "heterogeneous", "heterogeneous-plastic"),
    )
    p.add_argument("--steps-per-point", dest="bench.steps_per_point", type=int, default=s)
    p.add_argument("--warmup", dest="bench.warmup", type=int, default=s)
    return parser


def set_threads(n: int) -> int:
    """Set the numba worker count, capped at the pool size; returns the count used."""
    import numba

    used = min(n, numba.config.NUMBA_NUM_THREADS)
    if used < n:
        print(f"adaptca: only {used} worker threads available (set NUMBA_NUM_THREADS)", file=sys.stderr)
    numba.set_num_threads(used)
    return used


class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def snapshot(self, stem: str, grid: Grid, step: int, names) -> None:
        write_snapshot(self.path(f"snapshots/{stem}.aca"), grid, step)
        for name in names:
            self.files.append(f"snapshots/{stem}_{name}.pgm")
        write_snapshot_pgms(self.root / "snapshots", stem, grid, names)


def _load_image(path, key: str) -> np.ndarray:
    try:
        return load_pgm(path)
    except OSError as exc:
        raise ConfigError(f"cannot read image {path}: {exc.strerror}", key=key) from exc


# Largest raster (cells x ticks) kept in memory for spike statistics.
RASTER_LIMIT = 2 * 10**8


def _due(cfg: RunConfig, t: int) -> bool:
    return cfg.snapshot_every > 0 and t % cfg.snapshot_every == 0


def run_ising(cfg: RunConfig, out: Outputs) -> dict:
    ic = cfg.ising
    sim = IsingSimulation(
        size=cfg.size, mode=ic.mode, temp_init=ic.temp_init, params=ic.params,
        update_fraction=ic.update_fraction, adapt_every=ic.adapt_every,
        measure_patch=ic.measure_patch, J=ic.J, seed=cfg.seed, spin_init=ic.spin_init,
    )
    names = ("spins", "temps")

    records = []
    for _ in range(cfg.steps):
        sim.step()
        if sim.t % ic.record_every == 0:
            records.append(sim.observables())
        if _due(cfg, sim.t):
            out.snapshot(f"step_{sim.t:08d}", sim.state.to_grid(), sim.t, names)
    header = ("step", "mean_T", "abs_M", "E_per_spin")
    write_csv(out.path("timeseries.csv"), header, ([r[k] for k in header] for r in records))
    out.snapshot("final", sim.state.to_grid(), sim.t, names)
    temps = sim.state.temperature_field()
    counts, edges = histogram(temps, bins=50)
    write_csv(out.path("temperature_histogram.csv"), ("bin_lo", "bin_hi", "count"), zip(edges[:-1], edges[1:], counts))
    final = sim.observables()
    return {"final": final, "clamp_count": sim.state.clamp_count}


def kernel_mosaic(weights: np.ndarray) -> np.ndarray:
    """Tile every cell's ``k x k`` incoming kernel into one ``(H k, W k)`` image."""
    h, w, k, _ = weights.shape
    return weights.transpose(0, 2, 1, 3).reshape(h * k, w * k)


def run_rate(cfg: RunConfig, out: Outputs) -> dict:
    rc = cfg.rate
    params = rc.params
    if rc.sweep:
        values = np.linspace(0.0, 1.0, rc.sweep_n)
        gains = np.linspace(0.0, 10.0, rc.sweep_n)
        diag = phase_sweep(values, gains, steps=max(cfg.steps, 1), seed=cfg.seed, size=cfg.size, params=params)
        rows = []
        for i, g in enumerate(diag.g):
            for j, pe in enumerate(diag.p_e):
                rows.append((pe, g, diag.mean_activity[i, j], diag.cv[i, j], diag.cv_undefined[i, j], diag.balance[j]))
        write_csv(out.path("phase_sweep.csv"), ("p_e", "g", "mean_activity", "cv", "cv_undefined", "balance_g"), rows)
        return {"points": len(rows)}

    state = RateState.create(cfg.size, params, cfg.seed)
    summary = {}
    if rc.image is not None:
        image = _load_image(rc.image, "rate.image")
        res = imprint_image(state, image, steps=cfg.steps, tol=rc.tol, input_gain=rc.input_gain, normalize=rc.normalize)
        summary.update(
            corr_incoming=res.corr_incoming, corr_outgoing=res.corr_outgoing,
            steps=res.steps, converged=res.converged,
        )
        write_csv(out.path("imprint.csv"), list(summary), [list(summary.values())])
    else:
        net = RateNetwork(state, hebbian=rc.plasticity, inhibitory=rc.plasticity, normalize=rc.normalize)
        rows = []
        for _ in range(cfg.steps):
            net.step()
            if net.t % rc.record_every == 0:
                exc = state.ei_sign > 0
                rows.append((net.t, state.r.mean(), state.r[exc].mean() if exc.any() else np.nan,
                             state.r[~exc].mean() if (~exc).any() else np.nan))
            if _due(cfg, net.t):
                out.snapshot(f"step_{net.t:08d}", Grid.from_channels(state.r), net.t, ("r",))
        write_csv(out.path("timeseries.csv"), ("step", "mean_r", "mean_r_exc", "mean_r_inh"), rows)
        summary["mean_r"] = float(state.r.mean())
    incoming = state.conn.incoming_sums()
    outgoing = state.conn.outgoing_sums()
    out.snapshot("weights", Grid.from_channels(incoming, outgoing), cfg.steps, ("incoming", "outgoing"))
    out.snapshot("final", Grid.from_channels(state.r), cfg.steps, ("r",))
    write_pgm(out.path("kernel_mosaic.pgm"), kernel_mosaic(state.conn.effective_weights(params.g)))
    return summary


def run_spiking(cfg: RunConfig, out: Outputs) -> dict:
    sc = cfg.spiking
    net = SpikingNetwork.create(cfg.size, sc.params, cfg.seed, plasticity=sc.plasticity, normalize=sc.normalize)
    raster_path = out.path("raster.csv")
    keep_raster = cfg.size * cfg.size * cfg.steps <= RASTER_LIMIT
    raster = []
    with raster_path.open("w") as fh:
        fh.write("tick,x,y\n")

        def record(t, n):
            s = n.state.S
            if keep_raster:
                raster.append(s.astype(bool))
            ys, xs = np.nonzero(s)
            fh.writelines(f"{t},{x},{y}\n" for x, y in zip(xs, ys))
            if _due(cfg, t):
                out.snapshot(f"step_{t:08d}", n.state.to_grid(), t, CHANNELS)

        summary = {}
        if sc.image is not None:
            image = _load_image(sc.image, "spiking.image")
            if image.shape != net.state.shape:
                raise ConfigError(f"image shape {image.shape} does not match grid {net.state.shape}", key="spiking.image")
            if not sc.stim_on <= sc.stim_off <= cfg.steps:
                raise ConfigError("need stim_on <= stim_off <= steps", key="spiking.stim_off")
            rec = present_stimulus(net, image, sc.stim_on, sc.stim_off, cfg.steps, sc.record_every, callback=record)
            write_csv(out.path("memory_probe.csv"), ("tick", "corr_threshold", "corr_rate"),
                      zip(rec.ticks, rec.corr_threshold, rec.corr_rate))
            summary["image_defined"] = rec.image_defined
            for phase, plane in rec.threshold_maps.items():
                write_pgm(out.path(f"threshold_{phase}.pgm"), plane)
            for phase, plane in rec.rate_maps.items():
                write_pgm(out.path(f"rate_{phase}.pgm"), plane)
        else:
            net.run(cfg.steps, callback=record)
    out.snapshot("final", net.state.to_grid(), net.t, CHANNELS)
    if len(raster) >= 1000:
        stats = spike_statistics(np.array(raster))
        summary.update(
            mean_rate=float(stats.rates.mean()), mean_cv=stats.mean_cv, synchrony=stats.synchrony,
            rate_cv=stats.rate_cv, cv_cells=stats.n_cv_cells, empty=stats.empty,
        )
        write_csv(out.path("statistics.csv"), list(summary), [list(summary.values())])
        h, w = net.state.shape
        ys, xs = np.mgrid[:h, :w]
        write_csv(out.path("cell_statistics.csv"), ("x", "y", "rate", "cv"),
                  zip(xs.ravel(), ys.ravel(), stats.rates.ravel(), stats.cv.ravel()))
    return summary


def run_bench(cfg: RunConfig, out: Outputs) -> dict:
    from .bench import run_benchmark

    bc = cfg.bench
    report = run_benchmark(bc.sizes, bc.variants, bc.steps_per_point, cfg.seed, bc.warmup, cfg.spiking.params)
    report.write_csv(out.path("bench.csv"))
    return {"points": len(report.points), "failed": sum(not p.ok for p in report.points)}


RUNNERS = {"ising": run_ising, "rate": run_rate, "spiking": run_spiking, "bench": run_bench}


def resolve(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    config_file = args.pop("config", None)
    return parse_config(config_file, args)


def _jsonable(obj):
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
        threads = set_threads(cfg.threads)
        out = Outputs(Path(cfg.out_dir))
    except SystemExit as exc:  # argparse usage errors (2) and --help / --version (0)
        return int(exc.code or 0)
    except (ConfigError, FormatError) as exc:
        print(f"adaptca: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {
        "version": __version__,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": json.loads(serialize(cfg)),
        "seed": cfg.seed,
        "threads": threads,
    }
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        manifest["summary"] = _jsonable(RUNNERS[cfg.model](cfg, out))
        manifest["status"] = "ok"
    except (ConfigError, FormatError) as exc:
        print(f"adaptca: config error: {exc}", file=sys.stderr)
        manifest["status"] = f"config error: {exc}"
        code = EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any failure through the exit code
        print(f"adaptca: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        manifest["status"] = f"runtime failure: {type(exc).__name__}: {exc}"
        code = EXIT_RUNTIME
    manifest["elapsed_s"] = time.perf_counter() - t0
    manifest["outputs"] = out.files
    (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
