"""Command line entry point: ``inescapable <mode> [--config FILE] [--out DIR] ...``.

Every mode builds a :class:`ResultBundle` in memory and only then writes it,
so a failed run leaves the output directory untouched.  Exit codes: 0 success,
2 configuration error, 3 solver non-convergence, 4 stability or assumption
failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import two_body
from .config import MODES, RunConfig, alpha_spec, load_config, resolve_alpha0
from .ellipsoid import optimize_alpha_analysis
from .errors import ConfigError, EllipsoidError
from .simulate import boundary_states, ellipsoid_boundary_2d, simulate_batch
from .synthesis import (
    closed_loop,
    evaluate_fixed_controller,
    lqr_kalman_baseline,
    optimize_controller,
)

__all__ = ["ResultBundle", "Table", "run", "emit", "main", "read_summary", "EXIT_OK", "EXIT_IO"]

EXIT_OK = 0
EXIT_IO = 5
EXIT_UNCONVERGED = 3


@dataclass
class Table:
    """CSV table; a leading ``t`` column is written with 9 significant digits."""

    header: list
    rows: np.ndarray

    def render(self) -> str:
        lines = [",".join(self.header)]
        timed = bool(self.header) and self.header[0] == "t"
        for row in np.atleast_2d(self.rows) if len(self.rows) else ():
            cells = [repr(float(v)) for v in row]
            if timed:
                cells[0] = f"{row[0]:.9g}"
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


@dataclass
class ResultBundle:
    summary: dict
    tables: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.summary.get("converged", True) else EXIT_UNCONVERGED


def _entry_names(prefix, shape):
    return [f"{prefix}_{i + 1}_{j + 1}" for i in range(shape[0]) for j in range(shape[1])]


def _flat(values):
    return values.reshape(values.shape[0], -1)


def alpha_history_table(iterates, prefix="alpha") -> Table:
    t = iterates[0].times
    cols = [it.resampled(len(t)).nodal for it in iterates]
    return Table(["t"] + [f"{prefix}_{i}" for i in range(len(cols))], np.column_stack([t] + cols))


def size_history_table(columns: dict) -> Table:
    length = max(len(v) for v in columns.values())
    data = [np.arange(length, dtype=float)]
    for v in columns.values():
        col = np.full(length, np.nan)
        col[: len(v)] = v
        data.append(col)
    return Table(["iteration"] + list(columns), np.column_stack(data))


def ellipsoid_table(P, Q, C) -> Table:
    """Nodal ``P``, ``Q`` and the size density ``trace(C P C')`` whose mean is the size."""
    t = P.trajectory.times
    c = C.sample(t)
    density = np.trace(c @ P.values @ np.swapaxes(c, -1, -2), axis1=1, axis2=2)
    header = ["t"] + _entry_names("P", P.values.shape[1:]) + _entry_names("Q", Q.values.shape[1:]) + ["size_density"]
    return Table(header, np.column_stack([t, _flat(P.values), _flat(Q.values), density]))


def gains_table(gains, alpha) -> Table:
    parts, header = [], ["t", "alpha"]
    ref = gains.K if gains.K is not None else gains.L
    t = ref.times
    alpha_vals = alpha.sample(t)[:, 0, 0] if alpha is not None else np.full(len(t), np.nan)
    parts = [t, alpha_vals]
    for name in ("K", "L"):
        g = getattr(gains, name)
        if g is not None:
            header += _entry_names(name, g.shape)
            parts.append(_flat(g.values))
    return Table(header, np.column_stack(parts))


def trajectory_table(run, stride: int = 1) -> Table:
    n, k, m = run.x.shape[1], run.z.shape[1], run.w.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"z_{i + 1}" for i in range(k)]
    header += [f"w_{i + 1}" for i in range(m)] + (["V"] if run.V is not None else [])
    if run.times.size == 0:
        return Table(header, np.zeros((0, len(header))))
    idx = np.arange(0, run.times.size, stride)
    if idx[-1] != run.times.size - 1:
        idx = np.append(idx, run.times.size - 1)
    cols = [run.times[idx], run.x[idx], run.z[idx], run.w[idx]]
    if run.V is not None:
        cols.append(run.V[idx])
    return Table(header, np.column_stack(cols))


def section_tables(fractions, period, curves: dict, points: int) -> tuple[dict, list]:
    """``ellipsoid_t<i>.csv`` sections for every ``(P, C)`` pair whose output is two-dimensional."""
    tables, times = {}, []
    curves = {k: v for k, v in curves.items() if v[1].shape[0] == 2}
    if not curves:
        return tables, times
    for i, frac in enumerate(fractions, start=1):
        t = frac * period
        header, cols = ["t"], [np.full(points, t)]
        for label, (P, C) in curves.items():
            sec = ellipsoid_boundary_2d(P.trajectory, C, t, points)
            pre = f"{label}_" if label else ""
            header += [f"{pre}z_1", f"{pre}z_2"]
            cols.append(sec.boundary)
        tables[f"ellipsoid_t{i}.csv"] = Table(header, np.column_stack(cols))
        times.append(t)
    return tables, times


def _base_summary(cfg: RunConfig, mode: str) -> dict:
    return {
        "mode": mode,
        "grid": cfg.grid,
        "substeps": cfg.substeps,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "accelerate": cfg.accelerate,
        "seed": cfg.seed,
    }


def _history_summary(hist) -> dict:
    return {
        "converged": bool(hist.converged),
        "iterations": hist.iterations,
        "final_step": hist.final_step,
        "stationarity": hist.stationarity,
        "halvings": hist.halvings,
        "rejected_accelerations": hist.rejected,
    }


def _alpha0(cfg, period):
    return resolve_alpha0(cfg.alpha0, period, cfg.grid)


def _analyze(cfg: RunConfig):
    p = cfg.plant
    alpha, hist = optimize_alpha_analysis(
        p.A, p.B1, p.C2, _alpha0(cfg, p.period), cfg.tol, cfg.max_iter, cfg.settings, cfg.accelerate
    )
    return alpha, hist, hist.final, (p.A, p.B1, p.C2), None


def _synthesize(cfg: RunConfig, mode: str):
    p = cfg.plant
    rep = optimize_controller(
        p, mode, _alpha0(cfg, p.period), cfg.tol, cfg.max_iter, cfg.settings, cfg.accelerate
    )
    return rep.alpha, rep.history, rep.history.final, rep.loop, rep.gains


def _baseline(cfg: RunConfig):
    p = cfg.plant
    gains = lqr_kalman_baseline(p, cfg.settings)
    _, alpha, hist = evaluate_fixed_controller(
        p, gains, _alpha0(cfg, p.period), cfg.tol, cfg.max_iter, cfg.settings, cfg.accelerate
    )
    return alpha, hist, hist.final, closed_loop(p, gains), gains


def _design(cfg: RunConfig, kind: str):
    if kind in ("none", "analyze"):
        return _analyze(cfg)
    if kind == "baseline":
        return _baseline(cfg)
    return _synthesize(cfg, kind)


def _design_bundle(cfg, mode, result) -> ResultBundle:
    alpha, hist, final, loop, gains = result
    summary = _base_summary(cfg, mode)
    summary["size"] = final.size
    summary.update(_history_summary(hist))
    tables = {
        "alpha_history.csv": alpha_history_table(hist.iterates),
        "size_history.csv": size_history_table({"size": hist.sizes}),
        "ellipsoid_trajectory.csv": ellipsoid_table(final.P, final.Q, loop[2]),
    }
    if gains is not None:
        tables["gains.csv"] = gains_table(gains, alpha)
    sections, times = section_tables(cfg.sections, alpha.period, {"": (final.P, loop[2])}, cfg.points)
    tables.update(sections)
    summary["section_times"] = times
    return ResultBundle(summary, tables)


def _simulate_runs(loop, P, cfg, rng, runs, policy):
    period = P.trajectory.period
    x0 = boundary_states(P.values[0], runs, rng)
    out = simulate_batch(loop[0], loop[1], loop[2], policy, x0, cfg.horizon * period, cfg.settings, P.trajectory, rng)
    tables = {f"trajectory_{policy}_{i + 1}.csv": trajectory_table(r, cfg.substeps) for i, r in enumerate(out)}
    levels = [r.max_level for r in out]
    return tables, levels


def _simulate_bundle(cfg: RunConfig) -> ResultBundle:
    kind = cfg.controller
    result = _design(cfg, kind)
    bundle = _design_bundle(cfg, "simulate", result)
    _, _, final, loop, _ = result
    rng = np.random.default_rng(cfg.seed)
    tables, levels = _simulate_runs(loop, final.P, cfg, rng, cfg.runs, cfg.policy)
    bundle.tables.update(tables)
    bundle.summary.update(
        controller=kind,
        policy=cfg.policy,
        runs=cfg.runs,
        horizon_periods=cfg.horizon,
        max_level=max(levels) if levels else 0.0,
    )
    return bundle


def _example_bundle(cfg: RunConfig) -> ResultBundle:
    plant = two_body.two_body_plant()
    st = cfg.settings
    kw = dict(tol=cfg.tol, max_iter=cfg.max_iter, settings=st, accelerate=cfg.accelerate)
    high = optimize_controller(plant, "of", two_body.initial_alpha_high(st.nodes), **kw)
    low = optimize_controller(plant, "of", two_body.initial_alpha_low(st.nodes), **kw)
    base_gains = lqr_kalman_baseline(plant, st)
    base_size, base_alpha, base_hist = evaluate_fixed_controller(plant, base_gains, **kw)
    base_loop = closed_loop(plant, base_gains)

    summary = _base_summary(cfg, "example")
    summary.update(_history_summary(high.history))
    summary.update(
        size=high.size,
        converged=bool(high.converged and low.converged and base_hist.converged),
        stationarity=max(high.stationarity, low.stationarity),
        size_low_start=low.size,
        iterations_low_start=low.history.iterations,
        alpha_gap=float(np.max(np.abs(high.alpha.nodal - low.alpha.nodal))),
        baseline_size=base_size,
        baseline_iterations=base_hist.iterations,
        baseline_stationarity=base_hist.stationarity,
        relative_improvement=1.0 - high.size / base_size,
    )
    iterates = high.history.iterates
    t = iterates[0].times
    alpha_cols = [it.nodal for it in iterates] + [it.nodal for it in low.history.iterates]
    header = ["t"] + [f"high_alpha_{i}" for i in range(len(iterates))]
    header += [f"low_alpha_{i}" for i in range(len(low.history.iterates))]
    tables = {
        "alpha_history.csv": Table(header, np.column_stack([t] + alpha_cols)),
        "size_history.csv": size_history_table(
            {
                "size_high_start": high.history.sizes,
                "size_low_start": low.history.sizes,
                "baseline": [base_size] * max(len(high.history.sizes), len(low.history.sizes)),
            }
        ),
        "gains.csv": gains_table(high.gains, high.alpha),
        "baseline_gains.csv": gains_table(base_gains, base_alpha),
        "ellipsoid_trajectory.csv": ellipsoid_table(high.P, high.Q, high.loop.C),
    }
    sections, times = section_tables(
        cfg.sections,
        plant.period,
        {"optimal": (high.P, high.loop.C), "baseline": (base_hist.final.P, base_loop.C)},
        cfg.points,
    )
    tables.update(sections)
    rng = np.random.default_rng(cfg.seed)
    traj, levels = _simulate_runs(high.loop, high.P, cfg, rng, cfg.runs, cfg.policy)
    tables.update(traj)
    summary.update(section_times=times, policy=cfg.policy, runs=cfg.runs, max_level=max(levels) if levels else 0.0)
    return ResultBundle(summary, tables)


def run(cfg: RunConfig) -> ResultBundle:
    """Execute one configured run; nothing is written."""
    start = time.perf_counter()
    if cfg.mode == "example":
        bundle = _example_bundle(cfg)
    elif cfg.mode == "simulate":
        bundle = _simulate_bundle(cfg)
    else:
        kind = {"analyze": "analyze", "synth-sf": "sf", "synth-obs": "obs", "synth-of": "of", "baseline": "baseline"}
        bundle = _design_bundle(cfg, cfg.mode, _design(cfg, kind[cfg.mode]))
    bundle.summary["wall_time"] = time.perf_counter() - start
    return bundle


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (np.floating, np.integer)):
        return _clean(value.item())
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def emit(bundle: ResultBundle, out_dir) -> list[Path]:
    """Write the bundle into ``out_dir``: files are staged and then moved into place."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        names = []
        with open(stage / "summary.json", "w") as fh:
            json.dump(_clean(bundle.summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        names.append("summary.json")
        for name, table in bundle.tables.items():
            with open(stage / name, "w", newline="") as fh:
                fh.write(table.render())
            names.append(name)
        for name in names:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return [out / name for name in names]


def read_summary(path) -> dict:
    with open(Path(path), encoding="utf-8") as fh:
        return json.load(fh)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="output directory (default: run.out or ./results)")
    common.add_argument("--grid", type=int, help="grid nodes per period")
    common.add_argument("--tol", type=float, help="alpha iteration tolerance")
    common.add_argument("--max-iter", type=int, dest="max_iter", help="alpha iteration cap")
    common.add_argument("--seed", type=int, help="seed for random disturbances and initial states")
    common.add_argument("--alpha0", help="initial alpha: a positive number or a CSV file with an alpha column")
    parser = argparse.ArgumentParser(prog="inescapable", description="Minimal inescapable ellipsoids for periodic systems.")
    sub = parser.add_subparsers(dest="mode", required=True)
    helps = {
        "analyze": "optimal alpha and ellipsoid of the open loop (A, B1, C2)",
        "synth-sf": "optimal state feedback",
        "synth-obs": "optimal observer",
        "synth-of": "optimal observer-based output feedback",
        "baseline": "LQR plus Kalman filter, evaluated by its minimal ellipsoid",
        "simulate": "design (run.controller) and simulate from boundary states",
        "example": "built-in two-body benchmark with baseline comparison",
    }
    for mode in MODES:
        sub.add_parser(mode, parents=[common], help=helps[mode])
    return parser


def build_config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config, args.mode)
    elif args.mode == "example":
        cfg = RunConfig(plant=None, mode="example")
    else:
        raise ConfigError(f"mode {args.mode!r} needs --config")
    alpha0 = alpha_spec(args.alpha0, None, "--alpha0") if args.alpha0 is not None else None
    return cfg.with_overrides(grid=args.grid, tol=args.tol, max_iter=args.max_iter, seed=args.seed, alpha0=alpha0)


def _error(exc, code) -> int:
    record = {"status": "error", "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        bundle = run(cfg)
    except EllipsoidError as exc:
        return _error(exc, exc.exit_code)
    out = args.out or Path(cfg.out or "results")
    try:
        emit(bundle, out)
    except OSError as exc:
        return _error(exc, EXIT_IO)
    s = bundle.summary
    print(f"{s['mode']}: size={s['size']:.10g} converged={s['converged']} "
          f"iterations={s['iterations']} stationarity={s['stationarity']:.3g} -> {out}")
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
