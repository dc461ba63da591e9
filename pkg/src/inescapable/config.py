"""TOML run configuration.

Layout::

    [system]
    period = "2pi"          # number, or "<c>pi" / "<c>*pi"
    n = 4                   # state dimension
    mw = 3                  # disturbance inputs   (B1, D1 columns)
    mu = 1                  # control inputs       (B2, D2 columns)
    py = 2                  # measurements         (C1, D1 rows)
    pz = 2                  # regulated outputs    (C2, D2 rows)

    [matrices.A]
    "1,3" = 1.0
    "3,1" = { const = -20.0, cos = [[2, -6.0]], sin = [[1, -4.0]] }

    [solver]
    grid = 2048
    substeps = 4
    tol = 1e-7
    max_iter = 200
    accelerate = true

    [run]
    mode = "synth-of"
    alpha0 = 1.0            # number, Fourier table, or path to a CSV with an alpha column
    seed = 0

Entries are 1-based ``"row,col"`` keys; omitted entries are zero.  A matrix
table may carry ``shape = [rows, cols]`` to override the size implied by the
system dimensions (needed for ``Cw``).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import AssumptionError, ConfigError
from .matrix_ode import OdeSettings
from .signals import AlphaProfile, FourierEntry, PeriodicMatrixSignal, node_times
from .synthesis import LtvPlant

__all__ = [
    "RunConfig",
    "MODES",
    "POLICY_DEFAULT",
    "alpha_spec",
    "check_plant",
    "load_config",
    "parse_config",
    "parse_period",
    "resolve_alpha0",
]

MODES = ("analyze", "synth-sf", "synth-obs", "synth-of", "baseline", "simulate", "example")
PLANT_MODE = {
    "analyze": "analysis",
    "synth-sf": "sf",
    "synth-obs": "obs",
    "synth-of": "of",
    "baseline": "baseline",
}
CONTROLLERS = ("none", "sf", "obs", "of", "baseline")
POLICY_DEFAULT = "worst-case"
MIN_GRID = 64

_SHAPES = {
    "A": ("n", "n"),
    "B1": ("n", "mw"),
    "B2": ("n", "mu"),
    "C1": ("py", "n"),
    "C2": ("pz", "n"),
    "D1": ("py", "mw"),
    "D2": ("pz", "mu"),
    "Cw": (None, "n"),
}
_SECTIONS = {"system", "matrices", "solver", "run"}
_SOLVER_KEYS = {"grid", "substeps", "tol", "max_iter", "accelerate"}
_RUN_KEYS = {
    "mode", "alpha0", "seed", "out", "controller", "policy", "runs", "horizon", "sections", "points",
}


@dataclass
class RunConfig:
    """Validated run description; ``plant`` is ``None`` only for the built-in example."""

    plant: LtvPlant | None
    mode: str
    alpha0: object = None
    grid: int = 2048
    substeps: int = 4
    tol: float = 1e-7
    max_iter: int = 200
    accelerate: bool = True
    seed: int = 0
    out: str | None = None
    controller: str = "none"
    policy: str = POLICY_DEFAULT
    runs: int = 10
    horizon: float = 2.0
    sections: tuple = (1 / 3, 2 / 3, 1.0)
    points: int = 200
    source: dict = field(default_factory=dict)

    @property
    def settings(self) -> OdeSettings:
        return OdeSettings(self.grid, self.substeps)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **kw)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if int(self.grid) != self.grid or self.grid < MIN_GRID:
            raise ConfigError(f"grid must be an integer >= {MIN_GRID}, got {self.grid}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError(f"substeps must be a positive integer, got {self.substeps}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {', '.join(CONTROLLERS)}")
        if not self.horizon > 0:
            raise ConfigError("horizon (in periods) must be positive")
        if self.runs < 0 or self.points < 3:
            raise ConfigError("runs must be >= 0 and points >= 3")
        if any(not 0 < s <= 1 for s in self.sections):
            raise ConfigError("sections are fractions of the period in (0, 1]")


def parse_period(value) -> float:
    if isinstance(value, bool):
        raise ConfigError("system.period must be a number or a multiple of pi")
    if isinstance(value, (int, float)):
        period = float(value)
    elif isinstance(value, str):
        m = re.fullmatch(r"\s*([0-9.eE+\-]*)\s*\*?\s*pi\s*", value)
        if m is None:
            raise ConfigError(f"cannot parse system.period {value!r}")
        try:
            period = (float(m.group(1)) if m.group(1) else 1.0) * math.pi
        except ValueError as exc:
            raise ConfigError(f"cannot parse system.period {value!r}") from exc
    else:
        raise ConfigError("system.period must be a number or a multiple of pi")
    if not period > 0 or not math.isfinite(period):
        raise ConfigError("system.period must be positive")
    return period


def _pairs(value, where):
    if not isinstance(value, list) or any(not isinstance(p, list) or len(p) != 2 for p in value):
        raise ConfigError(f"{where} must be a list of [harmonic, amplitude] pairs")
    return [tuple(p) for p in value]


def _entry(value, where) -> FourierEntry:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: booleans are not matrix entries")
    if isinstance(value, (int, float)):
        return FourierEntry(float(value))
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a number or a {{const, cos, sin}} table")
    unknown = set(value) - {"const", "cos", "sin"}
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return FourierEntry(
            float(value.get("const", 0.0)),
            cos=_pairs(value.get("cos", []), f"{where}.cos"),
            sin=_pairs(value.get("sin", []), f"{where}.sin"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _dim(system, key, name):
    if key not in system:
        raise ConfigError(f"matrix {name} needs system.{key}")
    v = system[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"system.{key} must be a positive integer")
    return v


def _matrix(name, table, system, period) -> PeriodicMatrixSignal:
    if not isinstance(table, dict):
        raise ConfigError(f"matrices.{name} must be a table")
    table = dict(table)
    if "shape" in table:
        shape = table.pop("shape")
        if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) and s > 0 for s in shape)):
            raise ConfigError(f"matrices.{name}.shape must be [rows, cols] with positive integers")
        rows, cols = shape
    else:
        rkey, ckey = _SHAPES[name]
        if rkey is None:
            raise ConfigError(f"matrices.{name} needs an explicit shape = [rows, cols]")
        rows, cols = _dim(system, rkey, name), _dim(system, ckey, name)
    grid = [[FourierEntry(0.0) for _ in range(cols)] for _ in range(rows)]
    for key, value in table.items():
        m = re.fullmatch(r"\s*(\d+)\s*,\s*(\d+)\s*", key)
        if m is None:
            raise ConfigError(f"matrices.{name}: entry key {key!r} is not of the form \"row,col\"")
        r, c = int(m.group(1)), int(m.group(2))
        if not (1 <= r <= rows and 1 <= c <= cols):
            raise ConfigError(f"matrices.{name}: entry ({r},{c}) outside the {rows}x{cols} shape")
        grid[r - 1][c - 1] = _entry(value, f"matrices.{name}.\"{key}\"")
    return PeriodicMatrixSignal(grid, period)


def alpha_spec(value, base: Path | None, where="run.alpha0"):
    if value is None:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{where} must be a number, a Fourier table or a CSV path")
    if isinstance(value, (int, float)):
        if not value > 0:
            raise ConfigError(f"{where} must be positive")
        return float(value)
    if isinstance(value, dict):
        return _entry(value, where)
    if isinstance(value, str):
        try:
            return alpha_spec(float(value), base, where)
        except ValueError:
            pass
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        return path
    raise ConfigError(f"{where} must be a number, a Fourier table or a CSV path")


def _read_alpha_csv(path: Path, period: float, nodes: int) -> AlphaProfile:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read alpha0 file {path}: {exc}") from exc
    if len(rows) < 3:
        raise ConfigError(f"{path}: expected a header and at least two rows")
    header = rows[0]
    col = header.index("alpha") if "alpha" in header else len(header) - 1
    try:
        values = np.array([float(r[col]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed alpha column ({exc})") from exc
    try:
        return AlphaProfile(values, period).resampled(nodes)
    except AssumptionError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_alpha0(spec, period: float, nodes: int) -> AlphaProfile | None:
    """Turn an alpha0 specification into a grid profile (``None`` keeps the solver default)."""
    if spec is None:
        return None
    if isinstance(spec, float):
        return AlphaProfile.constant(spec, period, nodes)
    if isinstance(spec, FourierEntry):
        sig = PeriodicMatrixSignal([[spec]], period)
        vals = sig.sample(node_times(period, nodes))[:, 0, 0]
        try:
            return AlphaProfile(vals, period)
        except AssumptionError as exc:
            raise ConfigError(f"alpha0: {exc}") from exc
    return _read_alpha_csv(Path(spec), period, nodes)


def _typed(section, key, kind, default, where):
    if key not in section:
        return default
    v = section[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if kind is int and isinstance(v, bool) or not isinstance(v, kind):
        raise ConfigError(f"{where}.{key} must be of type {kind.__name__}")
    return v


def parse_config(data: dict, base: Path | None = None, mode: str | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML data; ``mode`` overrides ``run.mode``."""
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    run = data.get("run", {})
    solver = data.get("solver", {})
    for sect, keys, label in ((run, _RUN_KEYS, "run"), (solver, _SOLVER_KEYS, "solver")):
        extra = set(sect) - keys
        if extra:
            raise ConfigError(f"unknown keys in [{label}]: {sorted(extra)}")
    mode = mode or _typed(run, "mode", str, "analyze", "run")
    plant = None
    if mode != "example" or "system" in data:
        system = data.get("system")
        if not isinstance(system, dict):
            raise ConfigError("missing [system] section")
        if "period" not in system:
            raise ConfigError("system.period is required")
        period = parse_period(system["period"])
        matrices = data.get("matrices", {})
        extra = set(matrices) - set(_SHAPES)
        if extra:
            raise ConfigError(f"unknown matrices {sorted(extra)}; expected names from {sorted(_SHAPES)}")
        if "A" not in matrices:
            raise ConfigError("matrices.A is required")
        sigs = {name: _matrix(name, table, system, period) for name, table in matrices.items()}
        plant = LtvPlant(**sigs)
    sections = run.get("sections", [1 / 3, 2 / 3, 1.0])
    if not isinstance(sections, list) or not all(isinstance(s, (int, float)) for s in sections):
        raise ConfigError("run.sections must be a list of period fractions")
    cfg = RunConfig(
        plant=plant,
        mode=mode,
        alpha0=alpha_spec(run.get("alpha0"), base),
        grid=_typed(solver, "grid", int, 2048, "solver"),
        substeps=_typed(solver, "substeps", int, 4, "solver"),
        tol=_typed(solver, "tol", float, 1e-7, "solver"),
        max_iter=_typed(solver, "max_iter", int, 200, "solver"),
        accelerate=_typed(solver, "accelerate", bool, True, "solver"),
        seed=_typed(run, "seed", int, 0, "run"),
        out=_typed(run, "out", str, None, "run"),
        controller=_typed(run, "controller", str, "none", "run"),
        policy=_typed(run, "policy", str, POLICY_DEFAULT, "run"),
        runs=_typed(run, "runs", int, 10, "run"),
        horizon=_typed(run, "horizon", float, 2.0, "run"),
        sections=tuple(float(s) for s in sections),
        points=_typed(run, "points", int, 200, "run"),
        source=data,
    )
    cfg.check()
    if plant is not None:
        check_plant(cfg)
    return cfg


def check_plant(cfg: RunConfig) -> None:
    """Presence and structural assumptions of the matrices the mode needs.

    Missing matrices are configuration errors; violated normalizations raise
    :class:`AssumptionError`.
    """
    need = PLANT_MODE.get(cfg.mode)
    if cfg.mode == "simulate":
        need = {"none": "analysis"}.get(cfg.controller, cfg.controller)
    if need is None:
        return
    missing = cfg.plant.missing(need)
    if missing:
        raise ConfigError(f"mode {cfg.mode!r} needs matrices {', '.join(missing)} (missing from [matrices])")
    cfg.plant.validate(need)


def load_config(path, mode: str | None = None) -> RunConfig:
    """Read and validate a TOML run configuration, optionally for another mode than ``run.mode``."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent, mode)
