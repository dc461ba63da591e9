"""Closed-loop simulation under unit-bounded disturbances.

Trajectories are integrated with fixed-step RK4 on the same step size as the
periodic solvers.  The disturbance is held constant over each step (zero-order
hold) so the bound ``|w| <= 1`` is exact at every hold instant.  Several runs can
be integrated together; coefficients are sampled once and shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, DivergenceError
from .matrix_ode import OdeSettings
from .signals import GridTrajectory

__all__ = [
    "POLICIES",
    "SimulationRun",
    "EllipsoidSection",
    "worst_case_disturbance",
    "simulate_closed_loop",
    "simulate_batch",
    "inescapability_check",
    "lyapunov_level",
    "boundary_states",
    "ellipsoid_boundary_2d",
]

POLICIES = ("worst-case", "random-extreme", "harmonic", "zero")
_DEGENERATE = 1e-12
_BLOWUP = 1e12


@dataclass(frozen=True)
class SimulationRun:
    """One trajectory sampled at every RK4 step.

    ``w[k]`` is the disturbance held on ``[t_k, t_{k+1})``; the last row repeats
    the final hold value so all arrays share the time axis.
    """

    times: np.ndarray
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    V: np.ndarray | None
    policy: str

    @property
    def max_level(self) -> float:
        return float(np.max(self.V)) if self.V is not None and self.V.size else 0.0


@dataclass(frozen=True)
class EllipsoidSection:
    t: float
    S: np.ndarray
    boundary: np.ndarray


def _factor(P):
    try:
        return np.linalg.cholesky(0.5 * (P + np.swapaxes(P, -1, -2)))
    except np.linalg.LinAlgError as exc:
        raise AssumptionError("ellipsoid matrix P(t) is not positive definite") from exc


def _whiten(chol, x):
    """``L^{-1} x`` for stacked Cholesky factors ``L`` and vectors ``x``."""
    return np.linalg.solve(chol, x[..., None])[..., 0]


def worst_case_disturbance(P, B, x, t: float | None = None) -> np.ndarray:
    """Unit disturbance along ``B' P^{-1} x``; the first input direction if that vanishes.

    ``P`` and ``B`` may be matrices or periodic signals (then ``t`` is required).
    """
    if t is not None:
        P = P(t) if callable(P) else P
        B = B(t) if callable(B) else B
    P = np.atleast_2d(np.asarray(P, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    chol = _factor(P)
    y = np.linalg.solve(chol.T, _whiten(chol, x))
    g = B.T @ y
    nrm = np.linalg.norm(g)
    if nrm > _DEGENERATE:
        return g / nrm
    w = np.zeros(B.shape[1])
    w[0] = 1.0
    return w


def _unit_rows(v):
    out = np.zeros_like(v)
    nrm = np.linalg.norm(v, axis=-1)
    ok = nrm > _DEGENERATE
    out[ok] = v[ok] / nrm[ok, None]
    out[~ok, 0] = 1.0
    return out


def _random_sphere(rng, shape):
    return _unit_rows(rng.standard_normal(shape))


def simulate_batch(
    A,
    B,
    C,
    policy: str,
    x0,
    horizon: float,
    settings: OdeSettings = OdeSettings(),
    P: GridTrajectory | None = None,
    rng: np.random.Generator | None = None,
) -> list[SimulationRun]:
    """Integrate ``x' = A x + B w`` for every row of ``x0`` under one disturbance policy.

    ``P`` is needed for the worst-case policy and for the level ``V``.  Random
    disturbances are redrawn at every grid node and held over its substeps.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    if policy == "worst-case" and P is None:
        raise ValueError("the worst-case policy needs the ellipsoid P")
    X0 = np.atleast_2d(np.asarray(x0, dtype=float))
    runs, n = X0.shape
    if A.shape != (n, n):
        raise ValueError(f"x0 has dimension {n}, A is {A.shape}")
    m = B.shape[1]
    period = A.period
    h = settings.step(period)
    steps = max(int(round(horizon / h)), 0)
    if steps and not np.isclose(steps * h, horizon, rtol=1e-9, atol=0):
        h = horizon / steps
    lattice = np.arange(2 * steps + 1) * (0.5 * h)
    a = A.sample(lattice)
    b = B.sample(lattice)
    c = C.sample(lattice[::2])
    times = lattice[::2]
    chol = _factor(P.sample(times)) if P is not None else None

    rng = rng if rng is not None else np.random.default_rng()
    xs = np.empty((steps + 1, runs, n))
    ws = np.zeros((steps + 1, runs, m))
    xs[0] = X0
    x = X0.copy()
    hold = None
    for k in range(steps):
        t = times[k]
        if policy == "worst-case":
            y = np.linalg.solve(np.swapaxes(chol[k], -1, -2), _whiten(chol[k], x).T).T
            w = _unit_rows(y @ b[2 * k])
        elif policy == "random-extreme":
            if hold is None or k % settings.substeps == 0:
                hold = _random_sphere(rng, (runs, m))
            w = hold
        elif policy == "harmonic":
            w = np.broadcast_to(np.sin(np.arange(1, m + 1) * (2 * np.pi / period) * t) / np.sqrt(m), (runs, m))
        else:
            w = np.zeros((runs, m))
        a0, am, a1 = a[2 * k], a[2 * k + 1], a[2 * k + 2]
        f0 = w @ b[2 * k].T
        fm = w @ b[2 * k + 1].T
        f1 = w @ b[2 * k + 2].T
        k1 = x @ a0.T + f0
        k2 = (x + 0.5 * h * k1) @ am.T + fm
        k3 = (x + 0.5 * h * k2) @ am.T + fm
        k4 = (x + h * k3) @ a1.T + f1
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > _BLOWUP:
            raise DivergenceError(f"trajectory diverged at t={times[k + 1]:.6g}", times[k + 1])
        xs[k + 1] = x
        ws[k] = w
    if steps:
        ws[steps] = ws[steps - 1]
    zs = np.einsum("trc,tbc->tbr", c, xs)
    if chol is not None:
        V = np.sum(_whiten(chol[:, None], xs) ** 2, axis=-1)
    out = []
    for r in range(runs):
        out.append(
            SimulationRun(
                times=times.copy(),
                x=xs[:, r].copy(),
                z=zs[:, r].copy(),
                w=ws[:, r].copy(),
                V=V[:, r].copy() if chol is not None else None,
                policy=policy,
            )
        )
    return out


def simulate_closed_loop(
    A,
    B,
    C,
    policy: str,
    x0,
    horizon: float,
    settings: OdeSettings = OdeSettings(),
    P: GridTrajectory | None = None,
    rng: np.random.Generator | None = None,
) -> SimulationRun:
    """Single trajectory of ``x' = A x + B w``, ``z = C x``; see :func:`simulate_batch`."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return simulate_batch(A, B, C, policy, x0[None, :], horizon, settings, P, rng)[0]


def lyapunov_level(P: GridTrajectory, times, x) -> np.ndarray:
    """``x(t)' P(t)^{-1} x(t)`` via a Cholesky solve at each sample."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        return np.zeros(0)
    chol = _factor(P.sample(times))
    return np.sum(_whiten(chol, x) ** 2, axis=-1)


def inescapability_check(P: GridTrajectory, run: SimulationRun) -> float:
    """Largest level ``x' P^{-1} x`` attained along ``run``; at most 1 for an inescapable ``P``."""
    if run.x.shape[1:] != P.shape[:1]:
        raise ValueError(f"run state dimension {run.x.shape[1:]} does not match P {P.shape}")
    levels = lyapunov_level(P, run.times, run.x)
    return float(np.max(levels)) if levels.size else 0.0


def boundary_states(P0, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` random points on the boundary of ``{x : x' P0^{-1} x = 1}``."""
    chol = _factor(np.asarray(P0, dtype=float))
    u = _random_sphere(rng, (count, chol.shape[0]))
    return u @ chol.T


def ellipsoid_boundary_2d(P, C, t: float, points: int = 200) -> EllipsoidSection:
    """Boundary of the output-plane image ``{z : z' S^{-1} z <= 1}`` with ``S = C P C'`` at time ``t``."""
    c = C(t) if callable(C) else np.atleast_2d(np.asarray(C, dtype=float))
    p = P(t) if callable(P) else np.atleast_2d(np.asarray(P, dtype=float))
    if c.shape[0] != 2:
        raise ValueError(f"ellipsoid sections need a 2-dimensional output, got {c.shape[0]}")
    S = c @ p @ c.T
    S = 0.5 * (S + S.T)
    lam, vec = np.linalg.eigh(S)
    if lam[0] <= _DEGENERATE * max(1.0, lam[-1]):
        raise AssumptionError(f"output ellipsoid at t={t:.6g} is degenerate (eigenvalues {lam})")
    root = (vec * np.sqrt(lam)) @ vec.T
    theta = 2 * np.pi * np.arange(points) / points
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return EllipsoidSection(float(t), S, circle @ root.T)
