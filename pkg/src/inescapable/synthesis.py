"""Optimal gain schedules, closed-loop assembly and the alpha design loop.

For a fixed alpha the optimal gains follow from two periodic Riccati
equations: ``K = -B2' Q`` from the control equation and ``L = -alpha P C1'``
from the filter equation.  Output feedback combines both independently.
:func:`optimize_controller` wraps that in the alpha fixed-point iteration run
on the current closed loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ellipsoid import (
    AlphaIterationHistory,
    Evaluation,
    admissible_alpha,
    alpha_iteration,
    optimize_alpha_analysis,
    size_primal,
)
from .errors import AssumptionError
from .lyapunov import PeriodicLyapunovSolution, solve_periodic_P, solve_periodic_Q
from .matrix_ode import OdeSettings
from .riccati import PeriodicRiccatiSolution, periodic_riccati, solve_control_riccati, solve_filter_riccati
from .signals import AlphaProfile, CombinedSignal, GridTrajectory, PeriodicMatrixSignal, node_times

__all__ = [
    "LtvPlant",
    "GainSchedule",
    "ClosedLoop",
    "SynthesisReport",
    "MODES",
    "sf_gain",
    "obs_gain",
    "closed_loop",
    "closed_loop_ellipsoid",
    "synth_state_feedback",
    "synth_observer",
    "synth_output_feedback",
    "optimize_controller",
    "lqr_kalman_baseline",
    "evaluate_fixed_controller",
]

NORMALIZATION_TOL = 1e-9

_REQUIRED = {
    "analysis": ("A", "B1", "C2"),
    "sf": ("A", "B1", "B2", "C2", "D2"),
    "obs": ("A", "B1", "C1", "D1"),
    "of": ("A", "B1", "B2", "C1", "C2", "D1", "D2"),
    "baseline": ("A", "B1", "B2", "C1", "C2", "D1", "D2"),
}
MODES = {"sf": "state-feedback", "obs": "observer", "of": "output-feedback"}


def _t(x):
    return np.swapaxes(x, -1, -2)


@dataclass(frozen=True)
class LtvPlant:
    """Periodic plant ``x' = A x + B2 u + B1 w``, ``y = C1 x + D1 w``, ``z = C2 x + D2 u``.

    ``Cw`` weights the estimation error in observer mode (identity if absent).
    Matrices not needed for a given mode may be left as ``None``.
    """

    A: object
    B1: object = None
    B2: object = None
    C1: object = None
    C2: object = None
    D1: object = None
    D2: object = None
    Cw: object = None

    @property
    def period(self) -> float:
        return self.A.period

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def error_weight(self):
        if self.Cw is not None:
            return self.Cw
        return PeriodicMatrixSignal.constant(np.eye(self.n), self.period)

    def missing(self, mode: str) -> list:
        return [name for name in _REQUIRED[mode] if getattr(self, name) is None]

    def validate(self, mode: str, nodes: int = 256) -> None:
        """Check presence, dimensions, periods and the normalization assumptions at the nodes."""
        missing = self.missing(mode)
        if missing:
            raise AssumptionError(f"plant is missing {', '.join(missing)} required for mode {mode!r}")
        n = self.n
        if self.A.shape != (n, n):
            raise AssumptionError(f"A must be square, got {self.A.shape}")
        for name in ("B1", "B2", "C1", "C2", "D1", "D2", "Cw"):
            sig = getattr(self, name)
            if sig is not None and not math.isclose(sig.period, self.period, rel_tol=1e-12):
                raise AssumptionError(f"{name} has period {sig.period}, A has {self.period}")

        def need(cond, msg):
            if not cond:
                raise AssumptionError(msg)

        for name in ("B1", "B2"):
            sig = getattr(self, name)
            if sig is not None:
                need(sig.shape[0] == n, f"{name} must have {n} rows, got {sig.shape}")
        for name in ("C1", "C2", "Cw"):
            sig = getattr(self, name)
            if sig is not None:
                need(sig.shape[1] == n, f"{name} must have {n} columns, got {sig.shape}")
        t = node_times(self.period, nodes)
        if mode in ("obs", "of", "baseline"):
            need(self.D1.shape == (self.C1.shape[0], self.B1.shape[1]),
                 f"D1 must be {self.C1.shape[0]}x{self.B1.shape[1]}, got {self.D1.shape}")
            d1, b1 = self.D1.sample(t), self.B1.sample(t)
            self._normal(d1 @ _t(b1), 0.0, "D1 B1' = 0", t)
            self._normal(d1 @ _t(d1), np.eye(d1.shape[1]), "D1 D1' = I", t)
        if mode in ("sf", "of", "baseline"):
            need(self.D2.shape == (self.C2.shape[0], self.B2.shape[1]),
                 f"D2 must be {self.C2.shape[0]}x{self.B2.shape[1]}, got {self.D2.shape}")
            d2, c2 = self.D2.sample(t), self.C2.sample(t)
            self._normal(_t(d2) @ c2, 0.0, "D2' C2 = 0", t)
            self._normal(_t(d2) @ d2, np.eye(d2.shape[2]), "D2' D2 = I", t)

    @staticmethod
    def _normal(value, target, label, t):
        err = np.max(np.abs(value - target), axis=(1, 2))
        if np.max(err) > NORMALIZATION_TOL:
            i = int(np.argmax(err))
            raise AssumptionError(f"normalization {label} violated at t={t[i]:.6g} (error {err[i]:.3g})")


@dataclass(frozen=True)
class GainSchedule:
    K: GridTrajectory | None
    L: GridTrajectory | None
    alpha: AlphaProfile | None
    kind: str
    control: PeriodicRiccatiSolution | None = None
    filter: PeriodicRiccatiSolution | None = None


class ClosedLoop(NamedTuple):
    A: object
    B: object
    C: object


@dataclass
class SynthesisReport:
    gains: GainSchedule
    alpha: AlphaProfile
    size: float
    history: AlphaIterationHistory
    P: PeriodicLyapunovSolution
    Q: PeriodicLyapunovSolution
    loop: ClosedLoop
    converged: bool
    stationarity: float
    mode: str = ""


def sf_gain(Q, B) -> GridTrajectory:
    """``K(t) = -B(t)' Q(t)`` at the nodes of ``Q``."""
    traj = Q.trajectory if hasattr(Q, "trajectory") else Q
    b = B.sample(traj.times)
    return GridTrajectory(-_t(b) @ traj.values, traj.period)


def obs_gain(P, C, alpha: AlphaProfile) -> GridTrajectory:
    """``L(t) = -alpha(t) P(t) C(t)'`` at the nodes of ``P``."""
    traj = P.trajectory if hasattr(P, "trajectory") else P
    t = traj.times
    return GridTrajectory(-alpha.sample(t) * (traj.values @ _t(C.sample(t))), traj.period)


def _zeros(rows, cols, period):
    return PeriodicMatrixSignal.constant(np.zeros((rows, cols)), period)


def closed_loop(plant: LtvPlant, gains: GainSchedule) -> ClosedLoop:
    """Closed-loop ``(A, B, C)`` for the gain kind.

    Output feedback is assembled in ``(x, e = x - xhat)`` coordinates::

        A_cl = [[A + B2 K, -B2 K], [0, A + L C1]]
        B_cl = [[B1], [B1 + L D1]]
        C_cl = [C2 + D2 K, -D2 K]
    """
    T = plant.period
    n = plant.n
    kind = gains.kind
    if kind == "state-feedback":
        K = gains.K if gains.K is not None else _zeros(plant.B2.shape[1], n, T)
        return ClosedLoop(
            CombinedSignal(lambda a, b2, k: a + b2 @ k, plant.A, plant.B2, K),
            plant.B1,
            CombinedSignal(lambda c2, d2, k: c2 + d2 @ k, plant.C2, plant.D2, K),
        )
    if kind == "observer":
        L = gains.L if gains.L is not None else _zeros(n, plant.C1.shape[0], T)
        return ClosedLoop(
            CombinedSignal(lambda a, l, c1: a + l @ c1, plant.A, L, plant.C1),
            CombinedSignal(lambda b1, l, d1: b1 + l @ d1, plant.B1, L, plant.D1),
            plant.error_weight,
        )
    if kind in ("output-feedback", "baseline"):
        K = gains.K if gains.K is not None else _zeros(plant.B2.shape[1], n, T)
        L = gains.L if gains.L is not None else _zeros(n, plant.C1.shape[0], T)

        def a_cl(a, b2, k, l, c1):
            bk = b2 @ k
            top = np.concatenate([a + bk, -bk], axis=-1)
            bottom = np.concatenate([np.zeros_like(a), a + l @ c1], axis=-1)
            return np.concatenate([top, bottom], axis=-2)

        def b_cl(b1, l, d1):
            return np.concatenate([b1, b1 + l @ d1], axis=-2)

        def c_cl(c2, d2, k):
            dk = d2 @ k
            return np.concatenate([c2 + dk, -dk], axis=-1)

        return ClosedLoop(
            CombinedSignal(a_cl, plant.A, plant.B2, K, L, plant.C1),
            CombinedSignal(b_cl, plant.B1, L, plant.D1),
            CombinedSignal(c_cl, plant.C2, plant.D2, K),
        )
    raise ValueError(f"unknown gain kind {kind!r}")


def closed_loop_ellipsoid(plant, gains, alpha, settings: OdeSettings = OdeSettings()):
    """Closed-loop minimal ellipsoid, its dual and the size, for fixed gains and alpha."""
    loop = closed_loop(plant, gains)
    P = solve_periodic_P(loop.A, loop.B, alpha, settings)
    Q = solve_periodic_Q(loop.A, loop.C, alpha, settings)
    return Evaluation(size_primal(loop.C, P), P, Q, loop.B, loop)


def synth_state_feedback(plant: LtvPlant, alpha: AlphaProfile, settings: OdeSettings = OdeSettings(), **kw) -> GainSchedule:
    """Optimal state feedback ``K = -B2'Q`` for a fixed alpha."""
    plant.validate("sf")
    Q = solve_control_riccati(plant.A, plant.B2, plant.C2, alpha, settings, **kw)
    return GainSchedule(sf_gain(Q, plant.B2), None, alpha, "state-feedback", control=Q)


def synth_observer(plant: LtvPlant, alpha: AlphaProfile, settings: OdeSettings = OdeSettings(), **kw) -> GainSchedule:
    """Optimal observer gain ``L = -alpha P C1'`` for a fixed alpha."""
    plant.validate("obs")
    P = solve_filter_riccati(plant.A, plant.B1, plant.C1, alpha, settings, **kw)
    return GainSchedule(None, obs_gain(P, plant.C1, alpha), alpha, "observer", filter=P)


def synth_output_feedback(
    plant: LtvPlant, alpha: AlphaProfile, settings: OdeSettings = OdeSettings(), control_kw=None, filter_kw=None
) -> GainSchedule:
    """Observer-based output feedback; the two gains are designed independently."""
    sf = synth_state_feedback(plant, alpha, settings, **(control_kw or {}))
    obs = synth_observer(plant, alpha, settings, **(filter_kw or {}))
    return GainSchedule(sf.K, obs.L, alpha, "output-feedback", control=sf.control, filter=obs.filter)


def optimize_controller(
    plant: LtvPlant,
    mode: str = "of",
    alpha0: AlphaProfile | None = None,
    tol: float = 1e-7,
    max_iter: int = 200,
    settings: OdeSettings = OdeSettings(),
    accelerate: bool = True,
) -> SynthesisReport:
    """Alternate gain synthesis and the alpha update on the closed loop until alpha settles.

    The result is a candidate optimum: the closed-loop objective need not be
    convex in alpha.  ``alpha0`` defaults to the constant 1.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {sorted(MODES)}")
    plant.validate(mode)
    if alpha0 is None:
        alpha0 = AlphaProfile.constant(1.0, plant.period, settings.nodes)
    warm = {}

    def synth(alpha):
        ckw = {"initial": warm["control"]} if "control" in warm else {}
        fkw = {"initial": warm["filter"]} if "filter" in warm else {}
        if mode == "sf":
            g = synth_state_feedback(plant, alpha, settings, **ckw)
        elif mode == "obs":
            g = synth_observer(plant, alpha, settings, **fkw)
        else:
            g = synth_output_feedback(plant, alpha, settings, ckw, fkw)
        if g.control is not None:
            warm["control"] = g.control.values[0]
        if g.filter is not None:
            warm["filter"] = g.filter.values[0]
        return g

    def evaluate(alpha):
        gains = synth(alpha)
        ev = closed_loop_ellipsoid(plant, gains, alpha, settings)
        return ev._replace(extra=(gains, ev.extra))

    alpha, hist = alpha_iteration(evaluate, alpha0, tol, max_iter, accelerate)
    final = hist.final
    gains, loop = final.extra
    return SynthesisReport(
        gains=gains,
        alpha=alpha,
        size=final.size,
        history=hist,
        P=final.P,
        Q=final.Q,
        loop=loop,
        converged=hist.converged,
        stationarity=hist.stationarity,
        mode=mode,
    )


def lqr_kalman_baseline(plant: LtvPlant, settings: OdeSettings = OdeSettings(), **kw) -> GainSchedule:
    """Periodic LQR (weights C2'C2, 1) combined with a periodic Kalman filter (B1 B1', I)."""
    plant.validate("baseline")
    gram = lambda c: _t(c) @ c  # noqa: E731
    outer = lambda b: b @ _t(b)  # noqa: E731
    Q = periodic_riccati(
        plant.A, CombinedSignal(gram, plant.C2), CombinedSignal(outer, plant.B2), settings, adjoint=True, **kw
    )
    P = periodic_riccati(
        plant.A, CombinedSignal(outer, plant.B1), CombinedSignal(gram, plant.C1), settings, adjoint=False, **kw
    )
    K = sf_gain(Q, plant.B2)
    t = P.trajectory.times
    L = GridTrajectory(-(P.values @ _t(plant.C1.sample(t))), plant.period)
    return GainSchedule(K, L, None, "baseline", control=Q, filter=P)


def evaluate_fixed_controller(
    plant: LtvPlant,
    gains: GainSchedule,
    alpha0: AlphaProfile | None = None,
    tol: float = 1e-7,
    max_iter: int = 200,
    settings: OdeSettings = OdeSettings(),
    accelerate: bool = True,
) -> tuple[float, AlphaProfile, AlphaIterationHistory]:
    """Minimal inescapable-ellipsoid size of the loop closed with frozen gains."""
    loop = closed_loop(plant, gains)
    admissible_alpha(loop.A, settings)  # raises StabilityError for an unstable loop
    alpha, hist = optimize_alpha_analysis(loop.A, loop.B, loop.C, alpha0, tol, max_iter, settings, accelerate)
    return hist.sizes[-1], alpha, hist
