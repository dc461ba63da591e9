"""Ellipsoid size, its dual form, and the optimal-alpha fixed-point iteration."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import AssumptionError, StabilityError
from .lyapunov import PeriodicLyapunovSolution, solve_periodic_P, solve_periodic_Q
from .matrix_ode import OdeSettings, state_transition
from .signals import AlphaProfile, GridTrajectory

__all__ = [
    "EllipsoidFamily",
    "AlphaIterationHistory",
    "size_primal",
    "size_dual",
    "alpha_update",
    "stationarity_residual",
    "minimal_ellipsoid",
    "admissible_alpha",
    "optimize_alpha_analysis",
    "convexity_probe",
    "alpha_iteration",
]

ALPHA_FLOOR = 1e-8
DESCENT_SLACK = 1e-8
MAX_HALVINGS = 5


def _tr(x):
    return np.trace(x, axis1=-2, axis2=-1)


def _traj(x) -> GridTrajectory:
    return x.trajectory if hasattr(x, "trajectory") else x


def size_primal(C, P) -> float:
    """Time average of ``trace(C P C')`` (periodic trapezoid rule on the nodes)."""
    P = _traj(P)
    c = C.sample(P.times)
    return float(np.mean(_tr(c @ P.values @ np.swapaxes(c, -1, -2))))


def size_dual(B, Q, alpha: AlphaProfile) -> float:
    """Time average of ``trace(B' Q B) / alpha``."""
    Q = _traj(Q)
    t = Q.times
    b = B.sample(t)
    return float(np.mean(_tr(np.swapaxes(b, -1, -2) @ Q.values @ b) / alpha.sample(t)[:, 0, 0]))


def _traces(P, Q, B):
    P, Q = _traj(P), _traj(Q)
    b = B.sample(P.times)
    num = _tr(np.swapaxes(b, -1, -2) @ Q.values @ b)
    den = _tr(Q.values @ P.values)
    return num, den


def alpha_update(P, Q, B, floor: float | None = None) -> AlphaProfile:
    """Pointwise ``sqrt(trace(B'QB) / trace(QP))`` on the grid of ``P``.

    Without ``floor`` a non-positive result is rejected as degenerate; with it,
    values are clamped from below.
    """
    num, den = _traces(P, Q, B)
    if np.any(den <= 0):
        i = int(np.argmin(den))
        raise AssumptionError(f"degenerate solution: trace(QP) = {den[i]:.3g} at node {i}")
    alpha = np.sqrt(np.maximum(num, 0.0) / den)
    if floor is not None:
        alpha = np.maximum(alpha, floor)
    elif np.any(alpha <= 0):
        i = int(np.argmin(alpha))
        raise AssumptionError(f"degenerate alpha update: alpha = 0 at node {i} (B'QB vanishes)")
    return AlphaProfile(alpha, _traj(P).period)


def stationarity_residual(alpha: AlphaProfile, P, Q, B) -> float:
    """``max |alpha^2 trace(QP) - trace(B'QB)| / (1 + trace(B'QB))`` over the nodes."""
    num, den = _traces(P, Q, B)
    a = alpha.sample(_traj(P).times)[:, 0, 0]
    return float(np.max(np.abs(a**2 * den - num) / (1.0 + num)))


@dataclass(frozen=True)
class EllipsoidFamily:
    P: PeriodicLyapunovSolution
    alpha: AlphaProfile
    size: float


def minimal_ellipsoid(A, B, C, alpha: AlphaProfile, settings: OdeSettings = OdeSettings()) -> EllipsoidFamily:
    P = solve_periodic_P(A, B, alpha, settings)
    return EllipsoidFamily(P, alpha, size_primal(C, P))


def admissible_alpha(A, settings: OdeSettings = OdeSettings()) -> float:
    """Half of the largest constant alpha keeping ``A + alpha/2 I`` stable.

    Equals the decay rate ``-log(rho) / T`` of the unshifted monodromy.
    """
    rho = float(np.max(np.abs(np.linalg.eigvals(state_transition(A, None, 0.0, A.period, settings)))))
    if not rho < 1.0:
        raise StabilityError(f"A(t) is not exponentially stable (monodromy spectral radius {rho:.6g}); no admissible alpha")
    return -math.log(rho) / A.period


class Evaluation(NamedTuple):
    size: float
    P: PeriodicLyapunovSolution
    Q: PeriodicLyapunovSolution
    B: object
    extra: object = None


@dataclass
class AlphaIterationHistory:
    iterates: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False
    final_step: float = math.inf
    stationarity: float = math.inf
    halvings: int = 0
    rejected: int = 0
    final: Evaluation | None = None

    @property
    def iterations(self) -> int:
        return len(self.sizes)


def _tag(exc: Exception, i: int) -> None:
    if exc.args:
        exc.args = (f"alpha iteration {i}: {exc.args[0]}",) + exc.args[1:]


def _mix(a: AlphaProfile, b: AlphaProfile, weight: float) -> AlphaProfile:
    return AlphaProfile((1.0 - weight) * a.nodal + weight * b.nodal, a.period)


def _anderson(xs, gs, memory):
    """Anderson mixing of the last iterates ``xs`` and their images ``gs`` (log-alpha space)."""
    x = np.array(xs[-memory - 1:])
    g = np.array(gs[-memory - 1:])
    f = g - x
    if len(f) < 2:
        return None
    df = np.diff(f, axis=0).T
    dg = np.diff(g, axis=0).T
    gamma, *_ = np.linalg.lstsq(df, f[-1], rcond=None)
    out = g[-1] - dg @ gamma
    if not np.all(np.isfinite(out)):
        return None
    return out


def alpha_iteration(
    evaluate: Callable[[AlphaProfile], Evaluation],
    alpha0: AlphaProfile,
    tol: float = 1e-7,
    max_iter: int = 200,
    accelerate: bool = True,
    memory: int = 5,
) -> tuple[AlphaProfile, AlphaIterationHistory]:
    """Fixed-point iteration ``alpha <- sqrt(trace(B'QB)/trace(QP))`` with descent guard.

    ``evaluate`` maps a profile to the (closed-loop) ellipsoid data.  The
    iteration stops once the update moves alpha by at most ``tol`` in the
    relative sup norm.  With ``accelerate`` an Anderson-mixed candidate (same
    fixed point) is tried first and kept only if it lowers the size.  A plain
    step that increases the size beyond slack, or leaves the admissible set, is
    halved up to five times; if that fails the iteration stops unconverged.
    """
    hist = AlphaIterationHistory()
    alpha = alpha0
    try:
        cur = evaluate(alpha)
    except Exception as exc:
        _tag(exc, 0)
        raise
    hist.iterates.append(alpha)
    hist.sizes.append(cur.size)
    log_x, log_g = [], []

    def admissible(cand_alpha, i):
        try:
            trial = evaluate(cand_alpha)
        except StabilityError:
            return None
        except Exception as exc:
            _tag(exc, i)
            raise
        if trial.size <= cur.size + DESCENT_SLACK * (1.0 + cur.size):
            return trial
        return None

    for i in range(1, max_iter + 1):
        proposal = alpha_update(cur.P, cur.Q, cur.B, floor=ALPHA_FLOOR).resampled(alpha.nodes)
        step = float(np.max(np.abs(proposal.nodal - alpha.nodal)) / (1.0 + np.max(proposal.nodal)))
        hist.steps.append(step)
        hist.final_step = step
        if step <= tol:
            hist.converged = True
            break
        log_x.append(np.log(alpha.nodal))
        log_g.append(np.log(proposal.nodal))
        cand = None
        if accelerate:
            mixed = _anderson(log_x, log_g, memory)
            if mixed is not None:
                cand_alpha = AlphaProfile(np.maximum(np.exp(mixed), ALPHA_FLOOR), alpha.period)
                cand = admissible(cand_alpha, i)
                if cand is None:
                    hist.rejected += 1
        if cand is None:
            cand_alpha, weight = proposal, 1.0
            for _ in range(MAX_HALVINGS + 1):
                cand = admissible(cand_alpha, i)
                if cand is not None:
                    break
                weight *= 0.5
                hist.halvings += 1
                cand_alpha = _mix(alpha, proposal, weight)
        if cand is None:
            warnings.warn(f"alpha iteration stalled at iteration {i}: no descent step found", RuntimeWarning, stacklevel=2)
            break
        alpha, cur = cand_alpha, cand
        hist.iterates.append(alpha)
        hist.sizes.append(cur.size)
    hist.final = cur
    hist.stationarity = stationarity_residual(alpha, cur.P, cur.Q, cur.B)
    if np.min(alpha.nodal) <= ALPHA_FLOOR * (1 + 1e-12):
        warnings.warn("converged alpha touches the positivity floor; result is suspect", RuntimeWarning, stacklevel=2)
    return alpha, hist


def optimize_alpha_analysis(
    A,
    B,
    C,
    alpha0: AlphaProfile | None = None,
    tol: float = 1e-7,
    max_iter: int = 200,
    settings: OdeSettings = OdeSettings(),
    accelerate: bool = True,
) -> tuple[AlphaProfile, AlphaIterationHistory]:
    """Globally optimal ``alpha`` for the analysis problem of ``(A, B, C)``.

    ``alpha0`` defaults to the constant decay rate of ``A``, which is always
    admissible.
    """
    if alpha0 is None:
        alpha0 = AlphaProfile.constant(admissible_alpha(A, settings), A.period, settings.nodes)

    def evaluate(alpha):
        P = solve_periodic_P(A, B, alpha, settings)
        Q = solve_periodic_Q(A, C, alpha, settings)
        return Evaluation(size_primal(C, P), P, Q, B)

    return alpha_iteration(evaluate, alpha0, tol, max_iter, accelerate)


def convexity_probe(
    A, B, C, alpha1: AlphaProfile, alpha2: AlphaProfile, settings: OdeSettings = OdeSettings()
) -> tuple[float, float, float]:
    """Sizes at ``alpha1``, ``alpha2`` and their pointwise midpoint."""
    nodes = max(alpha1.nodes, alpha2.nodes)
    a1, a2 = alpha1.resampled(nodes), alpha2.resampled(nodes)
    mid = _mix(a1, a2, 0.5)
    s1 = minimal_ellipsoid(A, B, C, a1, settings).size
    s2 = minimal_ellipsoid(A, B, C, a2, settings).size
    s_mid = minimal_ellipsoid(A, B, C, mid, settings).size
    return s1, s2, s_mid
