"""Periodic stabilizing solutions of differential Riccati equations.

Forward form (filter):   P' = F P + P F' + R - P S P
Adjoint form (control): -Q' = Q F + F' Q + R - Q S Q

with ``F = A + (alpha/2) I`` (or plain ``A`` when ``alpha`` is ``None``).  The
adjoint form is integrated in reversed time, where it becomes a forward form.

The flow is propagated through its linear Hamiltonian representation: with
``[X; Y]' = [[-F', S], [R, F]] [X; Y]`` one has ``P = Y X^{-1}``.  RK4 step
matrices of the Hamiltonian system are built in bulk and applied as
linear-fractional maps, grouped into blocks whose norm stays moderate.  The
periodic solution is found by successive-period integration from a seed
(the time-averaged algebraic Riccati solution by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AssumptionError, ConvergenceError
from .lyapunov import central_difference, sym
from .matrix_ode import OdeSettings, rk4_propagators, shifted_samples, spectral_radius
from .signals import AlphaProfile, CombinedSignal, GridTrajectory

__all__ = [
    "PeriodicRiccatiSolution",
    "periodic_riccati",
    "solve_control_riccati",
    "solve_filter_riccati",
    "riccati_residual",
]

_BLOCK_NORM = 1e3


@dataclass(frozen=True)
class PeriodicRiccatiSolution:
    trajectory: GridTrajectory
    seam_residual: float
    iterations: int
    max_residual: float
    closed_loop_radius: float
    history: list = field(default_factory=list)
    iterates: list | None = None

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.values


def _hamiltonian(F, R, S):
    top = np.concatenate([-np.swapaxes(F, -1, -2), S], axis=-1)
    bottom = np.concatenate([R, F], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def _node_maps(H, h, substeps):
    steps = rk4_propagators(H, h)
    m, k, _ = steps.shape
    steps = steps.reshape(m // substeps, substeps, k, k)
    acc = steps[:, 0]
    for j in range(1, substeps):
        acc = steps[:, j] @ acc
    return acc


def _blocks(node_maps):
    eye = np.eye(node_maps.shape[-1])
    blocks = []
    acc = eye
    fresh = True
    for m in node_maps:
        cand = m @ acc
        if not fresh and np.linalg.norm(cand, 2) > _BLOCK_NORM:
            blocks.append(acc)
            acc = m
        else:
            acc = cand
        fresh = False
    blocks.append(acc)
    return np.array(blocks)


def _mobius(psi, p, n):
    x = psi[:n, :n] + psi[:n, n:] @ p
    y = psi[n:, :n] + psi[n:, n:] @ p
    return sym(np.linalg.solve(x.T, y.T).T)


def _are_seed(F, R, S):
    n = F.shape[-1]
    fbar, rbar, sbar = F.mean(axis=0), sym(R.mean(axis=0)), sym(S.mean(axis=0))
    try:
        lam, vec = np.linalg.eigh(sbar)
        keep = lam > 1e-12 * max(1.0, lam[-1])
        if keep.any():
            b = vec[:, keep] * np.sqrt(lam[keep])
            x = scipy.linalg.solve_continuous_are(fbar.T, b, rbar, np.eye(b.shape[1]))
        else:
            if np.max(np.linalg.eigvals(fbar).real) >= 0:
                return np.zeros((n, n))
            x = scipy.linalg.solve_continuous_lyapunov(fbar, -rbar)
    except (np.linalg.LinAlgError, ValueError):
        return np.zeros((n, n))
    x = sym(x)
    if not np.all(np.isfinite(x)) or np.linalg.eigvalsh(x)[0] < -1e-9 * (1 + np.linalg.norm(x)):
        return np.zeros((n, n))
    return x


def _rhs_at(values, F, R, S, adjoint):
    # adjoint: -X' = X F + F'X + R - X S X
    fx = (np.swapaxes(F, -1, -2) if adjoint else F) @ values
    xsx = values @ S @ values
    if adjoint:
        return -(fx + np.swapaxes(fx, -1, -2) + R - xsx)
    return fx + np.swapaxes(fx, -1, -2) + R - xsx


def _residual(values, period, F, R, S, adjoint):
    rhs = _rhs_at(values, F, R, S, adjoint)
    res = central_difference(values, period) - rhs
    return float(np.max(np.linalg.norm(res, axis=(1, 2)) / (1.0 + np.linalg.norm(rhs, axis=(1, 2)))))


def periodic_riccati(
    A,
    R,
    S,
    settings: OdeSettings = OdeSettings(),
    alpha: AlphaProfile | None = None,
    adjoint: bool = False,
    tol: float = 1e-9,
    max_periods: int = 500,
    initial="are",
    record_iterates: bool = False,
) -> PeriodicRiccatiSolution:
    """Periodic PSD solution of a Riccati flow with signals ``R`` and ``S`` (both PSD).

    ``initial`` is ``"are"`` (time-averaged algebraic seed), ``"zero"`` or an
    explicit matrix (interpreted at the start of the integration direction, i.e.
    at ``t = T`` for the adjoint form).
    """
    period = A.period
    nodes = settings.nodes
    n = A.shape[0]
    times = settings.fine_times(period)
    F = shifted_samples(A, alpha, times)
    Rs = sym(R.sample(times))
    Ss = sym(S.sample(times))
    if adjoint:
        F = np.swapaxes(F[::-1], -1, -2)
        Rs, Ss = Rs[::-1], Ss[::-1]
    node_maps = _node_maps(_hamiltonian(F, Rs, Ss), settings.step(period), settings.substeps)
    blocks = _blocks(node_maps)

    if isinstance(initial, str):
        if initial == "are":
            p = _are_seed(F, Rs, Ss)
        elif initial == "zero":
            p = np.zeros((n, n))
        else:
            raise ValueError(f"unknown initial guess {initial!r}")
    else:
        p = sym(np.array(initial, dtype=float).reshape(n, n))

    history = []
    iterates = [p.copy()] if record_iterates else None
    converged = False
    for k in range(1, max_periods + 1):
        q = p
        for psi in blocks:
            q = _mobius(psi, q, n)
        if not np.all(np.isfinite(q)):
            raise ConvergenceError(f"Riccati iterate became non-finite in period {k}", history)
        change = float(np.linalg.norm(q - p) / (1.0 + np.linalg.norm(q)))
        history.append(change)
        lam_min = np.linalg.eigvalsh(q)[0]
        if lam_min < -1e-8 * (1.0 + np.linalg.norm(q)):
            raise AssumptionError(
                f"Riccati iterate became indefinite (eigenvalue {lam_min:.3g}) in period {k}; "
                "check stabilizability/detectability"
            )
        p = q
        if record_iterates:
            iterates.append(p.copy())
        if change <= tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"periodic Riccati iteration did not converge in {max_periods} periods "
            f"(last relative seam change {history[-1]:.3g})",
            history,
        )

    xs = np.empty((nodes + 1, n, n))
    xs[0] = p
    for i, psi in enumerate(node_maps):
        xs[i + 1] = _mobius(psi, xs[i], n)
    seam = float(np.linalg.norm(xs[-1] - xs[0]))
    fwd = GridTrajectory(xs[:nodes], period)
    closed = F - fwd.sample(times) @ Ss
    phi = np.eye(n)
    for s in rk4_propagators(closed, settings.step(period)):
        phi = s @ phi
    radius = spectral_radius(phi)

    xs = xs[:nodes]
    if adjoint:
        xs = xs[(-np.arange(nodes)) % nodes]
    traj = GridTrajectory(xs, period)
    t_nodes = traj.times
    max_res = _residual(
        xs, period, shifted_samples(A, alpha, t_nodes), R.sample(t_nodes), S.sample(t_nodes), adjoint
    )
    return PeriodicRiccatiSolution(traj, seam, k, max_res, radius, history, iterates)


def _control_terms(B, C):
    R = CombinedSignal(lambda c: np.swapaxes(c, -1, -2) @ c, C)
    S = CombinedSignal(lambda b: b @ np.swapaxes(b, -1, -2), B)
    return R, S


def _filter_terms(B, C, alpha):
    R = CombinedSignal(lambda b, a: b @ np.swapaxes(b, -1, -2) / a, B, alpha)
    S = CombinedSignal(lambda c, a: a * (np.swapaxes(c, -1, -2) @ c), C, alpha)
    return R, S


def solve_control_riccati(
    A, B, C, alpha: AlphaProfile, settings: OdeSettings = OdeSettings(), **kwargs
) -> PeriodicRiccatiSolution:
    """``-Q' = Q A + A'Q + alpha Q + C'C - Q B B' Q``, periodic and stabilizing."""
    R, S = _control_terms(B, C)
    return periodic_riccati(A, R, S, settings, alpha=alpha, adjoint=True, **kwargs)


def solve_filter_riccati(
    A, B, C, alpha: AlphaProfile, settings: OdeSettings = OdeSettings(), **kwargs
) -> PeriodicRiccatiSolution:
    """``P' = A P + P A' + alpha P + B B'/alpha - alpha P C'C P``, periodic and stabilizing."""
    R, S = _filter_terms(B, C, alpha)
    return periodic_riccati(A, R, S, settings, alpha=alpha, adjoint=False, **kwargs)


def riccati_residual(sol, A, B, C, alpha: AlphaProfile, kind: str = "control") -> float:
    """Max relative finite-difference residual of a stored solution at the nodes."""
    traj = sol.trajectory if hasattr(sol, "trajectory") else sol
    if kind == "control":
        R, S = _control_terms(B, C)
    elif kind == "filter":
        R, S = _filter_terms(B, C, alpha)
    else:
        raise ValueError("kind must be 'control' or 'filter'")
    t = traj.times
    return _residual(
        traj.values, traj.period, shifted_samples(A, alpha, t), R.sample(t), S.sample(t), kind == "control"
    )
