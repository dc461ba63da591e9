"""Periodic solutions of the forward and adjoint differential Lyapunov equations.

Forward:  P' = A_a P + P A_a' + R          (minimal ellipsoid when R = B B'/alpha)
Adjoint: -Q' = Q A_a + A_a' Q + R          (dual matrix when R = C'C)

with ``A_a = A + (alpha/2) I``.  The periodic boundary condition is imposed
exactly: one pass over the period yields the affine monodromy map, whose
fixed point is the periodic initial value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import StabilityError
from .matrix_ode import (
    MonodromyData,
    OdeSettings,
    compose_affine,
    rk4_forcing,
    rk4_propagators,
    shifted_samples,
    spectral_radius,
)
from .signals import AlphaProfile, CombinedSignal, GridTrajectory

__all__ = [
    "PeriodicLyapunovSolution",
    "discrete_lyapunov_fixed_point",
    "periodic_lyapunov",
    "solve_periodic_P",
    "solve_periodic_Q",
    "lyapunov_residual",
]

PSD_TOL = 1e-9
STABILITY_MARGIN = 1e-9
_KRONECKER_MAX_N = 30


def sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


@dataclass(frozen=True)
class PeriodicLyapunovSolution:
    trajectory: GridTrajectory
    seam_residual: float
    alpha: AlphaProfile | None
    monodromy: MonodromyData

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.values


def discrete_lyapunov_fixed_point(phi, G) -> np.ndarray:
    """Unique ``X = phi X phi' + G`` for a Schur-stable ``phi``.

    Solved through the Kronecker form for ``n <= 30`` and by Smith squaring
    otherwise.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    G = sym(np.atleast_2d(np.asarray(G, dtype=float)))
    n = phi.shape[0]
    rho = spectral_radius(phi)
    if rho > 1.0 - STABILITY_MARGIN:
        raise StabilityError(f"no periodic solution: monodromy spectral radius {rho:.12g} >= 1")
    if n <= _KRONECKER_MAX_N:
        lhs = np.eye(n * n) - np.kron(phi, phi)
        x = np.linalg.solve(lhs, G.reshape(-1)).reshape(n, n)
        return sym(x)
    x, a = G.copy(), phi.copy()
    for _ in range(200):
        x = x + a @ x @ a.T
        a = a @ a
        if np.linalg.norm(a) < 1e-17:
            break
    return sym(x)


def periodic_lyapunov(
    A,
    alpha: AlphaProfile | None,
    R,
    settings: OdeSettings = OdeSettings(),
    adjoint: bool = False,
) -> PeriodicLyapunovSolution:
    """Periodic solution of the forward (``adjoint=False``) or adjoint Lyapunov flow.

    The adjoint equation is integrated in reversed time ``s = T - t``, where it
    takes the forward form with ``A_a(T - s)'`` in place of ``A_a``.
    """
    period = A.period
    nodes = settings.nodes
    times = settings.fine_times(period)
    F = shifted_samples(A, alpha, times)
    Rs = R.sample(times)
    if adjoint:
        F = np.swapaxes(F[::-1], -1, -2)
        Rs = Rs[::-1]
    h = settings.step(period)
    phis, grams = compose_affine(
        rk4_propagators(F, h), rk4_forcing(F, Rs, h), settings.substeps, times[:: 2 * settings.substeps]
    )
    mono = MonodromyData(phis[-1], grams[-1])
    rho = mono.spectral_radius
    if rho > 1.0 - STABILITY_MARGIN:
        raise StabilityError(
            f"no periodic solution for this alpha: shifted dynamics A + alpha/2 I are not "
            f"exponentially stable (monodromy spectral radius {rho:.6g})"
        )
    x0 = discrete_lyapunov_fixed_point(mono.phi, mono.gram)
    xs = sym(phis @ x0 @ np.swapaxes(phis, -1, -2) + grams)
    seam = float(np.linalg.norm(xs[-1] - xs[0]))
    xs = xs[:nodes]
    # A coarse step relative to the fastest rate can make the discrete flow lose positivity.
    low = float(np.min(np.linalg.eigvalsh(xs)))
    if low < -PSD_TOL * (1.0 + float(np.max(np.abs(xs)))):
        raise StabilityError(
            f"periodic Lyapunov solution is indefinite (eigenvalue {low:.3g}); "
            "the grid is too coarse for this alpha"
        )
    if adjoint:
        xs = xs[(-np.arange(nodes)) % nodes]
    lam = np.linalg.eigvalsh(x0)
    if lam[-1] > 0 and lam[0] <= 1e-12 * lam[-1]:
        which = "observability" if adjoint else "controllability"
        warnings.warn(f"periodic Lyapunov solution is singular; check {which}", RuntimeWarning, stacklevel=2)
    return PeriodicLyapunovSolution(GridTrajectory(xs, period), seam, alpha, mono)


def _outer_over_alpha(b, a):
    return b @ np.swapaxes(b, -1, -2) / a


def _gram_of_rows(c):
    return np.swapaxes(c, -1, -2) @ c


def solve_periodic_P(A, B, alpha: AlphaProfile, settings: OdeSettings = OdeSettings()) -> PeriodicLyapunovSolution:
    """Minimal inescapable ellipsoid ``P(t)`` for a fixed ``alpha``."""
    R = CombinedSignal(_outer_over_alpha, B, alpha)
    return periodic_lyapunov(A, alpha, R, settings)


def solve_periodic_Q(A, C, alpha: AlphaProfile, settings: OdeSettings = OdeSettings()) -> PeriodicLyapunovSolution:
    """Dual matrix ``Q(t)`` for a fixed ``alpha``."""
    R = CombinedSignal(_gram_of_rows, C)
    return periodic_lyapunov(A, alpha, R, settings, adjoint=True)


def central_difference(values: np.ndarray, period: float) -> np.ndarray:
    n = values.shape[0]
    return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) * (n / (2.0 * period))


def lyapunov_residual(sol: PeriodicLyapunovSolution, A, R, adjoint: bool = False) -> float:
    """Max over nodes of ``|X' - rhs| / (1 + |rhs|)`` with a central-difference ``X'``."""
    traj = sol.trajectory
    t = traj.times
    x = traj.values
    F = shifted_samples(A, sol.alpha, t)
    fx = (np.swapaxes(F, -1, -2) if adjoint else F) @ x
    if adjoint:
        rhs = -(np.swapaxes(fx, -1, -2) + fx + R.sample(t))
    else:
        rhs = fx + np.swapaxes(fx, -1, -2) + R.sample(t)
    res = central_difference(x, traj.period) - rhs
    return float(np.max(np.linalg.norm(res, axis=(1, 2)) / (1.0 + np.linalg.norm(rhs, axis=(1, 2)))))
