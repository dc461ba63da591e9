"""Fixed-step RK4 for matrix ODEs, state transitions and one-period maps.

The periodic solvers never call a Python-level right-hand side per stage.
Coefficients are sampled once on the half-step lattice ``t_j = j h / 2`` and
the classical RK4 stage algebra is evaluated for all steps at once, producing
one step matrix per RK4 step.  For the linear flow ``X' = F X`` that step
matrix is exactly the RK4 propagator; for the Lyapunov flow
``P' = F P + P F' + R`` the step is split into the RK4 propagator of ``F``
(applied congruently) plus the RK4 image of the forcing started from zero,
which keeps every iterate symmetric and is fourth-order accurate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError

__all__ = [
    "OdeSettings",
    "OdeSolution",
    "MonodromyData",
    "integrate_matrix_ode",
    "rk4_propagators",
    "rk4_forcing",
    "compose_affine",
    "state_transition",
    "monodromy_affine",
    "spectral_radius",
    "shifted_samples",
]


@dataclass(frozen=True)
class OdeSettings:
    """Grid resolution: ``nodes`` stored samples per period, RK4 ``substeps`` between nodes."""

    nodes: int = 2048
    substeps: int = 4

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("nodes must be >= 2")
        if self.substeps < 1:
            raise ValueError("substeps_per_node must be >= 1")

    @property
    def steps(self) -> int:
        return self.nodes * self.substeps

    def step(self, period: float) -> float:
        return period / self.steps

    def fine_times(self, period: float) -> np.ndarray:
        """Half-step lattice ``j h / 2`` for ``j = 0 .. 2 * steps`` (both ends included)."""
        return np.arange(2 * self.steps + 1) * (period / (2 * self.steps))

    def refined(self, factor: int = 2) -> "OdeSettings":
        return OdeSettings(self.nodes * factor, self.substeps)


@dataclass(frozen=True)
class OdeSolution:
    times: np.ndarray
    values: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def spectral_radius(m) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def integrate_matrix_ode(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    X0,
    t0: float,
    t1: float,
    steps: int | None = None,
    step: float | None = None,
) -> OdeSolution:
    """Classical RK4 with a uniform step from ``t0`` to ``t1`` (``t1 < t0`` allowed).

    Give either the number of ``steps`` or a target ``step`` length; the step is
    adjusted so that an integer number of steps lands exactly on ``t1``.
    """
    if t1 == t0:
        raise ValueError("t1 must differ from t0")
    span = t1 - t0
    if steps is None:
        steps = 1000 if step is None else max(1, int(round(abs(span) / step)))
    h = span / steps
    x = np.array(X0, dtype=float)
    times = t0 + h * np.arange(steps + 1)
    times[-1] = t1
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for k in range(steps):
        t = times[k]
        k1 = rhs(t, x)
        k2 = rhs(t + h / 2, x + (h / 2) * k1)
        k3 = rhs(t + h / 2, x + (h / 2) * k2)
        k4 = rhs(t + h, x + h * k3)
        x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at t={times[k + 1]:.6g}", time=times[k + 1])
        out[k + 1] = x
    return OdeSolution(times, out)


def rk4_propagators(F: np.ndarray, h: float) -> np.ndarray:
    """RK4 step matrices of ``X' = F(t) X`` from half-step samples ``F`` (shape ``(2m+1, n, n)``)."""
    f0, fh, f1 = F[0:-1:2], F[1::2], F[2::2]
    k1 = f0
    k2 = fh + (h / 2) * (fh @ k1)
    k3 = fh + (h / 2) * (fh @ k2)
    k4 = f1 + h * (f1 @ k3)
    eye = np.eye(F.shape[-1])
    return eye + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _lyap_rhs(f, z, r):
    fz = f @ z
    return fz + np.swapaxes(fz, -1, -2) + r


def rk4_forcing(F: np.ndarray, R: np.ndarray, h: float) -> np.ndarray:
    """RK4 image of ``P' = F P + P F' + R`` over each step, started from ``P = 0``."""
    # P starts at 0, so the first stage is just the forcing
    fh, f1 = F[1::2], F[2::2]
    r0, rh, r1 = R[0:-1:2], R[1::2], R[2::2]
    k1 = r0
    k2 = _lyap_rhs(fh, (h / 2) * k1, rh)
    k3 = _lyap_rhs(fh, (h / 2) * k2, rh)
    k4 = _lyap_rhs(f1, h * k3, r1)
    g = (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def _group(S, G, substeps):
    """Fold consecutive substeps into node-to-node affine maps."""
    m, n, _ = S.shape
    S = S.reshape(m // substeps, substeps, n, n)
    G = G.reshape(m // substeps, substeps, n, n)
    s_acc, g_acc = S[:, 0], G[:, 0]
    for j in range(1, substeps):
        sj = S[:, j]
        g_acc = sj @ g_acc @ np.swapaxes(sj, -1, -2) + G[:, j]
        s_acc = sj @ s_acc
    return s_acc, g_acc


def compose_affine(S: np.ndarray, G: np.ndarray, substeps: int = 1, times=None):
    """Accumulate ``X -> S X S' + G`` maps sequentially from ``X = 0``.

    Returns the prefix transitions and accumulated forcings at every node
    (``phi[i]``, ``gram[i]`` map time 0 to node ``i``) together with the full
    composition over all steps.
    """
    s_node, g_node = _group(S, G, substeps)
    nodes, n, _ = s_node.shape
    phis = np.empty((nodes + 1, n, n))
    grams = np.empty((nodes + 1, n, n))
    phi = np.eye(n)
    gram = np.zeros((n, n))
    phis[0], grams[0] = phi, gram
    for i in range(nodes):
        s = s_node[i]
        phi = s @ phi
        gram = s @ gram @ s.T + g_node[i]
        phis[i + 1], grams[i + 1] = phi, gram
    if not (np.all(np.isfinite(phis)) and np.all(np.isfinite(grams))):
        bad = int(np.argmax(~np.isfinite(phis).all(axis=(1, 2)) | ~np.isfinite(grams).all(axis=(1, 2))))
        t_bad = None if times is None else float(times[bad])
        raise DivergenceError(f"non-finite transition at node {bad}", time=t_bad)
    grams = 0.5 * (grams + np.swapaxes(grams, -1, -2))
    return phis, grams


def shifted_samples(A, alpha, times) -> np.ndarray:
    """Samples of ``A(t) + alpha(t)/2 I`` (``alpha`` may be ``None`` for no shift)."""
    a = A.sample(times)
    if alpha is not None:
        a = a + 0.5 * alpha.sample(times) * np.eye(a.shape[-1])
    return a


def state_transition(A, alpha, t0: float, t1: float, settings: OdeSettings = OdeSettings()) -> np.ndarray:
    """``Phi(t1, t0)`` of ``x' = (A(t) + alpha(t)/2 I) x`` by RK4 near the grid step."""
    if t1 == t0:
        return np.eye(A.shape[0])
    h_target = settings.step(A.period)
    m = max(1, int(np.ceil(abs(t1 - t0) / h_target - 1e-9)))
    times = np.linspace(t0, t1, 2 * m + 1)
    steps = rk4_propagators(shifted_samples(A, alpha, times), (t1 - t0) / m)
    phi = np.eye(A.shape[0])
    for s in steps:
        phi = s @ phi
    if not np.all(np.isfinite(phi)):
        raise DivergenceError("non-finite state transition", time=t1)
    return phi


@dataclass(frozen=True)
class MonodromyData:
    """One-period map ``P(T) = phi P(0) phi' + gram`` of an affine Lyapunov flow."""

    phi: np.ndarray
    gram: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gram", 0.5 * (self.gram + self.gram.T))

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.phi)

    @property
    def stable(self) -> bool:
        return self.spectral_radius < 1.0


def monodromy_affine(A, alpha, R, settings: OdeSettings = OdeSettings()) -> MonodromyData:
    """Monodromy ``phi`` and accumulated forcing ``gram`` over ``[0, T]``.

    Integrates ``phi' = A_a phi`` and ``G' = A_a G + G A_a' + R`` with
    ``A_a = A + (alpha/2) I`` and ``G(0) = 0``.  ``R`` must be a signal with PSD
    values.  Stability is reported through :attr:`MonodromyData.stable`, not
    raised.
    """
    period = A.period
    times = settings.fine_times(period)
    F = shifted_samples(A, alpha, times)
    h = settings.step(period)
    S = rk4_propagators(F, h)
    G = rk4_forcing(F, R.sample(times), h)
    phis, grams = compose_affine(S, G, settings.substeps, times[:: 2 * settings.substeps])
    return MonodromyData(phis[-1], grams[-1])
