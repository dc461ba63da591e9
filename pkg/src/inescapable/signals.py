"""T-periodic matrix-valued functions of time.

Two concrete carriers are provided.  :class:`PeriodicMatrixSignal` holds a
truncated Fourier series per entry and is periodic by construction;
:class:`GridTrajectory` stores samples on a uniform grid over one period and
interpolates piecewise-linearly, wrapping across the period seam.  Both expose
``sample(times)`` returning a stacked ``(len(times), rows, cols)`` array, which
is the only thing the solvers rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AssumptionError

__all__ = [
    "FourierEntry",
    "PeriodicMatrixSignal",
    "GridTrajectory",
    "AlphaProfile",
    "CombinedSignal",
    "as_signal",
    "node_times",
    "eval_signal",
    "eval_grid",
    "rescale_input",
]


def node_times(period: float, nodes: int) -> np.ndarray:
    return np.arange(nodes) * (period / nodes)


def _check_harmonics(pairs, label):
    out = []
    seen = set()
    for k, amp in pairs:
        if int(k) != k or k < 1:
            raise ValueError(f"{label} harmonic index must be a positive integer, got {k!r}")
        k = int(k)
        if k in seen:
            raise ValueError(f"duplicate {label} harmonic index {k}")
        seen.add(k)
        out.append((k, float(amp)))
    return tuple(out)


@dataclass(frozen=True)
class FourierEntry:
    """``constant + sum a_k cos(k w t) + sum b_k sin(k w t)`` for one matrix entry."""

    constant: float = 0.0
    cos: tuple = ()
    sin: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "cos", _check_harmonics(self.cos, "cosine"))
        object.__setattr__(self, "sin", _check_harmonics(self.sin, "sine"))

    @property
    def max_harmonic(self) -> int:
        return max([k for k, _ in self.cos + self.sin], default=0)


class PeriodicMatrixSignal:
    """Matrix signal whose entries are truncated Fourier series.

    Parameters
    ----------
    entries : nested sequence of FourierEntry or float
        ``rows x cols`` table; plain numbers are constant entries.
    period : float
        The period ``T``; the base frequency is ``2*pi/T``.
    """

    def __init__(self, entries: Sequence[Sequence[FourierEntry | float]], period: float):
        if not period > 0:
            raise ValueError("period must be positive")
        table = [[e if isinstance(e, FourierEntry) else FourierEntry(e) for e in row] for row in entries]
        rows = len(table)
        cols = len(table[0]) if rows else 0
        if rows == 0 or cols == 0 or any(len(r) != cols for r in table):
            raise ValueError("entries must form a non-empty rectangular table")
        self.period = float(period)
        self.shape = (rows, cols)
        self.entries = tuple(tuple(r) for r in table)
        kmax = max(e.max_harmonic for r in table for e in r)
        self._const = np.array([[e.constant for e in r] for r in table])
        self._cos = np.zeros((rows, cols, kmax))
        self._sin = np.zeros((rows, cols, kmax))
        for i, r in enumerate(table):
            for j, e in enumerate(r):
                for k, a in e.cos:
                    self._cos[i, j, k - 1] = a
                for k, b in e.sin:
                    self._sin[i, j, k - 1] = b
        self._k = np.arange(1, kmax + 1)

    @classmethod
    def constant(cls, matrix, period: float) -> "PeriodicMatrixSignal":
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(m.tolist(), period)

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.period

    def sample(self, times) -> np.ndarray:
        t = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.broadcast_to(self._const, (t.size,) + self.shape).copy()
        if self._k.size:
            ang = np.outer(np.mod(t, self.period) * self.omega, self._k)
            out += np.einsum("lk,rck->lrc", np.cos(ang), self._cos)
            out += np.einsum("lk,rck->lrc", np.sin(ang), self._sin)
        return out

    def __call__(self, t: float) -> np.ndarray:
        return self.sample([t])[0]

    def __repr__(self):
        return f"PeriodicMatrixSignal(shape={self.shape}, period={self.period:g})"


class GridTrajectory:
    """Samples ``values[i] = X(i T / N)`` with periodic piecewise-linear interpolation."""

    def __init__(self, values, period: float):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        elif v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[0] < 2:
            raise ValueError("GridTrajectory needs at least two stacked matrices")
        if not period > 0:
            raise ValueError("period must be positive")
        self.values = v
        self.values.setflags(write=False)
        self.period = float(period)

    @property
    def nodes(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def times(self) -> np.ndarray:
        return node_times(self.period, self.nodes)

    def sample(self, times) -> np.ndarray:
        t = np.atleast_1d(np.asarray(times, dtype=float))
        n = self.nodes
        u = np.mod(t, self.period) * (n / self.period)
        base = np.floor(u)
        frac = (u - base)[:, None, None]
        i = base.astype(np.int64) % n
        return (1.0 - frac) * self.values[i] + frac * self.values[(i + 1) % n]

    def __call__(self, t: float) -> np.ndarray:
        return self.sample([t])[0]

    def __repr__(self):
        return f"{type(self).__name__}(nodes={self.nodes}, shape={self.shape}, period={self.period:g})"


class AlphaProfile(GridTrajectory):
    """Strictly positive scalar periodic profile stored on the grid.

    Between nodes the profile is a periodic cubic spline, so integrands such as
    ``trace(B'QB) / alpha`` stay smooth and the nodal trapezoid rule keeps its
    high accuracy.  The spline is linear in the nodal values.  If it would dip
    to non-positive values between nodes (sharp steps on a coarse grid), linear
    interpolation is used instead.
    """

    def __init__(self, values, period: float):
        super().__init__(values, period)
        if self.shape != (1, 1):
            raise ValueError("AlphaProfile values must be scalar")
        if not np.all(np.isfinite(self.values)) or np.min(self.values) <= 0:
            bad = int(np.argmin(self.values[:, 0, 0]))
            raise AssumptionError(
                f"alpha must be strictly positive; node {bad} (t={self.times[bad]:.6g}) "
                f"has {self.values[bad, 0, 0]:.3g}"
            )
        self._spline = self._build_spline()

    def _build_spline(self):
        y = self.values[:, 0, 0]
        if self.nodes < 4 or np.ptp(y) == 0.0:
            return None
        t = np.append(self.times, self.period)
        spline = CubicSpline(t, np.append(y, y[0]), bc_type="periodic")
        probe = np.linspace(0.0, self.period, 8 * self.nodes, endpoint=False)
        if np.min(spline(probe)) <= 0.5 * np.min(y):
            return None
        return spline

    @property
    def smooth(self) -> bool:
        """Whether the spline interpolant is in use (``False``: piecewise-linear)."""
        return self._spline is not None

    def sample(self, times) -> np.ndarray:
        if self._spline is None:
            return super().sample(times)
        t = np.mod(np.atleast_1d(np.asarray(times, dtype=float)), self.period)
        return self._spline(t)[:, None, None]

    @classmethod
    def constant(cls, value: float, period: float, nodes: int) -> "AlphaProfile":
        return cls(np.full(nodes, float(value)), period)

    @classmethod
    def from_function(cls, func: Callable, period: float, nodes: int) -> "AlphaProfile":
        t = node_times(period, nodes)
        return cls(np.asarray(func(t), dtype=float) * np.ones_like(t), period)

    @property
    def nodal(self) -> np.ndarray:
        return self.values[:, 0, 0]

    def resampled(self, nodes: int) -> "AlphaProfile":
        if nodes == self.nodes:
            return self
        return AlphaProfile(self.sample(node_times(self.period, nodes))[:, 0, 0], self.period)


class CombinedSignal:
    """Pointwise combination ``func(*parts)`` of other signals.

    ``func`` receives stacked arrays and must broadcast over the leading axis,
    e.g. ``CombinedSignal(lambda a, b, k: a + b @ k, A, B2, K)``.
    """

    def __init__(self, func: Callable[..., np.ndarray], *parts):
        if not parts:
            raise ValueError("CombinedSignal needs at least one part")
        self.func = func
        self.parts = parts
        self.period = parts[0].period
        self.shape = self.sample([0.0]).shape[1:]

    def sample(self, times) -> np.ndarray:
        t = np.atleast_1d(np.asarray(times, dtype=float))
        return np.asarray(self.func(*[p.sample(t) for p in self.parts]), dtype=float)

    def __call__(self, t: float) -> np.ndarray:
        return self.sample([t])[0]


def as_signal(x, period: float):
    """Pass signals through; wrap arrays and scalars as constant signals."""
    if hasattr(x, "sample"):
        return x
    return PeriodicMatrixSignal.constant(x, period)


def eval_signal(sig, t: float) -> np.ndarray:
    return sig(t)


def eval_grid(traj: GridTrajectory, t: float) -> np.ndarray:
    return traj(t)


def rescale_input(B, W, nodes: int) -> GridTrajectory:
    """Absorb an ellipsoidal disturbance weight into the input matrix.

    Returns ``B(t) W(t)^{-1/2}`` on the grid so that ``w' W w <= 1`` becomes the
    unit-norm bound.
    """
    t = node_times(B.period, nodes)
    bs = B.sample(t)
    ws = W.sample(t)
    out = np.empty_like(bs)
    for i, (b, w) in enumerate(zip(bs, ws)):
        w = 0.5 * (w + w.T)
        lam, vec = np.linalg.eigh(w)
        if lam[0] <= 0:
            raise AssumptionError(
                f"disturbance weight W is not positive definite at node {i} (t={t[i]:.6g}); "
                f"smallest eigenvalue {lam[0]:.3g}"
            )
        out[i] = b @ (vec * lam ** -0.5) @ vec.T
    return GridTrajectory(out, B.period)
