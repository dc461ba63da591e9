"""Random periodic test systems and alpha profiles."""

import math

import numpy as np

from inescapable.ellipsoid import admissible_alpha
from inescapable.errors import StabilityError
from inescapable.matrix_ode import OdeSettings
from inescapable.signals import AlphaProfile, CombinedSignal, FourierEntry, PeriodicMatrixSignal
from inescapable.synthesis import LtvPlant

TWO_PI = 2.0 * math.pi


def const(m, period=TWO_PI):
    return PeriodicMatrixSignal.constant(m, period)


def fourier_matrix(rng, base, amp=0.3, harmonics=2, period=TWO_PI):
    base = np.atleast_2d(np.asarray(base, dtype=float))
    rows = []
    for row in base:
        entries = []
        for v in row:
            cos = [(k, amp * rng.normal() / k) for k in range(1, harmonics + 1)]
            sin = [(k, amp * rng.normal() / k) for k in range(1, harmonics + 1)]
            entries.append(FourierEntry(v, cos=cos, sin=sin))
        rows.append(entries)
    return PeriodicMatrixSignal(rows, period)


def stable_base(rng, n, margin=0.5):
    a = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(a).real) + margin + rng.uniform(0.0, 1.0)
    return a - shift * np.eye(n)


def random_system(rng, n, m=None, p=None, amp=0.3, period=TWO_PI, settings=OdeSettings(256, 4)):
    """Smooth periodic ``(A, B, C)`` with exponentially stable ``A`` and its decay rate."""
    m = m or int(rng.integers(1, n + 1))
    p = p or int(rng.integers(1, n + 1))
    while True:
        A = fourier_matrix(rng, stable_base(rng, n), amp, period=period)
        try:
            decay = admissible_alpha(A, settings)
        except StabilityError:
            continue
        if decay > 0.05:
            break
    B = fourier_matrix(rng, rng.normal(size=(n, m)), amp, period=period)
    C = fourier_matrix(rng, rng.normal(size=(p, n)), amp, period=period)
    return A, B, C, decay


def random_lti(rng, n, m=None, p=None, margin=0.5):
    m = m or int(rng.integers(1, n + 1))
    p = p or int(rng.integers(1, n + 1))
    return stable_base(rng, n, margin), rng.normal(size=(n, m)), rng.normal(size=(p, n))


def random_alpha(rng, decay, period, nodes, low=0.15, high=1.5, ripple=0.4):
    """Positive smooth profile whose mean stays below ``2 decay`` (hence admissible)."""
    mean = rng.uniform(low, high) * decay
    phase = rng.uniform(0, TWO_PI, size=2)
    k = rng.integers(1, 4)
    def f(t):
        w = TWO_PI / period
        return mean * (1.0 + ripple * np.sin(w * t + phase[0]) * np.cos(k * w * t + phase[1]))
    return AlphaProfile.from_function(f, period, nodes)


def random_psd_signal(rng, n, period=TWO_PI, rank=None):
    M = fourier_matrix(rng, rng.normal(size=(n, rank or n)), 0.5, period=period)
    return CombinedSignal(lambda m: m @ np.swapaxes(m, -1, -2), M)


def normalized_plant(rng, n, mu=1, py=1, amp=0.2, period=TWO_PI):
    """Random plant satisfying the normalizations ``D1 [B1' D1'] = [0 I]`` and ``D2' [C2 D2] = [0 I]``."""
    A, Bw, Cz, decay = random_system(rng, n, amp=amp, period=period)
    mw = Bw.shape[1]
    pz = Cz.shape[0]
    B2 = fourier_matrix(rng, rng.normal(size=(n, mu)), amp, period=period)
    C1 = fourier_matrix(rng, rng.normal(size=(py, n)), amp, period=period)
    B1 = CombinedSignal(lambda b: np.concatenate([b, np.zeros(b.shape[:-1] + (py,))], axis=-1), Bw)
    D1 = const(np.hstack([np.zeros((py, mw)), np.eye(py)]), period)
    C2 = CombinedSignal(lambda c: np.concatenate([c, np.zeros((c.shape[0], mu, n))], axis=-2), Cz)
    D2 = const(np.vstack([np.zeros((pz, mu)), np.eye(mu)]), period)
    return LtvPlant(A=A, B1=B1, B2=B2, C1=C1, C2=C2, D1=D1, D2=D2), decay
