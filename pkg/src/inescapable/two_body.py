"""Coupled two-body plant with periodic mesh stiffness and damping.

A gear-pair style benchmark: two inertias joined by a spring/damper whose
coefficients vary with period ``2 pi``.  ``sin^2`` and ``cos^2`` profiles are
written as their exact second-harmonic expansions.
"""

from __future__ import annotations

import math

import numpy as np

from .signals import AlphaProfile, FourierEntry, PeriodicMatrixSignal
from .synthesis import LtvPlant

J1 = 0.5
J2 = 0.8 * J1
K0 = 10.0
MU0 = 1.0 / 300.0
PERIOD = 2.0 * math.pi


def _stiffness(scale):
    # k(t) = k0 (1 + 0.2 sin t + 0.3 cos 2t)
    return FourierEntry(scale * K0, cos=[(2, scale * 0.3 * K0)], sin=[(1, scale * 0.2 * K0)])


def _damping(scale):
    # mu(t) = mu0 (1 + 0.2 sin t - 0.3 cos 2t)
    return FourierEntry(scale * MU0, cos=[(2, -scale * 0.3 * MU0)], sin=[(1, scale * 0.2 * MU0)])


def _sin2(amp):
    return FourierEntry(amp / 2, cos=[(2, -amp / 2)])


def _cos2(amp):
    return FourierEntry(amp / 2, cos=[(2, amp / 2)])


def two_body_plant() -> LtvPlant:
    T = PERIOD
    z = 0.0
    A = PeriodicMatrixSignal(
        [
            [z, z, 1.0, z],
            [z, z, z, 1.0],
            [_stiffness(-1 / J1), _stiffness(1 / J1), _damping(-1 / J1), _damping(1 / J1)],
            [_stiffness(1 / J2), _stiffness(-1 / J2), _damping(1 / J2), _damping(-1 / J2)],
        ],
        T,
    )
    B1 = PeriodicMatrixSignal(
        [[z, z, z], [z, z, z], [_sin2(1 / (3 * J1)), z, z], [_cos2(1 / (10 * J2)), z, z]], T
    )
    B2 = PeriodicMatrixSignal.constant([[0.0], [0.0], [1 / J1], [0.0]], T)
    C1 = PeriodicMatrixSignal.constant([[1.0, 0, 0, 0], [0, 1.0, 0, 0]], T)
    C2 = PeriodicMatrixSignal([[_sin2(20.0), _cos2(7.5), z, z], [z, z, z, z]], T)
    D1 = PeriodicMatrixSignal.constant([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], T)
    D2 = PeriodicMatrixSignal.constant([[0.0], [1.0]], T)
    return LtvPlant(A=A, B1=B1, B2=B2, C1=C1, C2=C2, D1=D1, D2=D2)


def initial_alpha_low(nodes: int) -> AlphaProfile:
    """0.01 on ``[pi/2, 3 pi/2]`` (mod T), 0.05 elsewhere."""
    def f(t):
        tm = np.mod(t, PERIOD)
        return np.where((tm >= math.pi / 2) & (tm <= 3 * math.pi / 2), 0.01, 0.05)

    return AlphaProfile.from_function(f, PERIOD, nodes)


def initial_alpha_high(nodes: int) -> AlphaProfile:
    """``1 + sin(7 t) / 5``."""
    return AlphaProfile.from_function(lambda t: 1.0 + np.sin(7.0 * t) / 5.0, PERIOD, nodes)
