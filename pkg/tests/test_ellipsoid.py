import math

import numpy as np
import pytest
from _systems import TWO_PI, const, random_alpha, random_lti, random_system
from scipy.linalg import solve_continuous_lyapunov

from inescapable.ellipsoid import (
    Evaluation,
    admissible_alpha,
    alpha_iteration,
    alpha_update,
    convexity_probe,
    minimal_ellipsoid,
    optimize_alpha_analysis,
    size_dual,
    size_primal,
    stationarity_residual,
)
from inescapable.errors import AssumptionError, StabilityError
from inescapable.lyapunov import solve_periodic_P, solve_periodic_Q
from inescapable.matrix_ode import OdeSettings
from inescapable.signals import AlphaProfile, GridTrajectory, node_times

ST = OdeSettings(256, 4)
ONE = const([[1.0]])


def grid(values, period=TWO_PI):
    return GridTrajectory(values, period)


def test_size_primal_examples():
    assert size_primal(ONE, grid(np.ones(8))) == 1.0
    assert size_primal(const([[0.0]]), grid(np.ones(8))) == 0.0
    t = node_times(TWO_PI, 64)
    assert size_primal(ONE, grid(2 + np.sin(t))) == pytest.approx(2.0, abs=1e-9)


def test_size_dual_examples():
    alpha = AlphaProfile.constant(1.0, TWO_PI, 8)
    assert size_dual(ONE, grid(np.ones(8)), alpha) == 1.0
    assert size_dual(const([[0.0]]), grid(np.ones(8)), alpha) == 0.0


def test_scalar_primal_equals_dual():
    alpha = AlphaProfile.constant(1.0, TWO_PI, 256)
    a = const([[-1.0]])
    P = solve_periodic_P(a, ONE, alpha, ST)
    Q = solve_periodic_Q(a, ONE, alpha, ST)
    assert size_primal(ONE, P) == pytest.approx(1.0, abs=1e-6)
    assert size_dual(ONE, Q, alpha) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_duality_random_periodic(seed):
    rng = np.random.default_rng(seed)
    A, B, C, decay = random_system(rng, int(rng.integers(1, 5)))
    alpha = random_alpha(rng, decay, TWO_PI, 256)
    P = solve_periodic_P(A, B, alpha, ST)
    Q = solve_periodic_Q(A, C, alpha, ST)
    assert size_primal(C, P) == pytest.approx(size_dual(B, Q, alpha), rel=1e-6)


def test_alpha_update_examples():
    ones = grid(np.ones(8))
    np.testing.assert_allclose(alpha_update(ones, ones, ONE).nodal, 1.0)
    np.testing.assert_allclose(alpha_update(grid(np.full(8, 4.0)), ones, ONE).nodal, 0.5)
    with pytest.raises(AssumptionError, match="degenerate"):
        alpha_update(ones, ones, const([[0.0]]))
    floored = alpha_update(ones, ones, const([[0.0]]), floor=1e-8)
    np.testing.assert_allclose(floored.nodal, 1e-8)
    with pytest.raises(AssumptionError, match="trace"):
        alpha_update(grid(np.zeros(8)), ones, ONE)


def test_stationarity_zero_at_fixed_point():
    ones = grid(np.ones(8))
    assert stationarity_residual(AlphaProfile.constant(1.0, TWO_PI, 8), ones, ones, ONE) == 0.0
    assert stationarity_residual(AlphaProfile.constant(2.0, TWO_PI, 8), ones, ones, ONE) == pytest.approx(1.5)


def test_admissible_alpha():
    assert admissible_alpha(const([[-1.0]]), ST) == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(StabilityError):
        admissible_alpha(const([[0.2]]), ST)


def test_minimal_ellipsoid_family():
    fam = minimal_ellipsoid(const([[-1.0]]), ONE, const([[2.0]]), AlphaProfile.constant(1.0, TWO_PI, 256), ST)
    assert fam.size == pytest.approx(4.0, abs=1e-6)
    assert fam.size >= 0


@pytest.mark.parametrize("start", [0.5, 1.7])
@pytest.mark.parametrize("accelerate", [True, False])
def test_scalar_optimum_from_either_side(start, accelerate):
    alpha0 = AlphaProfile.constant(start, TWO_PI, 256)
    alpha, hist = optimize_alpha_analysis(const([[-1.0]]), ONE, ONE, alpha0, settings=ST, accelerate=accelerate)
    assert hist.converged
    np.testing.assert_allclose(alpha.nodal, 1.0, atol=1e-6)
    assert hist.sizes[-1] == pytest.approx(1.0, abs=1e-6)
    assert hist.stationarity <= 1e-5
    assert hist.sizes[0] == pytest.approx(1 / (start * (2 - start)), rel=1e-6)


def test_scalar_optimum_default_start():
    alpha, hist = optimize_alpha_analysis(const([[-2.0]]), ONE, ONE, settings=ST)
    np.testing.assert_allclose(alpha.nodal, 2.0, atol=1e-6)
    assert hist.sizes[-1] == pytest.approx(0.25, rel=1e-6)


def scan_size(A, B, C, decay, step=1e-3):
    best = math.inf
    for a in np.arange(step, 2 * decay, step):
        Ash = A + a / 2 * np.eye(A.shape[0])
        P = solve_continuous_lyapunov(Ash, -B @ B.T / a)
        best = min(best, float(np.trace(C @ P @ C.T)))
    return best


@pytest.mark.parametrize("seed", range(2))
def test_lti_optimum_is_constant_and_matches_scan(seed):
    rng = np.random.default_rng(seed)
    A, B, C = random_lti(rng, 2)
    decay = -np.max(np.linalg.eigvals(A).real)
    alpha0 = AlphaProfile.from_function(lambda t: decay * (1 + 0.3 * np.sin(t)), TWO_PI, 256)
    alpha, hist = optimize_alpha_analysis(const(A), const(B), const(C), alpha0, settings=ST)
    assert hist.converged
    assert np.ptp(alpha.nodal) <= 1e-6
    assert hist.sizes[-1] == pytest.approx(scan_size(A, B, C, decay), rel=1e-4)


def test_history_non_increasing_random_periodic():
    rng = np.random.default_rng(21)
    A, B, C, decay = random_system(rng, 3, m=2, p=2)
    alpha0 = random_alpha(rng, decay, TWO_PI, 256, low=0.1, high=0.3)
    alpha, hist = optimize_alpha_analysis(A, B, C, alpha0, settings=ST)
    assert hist.converged and hist.stationarity <= 1e-5
    sizes = np.array(hist.sizes)
    assert np.all(np.diff(sizes) <= 1e-8 * (1 + sizes[:-1]))
    assert len(hist.iterates) == len(hist.sizes)


def test_plain_and_accelerated_share_fixed_point():
    rng = np.random.default_rng(22)
    A, B, C, decay = random_system(rng, 2)
    alpha0 = AlphaProfile.constant(0.5 * decay, TWO_PI, 256)
    fast, h1 = optimize_alpha_analysis(A, B, C, alpha0, settings=ST)
    slow, h2 = optimize_alpha_analysis(A, B, C, alpha0, settings=ST, accelerate=False, max_iter=500)
    assert h1.converged and h2.converged
    assert h1.iterations <= h2.iterations
    assert np.max(np.abs(fast.nodal - slow.nodal)) <= 1e-5 * (1 + np.max(fast.nodal))


def test_iteration_cap_returns_best_so_far():
    rng = np.random.default_rng(23)
    A, B, C, decay = random_system(rng, 2)
    alpha0 = AlphaProfile.constant(0.2 * decay, TWO_PI, 256)
    _, hist = optimize_alpha_analysis(A, B, C, alpha0, settings=ST, max_iter=2, accelerate=False)
    assert not hist.converged
    assert hist.iterations == 3
    assert hist.final.size == hist.sizes[-1]


def synthetic(size_of, target=1.0):
    """Evaluator whose alpha update always proposes ``target`` and whose size is ``size_of(alpha)``."""
    ones = grid(np.ones(16))
    b = const([[target]])

    def evaluate(alpha):
        return Evaluation(float(size_of(alpha.nodal[0])), ones, ones, b)

    return evaluate


def test_halving_recovers_descent():
    alpha0 = AlphaProfile.constant(0.5, TWO_PI, 16)
    alpha, hist = alpha_iteration(synthetic(lambda a: abs(a - 0.6)), alpha0, max_iter=1, accelerate=False)
    assert hist.halvings == 2
    assert alpha.nodal[0] == pytest.approx(0.625)
    assert hist.sizes[1] < hist.sizes[0]


def test_stall_warns_and_stops():
    alpha0 = AlphaProfile.constant(0.5, TWO_PI, 16)
    with pytest.warns(RuntimeWarning, match="stalled"):
        alpha, hist = alpha_iteration(synthetic(lambda a: (a - 0.3) ** 2), alpha0, accelerate=False)
    assert not hist.converged
    assert alpha.nodal[0] == 0.5


def test_inner_errors_carry_iteration_index():
    calls = []

    def evaluate(alpha):
        calls.append(1)
        if len(calls) == 2:
            raise AssumptionError("boom")
        ones = grid(np.ones(16))
        return Evaluation(1.0, ones, ones, const([[2.0]]))

    with pytest.raises(AssumptionError, match="alpha iteration 1: boom"):
        alpha_iteration(evaluate, AlphaProfile.constant(0.5, TWO_PI, 16), accelerate=False)


def test_convexity_probe_examples():
    a, one = const([[-1.0]]), ONE
    same = AlphaProfile.constant(0.7, TWO_PI, 256)
    s1, s2, sm = convexity_probe(a, one, one, same, same, ST)
    assert s1 == s2 == sm
    s1, s2, sm = convexity_probe(
        a, one, one, AlphaProfile.constant(0.5, TWO_PI, 256), AlphaProfile.constant(1.5, TWO_PI, 256), ST
    )
    assert s1 == pytest.approx(4 / 3, rel=1e-6)
    assert s2 == pytest.approx(4 / 3, rel=1e-6)
    assert sm == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_midpoint_convexity_random_scalar(seed):
    rng = np.random.default_rng(40 + seed)
    A, B, C, decay = random_system(rng, 1, m=1, p=1)
    a1 = random_alpha(rng, decay, TWO_PI, 256)
    a2 = random_alpha(rng, decay, TWO_PI, 256)
    s1, s2, sm = convexity_probe(A, B, C, a1, a2, ST)
    assert sm <= 0.5 * (s1 + s2) + 1e-9
