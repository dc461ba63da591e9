import math

import numpy as np
import pytest
from _systems import TWO_PI, const, normalized_plant, random_lti
from scipy.linalg import solve_continuous_are

from inescapable.ellipsoid import size_primal
from inescapable.errors import AssumptionError, StabilityError
from inescapable.matrix_ode import OdeSettings
from inescapable.signals import AlphaProfile, GridTrajectory
from inescapable.synthesis import (
    GainSchedule,
    LtvPlant,
    closed_loop,
    evaluate_fixed_controller,
    lqr_kalman_baseline,
    obs_gain,
    optimize_controller,
    sf_gain,
    synth_observer,
    synth_output_feedback,
    synth_state_feedback,
)

ST = OdeSettings(256, 4)
PHI = (1 + math.sqrt(5)) / 2


def alpha_const(value, nodes=256):
    return AlphaProfile.constant(value, TWO_PI, nodes)


def flat(value, nodes=8):
    v = np.atleast_2d(np.asarray(value, dtype=float))
    return GridTrajectory(np.broadcast_to(v, (nodes,) + v.shape).copy(), TWO_PI)


def full_plant(A, Bw, B2, C1, Cz):
    """Normalized plant from raw LTI blocks: measurement noise and control penalty appended."""
    A, Bw, B2, C1, Cz = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, Bw, B2, C1, Cz))
    n, mw = Bw.shape
    py, mu, pz = C1.shape[0], B2.shape[1], Cz.shape[0]
    return LtvPlant(
        A=const(A),
        B1=const(np.hstack([Bw, np.zeros((n, py))])),
        B2=const(B2),
        C1=const(C1),
        C2=const(np.vstack([Cz, np.zeros((mu, n))])),
        D1=const(np.hstack([np.zeros((py, mw)), np.eye(py)])),
        D2=const(np.vstack([np.zeros((pz, mu)), np.eye(mu)])),
    )


SCALAR = full_plant([[0.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
# with a = 0 the design objective keeps falling as alpha grows; a = -1 has an interior optimum
STABLE = full_plant([[-1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])


def test_sf_gain_examples():
    np.testing.assert_allclose(sf_gain(flat(PHI), const([[1.0]])).values, -PHI)
    np.testing.assert_array_equal(sf_gain(flat(PHI), const([[0.0]])).values, 0.0)
    np.testing.assert_array_equal(sf_gain(flat(np.eye(2)), const([[0.0], [1.0]])).values[0], [[0.0, -1.0]])


def test_obs_gain_examples():
    np.testing.assert_array_equal(obs_gain(flat(1.0), const([[1.0]]), alpha_const(1.0, 8)).values, -1.0)
    np.testing.assert_array_equal(obs_gain(flat(1.0), const([[0.0]]), alpha_const(1.0, 8)).values, 0.0)
    np.testing.assert_allclose(obs_gain(flat(PHI), const([[1.0]]), alpha_const(2.0, 8)).values, -2 * PHI)


def test_closed_loop_zero_gains():
    loop = closed_loop(SCALAR, GainSchedule(None, None, None, "state-feedback"))
    t = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(loop.A.sample(t), SCALAR.A.sample(t))
    np.testing.assert_array_equal(loop.C.sample(t), SCALAR.C2.sample(t))


def test_scalar_state_feedback():
    g = synth_state_feedback(SCALAR, alpha_const(1.0), ST)
    np.testing.assert_allclose(g.K.values, -PHI, atol=1e-6)
    loop = closed_loop(SCALAR, g)
    np.testing.assert_allclose(loop.A.sample(np.array([0.3]))[0], [[-PHI]], atol=1e-6)


def test_scalar_observer():
    g = synth_observer(SCALAR, alpha_const(1.0), ST)
    np.testing.assert_allclose(g.L.values, -PHI, atol=1e-6)


def test_output_feedback_block_structure():
    g = synth_state_feedback(SCALAR, alpha_const(1.0), ST)
    loop = closed_loop(SCALAR, GainSchedule(g.K, None, None, "output-feedback"))
    a = loop.A.sample(g.K.times)
    np.testing.assert_array_equal(a[:, 1, 0], 0.0)
    np.testing.assert_allclose(a[:, 0, 0], -PHI, atol=1e-6)
    np.testing.assert_array_equal(a[:, 1, 1], 0.0)
    np.testing.assert_allclose(a[:, 0, 1], PHI, atol=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_lti_state_feedback_matches_are(seed):
    rng = np.random.default_rng(seed)
    A, B, C = random_lti(rng, 3, margin=-0.5)
    plant = full_plant(A, B, B, C, C)
    alpha = 0.7
    g = synth_state_feedback(plant, alpha_const(alpha), ST)
    Q = solve_continuous_are(A + alpha / 2 * np.eye(3), B, C.T @ C, np.eye(B.shape[1]))
    expected = -B.T @ Q
    assert np.max(np.abs(g.K.values - expected)) <= 1e-6 * (1 + np.abs(expected).max())


@pytest.mark.parametrize("seed", range(3))
def test_lti_observer_matches_are(seed):
    rng = np.random.default_rng(10 + seed)
    A, B, C = random_lti(rng, 3, margin=-0.5)
    plant = full_plant(A, B, B, C, C)
    alpha = 0.4
    g = synth_observer(plant, alpha_const(alpha), ST)
    P = solve_continuous_are(
        (A + alpha / 2 * np.eye(3)).T, math.sqrt(alpha) * C.T, B @ B.T / alpha, np.eye(C.shape[0])
    )
    expected = -alpha * P @ C.T
    assert np.max(np.abs(g.L.values - expected)) <= 1e-6 * (1 + np.abs(expected).max())


def test_observer_is_dual_of_state_feedback():
    rng = np.random.default_rng(3)
    A, B, C = random_lti(rng, 3, m=2, p=2)
    alpha = 0.6
    obs = synth_observer(full_plant(A, B, B, C, C), alpha_const(alpha), ST)
    dual = synth_state_feedback(full_plant(A.T, C.T, C.T, B.T, B.T), alpha_const(alpha), ST)
    np.testing.assert_allclose(obs.L.values, np.swapaxes(dual.K.values, -1, -2), atol=1e-6)


def test_state_feedback_gain_grows_with_output_weight():
    rng = np.random.default_rng(4)
    A, B, C = random_lti(rng, 2, m=1, p=1)
    norms = []
    for scale in (1.0, 10.0, 100.0):
        g = synth_state_feedback(full_plant(A, B, 0.1 * B, C, scale * C), alpha_const(0.5), ST)
        norms.append(np.max(np.linalg.norm(g.K.values, axis=(1, 2))))
    assert norms[0] < norms[1] < norms[2]


def test_normalization_violation_is_rejected():
    plant = SCALAR
    bad = LtvPlant(plant.A, plant.B1, plant.B2, plant.C1, plant.C2, const([[0.0, 1.0 + 1e-6]]), plant.D2)
    with pytest.raises(AssumptionError, match=r"D1 D1' = I"):
        synth_observer(bad, alpha_const(1.0), ST)
    bad = LtvPlant(plant.A, plant.B1, plant.B2, plant.C1, const([[1.0], [1e-3]]), plant.D1, plant.D2)
    with pytest.raises(AssumptionError, match=r"D2' C2 = 0"):
        synth_state_feedback(bad, alpha_const(1.0), ST)
    with pytest.raises(AssumptionError, match="missing C1"):
        synth_output_feedback(LtvPlant(plant.A, plant.B1, plant.B2, None, plant.C2, plant.D1, plant.D2),
                              alpha_const(1.0), ST)


def test_separation_is_exact():
    plant, decay = normalized_plant(np.random.default_rng(5), 3)
    alpha = alpha_const(0.5 * decay)
    of = synth_output_feedback(plant, alpha, ST)
    sf = synth_state_feedback(plant, alpha, ST)
    ob = synth_observer(plant, alpha, ST)
    assert of.kind == "output-feedback"
    np.testing.assert_array_equal(of.K.values, sf.K.values)
    np.testing.assert_array_equal(of.L.values, ob.L.values)


def test_scalar_baseline():
    g = lqr_kalman_baseline(SCALAR, ST)
    np.testing.assert_allclose(g.control.values, 1.0, atol=1e-8)
    np.testing.assert_allclose(g.K.values, -1.0, atol=1e-8)
    np.testing.assert_allclose(g.filter.values, 1.0, atol=1e-8)
    np.testing.assert_allclose(g.L.values, -1.0, atol=1e-8)
    assert g.kind == "baseline"


def test_lti_baseline_matches_are():
    rng = np.random.default_rng(6)
    A, B, C = random_lti(rng, 3, m=2, p=2, margin=-0.3)
    B2, C1 = rng.normal(size=(3, 1)), rng.normal(size=(2, 3))
    g = lqr_kalman_baseline(full_plant(A, B, B2, C1, C), ST)
    Bw = np.hstack([B, np.zeros((3, 2))])
    Cz = np.vstack([C, np.zeros((1, 3))])
    Q = solve_continuous_are(A, B2, Cz.T @ Cz, np.eye(1))
    P = solve_continuous_are(A.T, C1.T, Bw @ Bw.T, np.eye(2))
    np.testing.assert_allclose(g.K.values, np.broadcast_to(-B2.T @ Q, g.K.values.shape), atol=1e-6)
    np.testing.assert_allclose(g.L.values, np.broadcast_to(-P @ C1.T, g.L.values.shape), atol=1e-6)


def scalar_sf_scan(a, step=1e-3):
    """Closed-form state-feedback size over constant alpha: Riccati root, loop pole, Lyapunov value."""
    alpha = np.arange(step, 50.0, step)
    s = 2 * a + alpha
    root = np.sqrt(s * s + 4)
    q = (s + root) / 2
    return float(np.min((1 + q * q) / (alpha * root)))


def test_scalar_design_matches_scan():
    report = optimize_controller(STABLE, "sf", alpha_const(0.5), settings=ST)
    assert report.converged
    assert report.stationarity <= 1e-5
    assert np.ptp(report.alpha.nodal) <= 1e-6
    np.testing.assert_allclose(report.alpha.nodal, 2.0, atol=1e-5)
    assert report.size == pytest.approx(scalar_sf_scan(-1.0), rel=1e-4)
    assert report.size == pytest.approx(0.5, rel=1e-6)
    assert report.size == pytest.approx(size_primal(report.loop.C, report.P), rel=1e-9)
    sizes = np.array(report.history.sizes)
    assert np.all(np.diff(sizes) <= 1e-8 * (1 + sizes[:-1]))


def test_fixed_controller_self_consistency():
    report = optimize_controller(STABLE, "sf", alpha_const(0.5), settings=ST)
    size, alpha, hist = evaluate_fixed_controller(STABLE, report.gains, settings=ST)
    assert hist.converged
    assert size == pytest.approx(report.size, abs=1e-6)


def test_destabilizing_gains_are_rejected():
    g = synth_state_feedback(SCALAR, alpha_const(1.0), ST)
    flipped = GainSchedule(GridTrajectory(-g.K.values, TWO_PI), None, g.alpha, g.kind)
    with pytest.raises(StabilityError):
        evaluate_fixed_controller(SCALAR, flipped, settings=ST)


def test_unbounded_design_drifts_without_false_convergence():
    report = optimize_controller(SCALAR, "sf", alpha_const(0.5), settings=ST, max_iter=60)
    assert not report.converged
    assert report.history.sizes[-1] < report.history.sizes[0]
    assert np.min(report.alpha.nodal) > 10.0


def test_design_default_start_and_modes():
    report = optimize_controller(STABLE, "obs", settings=ST)
    assert report.converged and report.mode == "obs"
    assert report.gains.K is None and report.gains.L is not None
    with pytest.raises(ValueError):
        optimize_controller(SCALAR, "baseline", settings=ST)
