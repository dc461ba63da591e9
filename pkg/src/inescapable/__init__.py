"""Minimal inescapable ellipsoids for linear periodic systems with bounded disturbances.

The core objects are periodic matrix signals (:mod:`.signals`), periodic
Lyapunov and Riccati solvers, the ellipsoid size functional with its optimal
alpha iteration (:mod:`.ellipsoid`), gain synthesis (:mod:`.synthesis`) and a
simulation layer that checks inescapability empirically (:mod:`.simulate`).
"""

from .ellipsoid import (
    AlphaIterationHistory,
    EllipsoidFamily,
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
from .errors import (
    AssumptionError,
    ConfigError,
    ConvergenceError,
    DivergenceError,
    EllipsoidError,
    StabilityError,
)
from .lyapunov import PeriodicLyapunovSolution, periodic_lyapunov, solve_periodic_P, solve_periodic_Q
from .matrix_ode import OdeSettings, integrate_matrix_ode, monodromy_affine, state_transition
from .riccati import PeriodicRiccatiSolution, periodic_riccati, solve_control_riccati, solve_filter_riccati
from .signals import AlphaProfile, FourierEntry, GridTrajectory, PeriodicMatrixSignal, rescale_input
from .simulate import (
    EllipsoidSection,
    SimulationRun,
    ellipsoid_boundary_2d,
    inescapability_check,
    simulate_batch,
    simulate_closed_loop,
    worst_case_disturbance,
)
from .synthesis import (
    GainSchedule,
    LtvPlant,
    SynthesisReport,
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

__version__ = "0.1.0"

__all__ = [
    "admissible_alpha",
    "alpha_iteration",
    "alpha_update",
    "AlphaIterationHistory",
    "AlphaProfile",
    "AssumptionError",
    "closed_loop",
    "ConfigError",
    "ConvergenceError",
    "convexity_probe",
    "DivergenceError",
    "EllipsoidError",
    "EllipsoidFamily",
    "ellipsoid_boundary_2d",
    "EllipsoidSection",
    "evaluate_fixed_controller",
    "FourierEntry",
    "GainSchedule",
    "GridTrajectory",
    "inescapability_check",
    "integrate_matrix_ode",
    "lqr_kalman_baseline",
    "LtvPlant",
    "minimal_ellipsoid",
    "monodromy_affine",
    "obs_gain",
    "OdeSettings",
    "optimize_alpha_analysis",
    "optimize_controller",
    "periodic_lyapunov",
    "periodic_riccati",
    "PeriodicLyapunovSolution",
    "PeriodicMatrixSignal",
    "PeriodicRiccatiSolution",
    "rescale_input",
    "sf_gain",
    "simulate_batch",
    "simulate_closed_loop",
    "SimulationRun",
    "size_dual",
    "size_primal",
    "solve_control_riccati",
    "solve_filter_riccati",
    "solve_periodic_P",
    "solve_periodic_Q",
    "StabilityError",
    "state_transition",
    "stationarity_residual",
    "synth_observer",
    "synth_output_feedback",
    "synth_state_feedback",
    "SynthesisReport",
    "worst_case_disturbance",
    "__version__",
]
