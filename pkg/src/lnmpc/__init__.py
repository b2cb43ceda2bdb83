"""Quadrotor attitude control toolkit.

A Lyapunov-constrained nonlinear MPC whose stage-0 contraction constraint
inherits the stability of an auxiliary sliding-mode law, plus sliding-mode and
backstepping baselines, recursive-feasibility certificates, and a
deterministic closed-loop benchmark harness.
"""

from .controllers import (
    BscGains,
    ReferenceSample,
    SmcGains,
    TrackingError,
    bsc_control,
    lyapunov_rate,
    saturate,
    sliding_surface,
    smc_control,
    smc_lyapunov,
    tracking_error,
)
from .dynamics import (
    UavParams,
    attitude_derivative,
    dynamics_jacobians,
    gyro_coupling,
    rk4_step,
    rk4_step_sensitivities,
)
from .ocp import (
    HorizonConfig,
    LnmpcController,
    MpcWeights,
    OcpProblem,
    OcpSolution,
    SolverOptions,
    StateConstraints,
    build_ocp,
    contraction_constraint,
    evaluate_cost,
    solve_sqp,
)
from .sim import (
    DisturbanceSpec,
    Metrics,
    Scenario,
    builtin_scenario,
    compute_metrics,
    inject_disturbance,
    reference,
    run_closed_loop,
)
from .stability import (
    BoundSet,
    StabilityReport,
    derive_bounds,
    feasibility_margin,
    lyapunov_monitor,
    max_norm,
    p_norm,
    sliding_surface_bound,
)
from .trajlog import CSV_COLUMNS, TrajectoryLog

__version__ = "0.1.0"
