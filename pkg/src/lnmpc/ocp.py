"""Lyapunov-constrained nonlinear MPC: horizon problem, SQP solver, stepper.

Transcription is direct multiple shooting with one RK4 step per stage and the
per-stage states as decision variables tied by integration-defect equalities.
Each SQP iteration linearizes the defects, condenses the states out, and
solves a strictly convex QP over the stacked control increments with

* box bounds on every control,
* box bounds on the finitely-bounded state entries at stages 1..N,
* one affine contraction row on the first control, forcing the sliding-mode
  Lyapunov rate at stage 0 to be no worse than the saturated SMC law's.

Full steps, Gauss-Newton Hessian (exact: the cost is quadratic), convergence
when the KKT residual (defects plus reduced control stationarity) drops below
tolerance. If the QP is infeasible the saturated SMC output is returned, which
satisfies the contraction row with equality by construction.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .controllers import ReferenceSample, SmcGains, saturate, smc_control
from .dynamics import UavParams, gyro_coupling, rk4_step

__all__ = [
    "MpcWeights",
    "StateConstraints",
    "HorizonConfig",
    "OcpProblem",
    "OcpSolution",
    "SolverOptions",
    "evaluate_cost",
    "contraction_constraint",
    "build_ocp",
    "solve_sqp",
    "LnmpcController",
    "STATUS_CONVERGED",
    "STATUS_MAX_ITER",
    "STATUS_FALLBACK_SMC",
]

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_FALLBACK_SMC = "fallback_smc"


def _positive_vec(value, size: int, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        v = np.full(size, v[0])
    if v.shape != (size,):
        raise ValueError(f"{name} must be a scalar or a {size}-vector")
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise ValueError(f"{name} entries must be strictly positive, got {v}")
    v.flags.writeable = False
    return v


@dataclass
class MpcWeights:
    """Diagonals of the positive-definite weights: terminal p, stage q (6), stage r (3)."""

    p: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        self.p = _positive_vec(self.p, 6, "mpc.p")
        self.q = _positive_vec(self.q, 6, "mpc.q")
        self.r = _positive_vec(self.r, 3, "mpc.r")

    @classmethod
    def default(cls) -> "MpcWeights":
        w = np.array([30.0, 30.0, 30.0, 1.0, 1.0, 1.0])
        return cls(p=w, q=w.copy(), r=np.ones(3))


@dataclass
class StateConstraints:
    """Symmetric box bounds: |state| <= xi_max (entries may be inf), |torque| <= u_max."""

    xi_max: np.ndarray
    u_max: np.ndarray

    def __post_init__(self) -> None:
        self.xi_max = np.atleast_1d(np.asarray(self.xi_max, dtype=float))
        if self.xi_max.shape != (6,) or np.any(self.xi_max <= 0.0) or np.any(np.isnan(self.xi_max)):
            raise ValueError("xi_max must be a 6-vector of positive bounds (inf allowed)")
        self.u_max = _positive_vec(self.u_max, 3, "u_max")
        self.xi_max.flags.writeable = False

    @classmethod
    def default(cls) -> "StateConstraints":
        half_pi = np.pi / 2.0
        return cls(
            xi_max=np.array([half_pi, half_pi, np.inf, half_pi, half_pi, half_pi]),
            u_max=np.array([0.1, 0.1, 0.1]),
        )


@dataclass
class HorizonConfig:
    """Sampling period dt [s] and number of shooting stages (horizon = n_stages * dt)."""

    dt: float = 0.02
    n_stages: int = 30

    def __post_init__(self) -> None:
        if not np.isfinite(self.dt) or self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if int(self.n_stages) < 1:
            raise ValueError(f"n_stages must be >= 1, got {self.n_stages}")
        self.n_stages = int(self.n_stages)

    @property
    def horizon(self) -> float:
        return self.dt * self.n_stages


@dataclass
class OcpProblem:
    """One receding-horizon problem instance (immutable once built)."""

    x0: np.ndarray
    ref_states: np.ndarray  # (n_stages+1, 6)
    ref_accels: np.ndarray  # (n_stages+1, 3)
    weights: MpcWeights
    constraints: StateConstraints
    smc_gains: SmcGains
    params: UavParams
    horizon: HorizonConfig
    # stage-0 contraction data
    s0: np.ndarray = field(init=False)
    rate_err0: np.ndarray = field(init=False)
    coupling0: np.ndarray = field(init=False)
    accel_ref0: np.ndarray = field(init=False)
    smc_torque0: np.ndarray = field(init=False)  # saturated SMC law at x0
    contraction_rhs: float = field(init=False)
    contraction_grad: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = self.horizon.n_stages
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (6,):
            raise ValueError("x0 must be a 6-vector")
        if self.ref_states.shape != (n + 1, 6) or self.ref_accels.shape != (n + 1, 3):
            raise ValueError(
                f"reference window must supply {n + 1} samples, got {self.ref_states.shape[0]}"
            )
        ref0 = ReferenceSample(
            angles=self.ref_states[0, :3],
            rates=self.ref_states[0, 3:],
            accels=self.ref_accels[0],
        )
        g = self.smc_gains
        z1 = self.x0[:3] - ref0.angles
        self.rate_err0 = self.x0[3:] - ref0.rates
        self.s0 = self.rate_err0 + g.lam * z1
        self.coupling0 = self.params._gyro_gain * gyro_coupling(self.x0[3:])
        self.accel_ref0 = self.ref_accels[0].copy()
        self.smc_torque0 = saturate(
            smc_control(self.x0, ref0, g, self.params), self.constraints.u_max
        )
        self.contraction_grad = self.params._torque_gain * self.s0
        self.contraction_rhs = self._lyap_rate_at(self.smc_torque0)

    def _lyap_rate_at(self, torque: np.ndarray) -> float:
        s_dot = (
            self.coupling0
            + self.params._torque_gain * np.asarray(torque, dtype=float)
            - self.accel_ref0
            + self.smc_gains.lam * self.rate_err0
        )
        return float(self.s0 @ s_dot)


@dataclass
class OcpSolution:
    controls: np.ndarray  # (n_stages, 3)
    states: np.ndarray  # (n_stages+1, 6)
    objective: float
    kkt_residual: float
    iterations: int
    status: str
    active_set: list | None = None  # QP active rows, kept as a warm-start hint


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 30
    rti: bool = False


def build_ocp(
    state: np.ndarray,
    ref_window: list[ReferenceSample],
    weights: MpcWeights,
    constraints: StateConstraints,
    smc_gains: SmcGains,
    params: UavParams,
    horizon: HorizonConfig,
) -> OcpProblem:
    """Assemble the horizon problem from a reference preview of n_stages+1 samples."""
    n = horizon.n_stages
    if len(ref_window) != n + 1:
        raise ValueError(f"ref_window must supply {n + 1} samples, got {len(ref_window)}")
    ref_states = np.array([r.state() for r in ref_window])
    ref_accels = np.array([r.accels for r in ref_window])
    return OcpProblem(
        x0=np.asarray(state, dtype=float),
        ref_states=ref_states,
        ref_accels=ref_accels,
        weights=weights,
        constraints=constraints,
        smc_gains=smc_gains,
        params=params,
        horizon=horizon,
    )


def evaluate_cost(problem: OcpProblem, controls: np.ndarray, states: np.ndarray) -> float:
    """Discrete transcription of the tracking cost.

    sum_j ( |state_j - ref_j|_Q^2 + |u_j|_R^2 ) * dt over stages 0..n-1, plus
    the terminal |state_n - ref_n|_P^2 term.
    """
    n = problem.horizon.n_stages
    controls = np.asarray(controls, dtype=float)
    states = np.asarray(states, dtype=float)
    if controls.shape != (n, 3) or states.shape != (n + 1, 6):
        raise ValueError("controls/states length inconsistent with the horizon")
    dt = problem.horizon.dt
    w = problem.weights
    err = states - problem.ref_states
    stage = float(np.sum((err[:n] ** 2) @ w.q)) + float(np.sum((controls**2) @ w.r))
    terminal = float(err[n] @ (w.p * err[n]))
    return stage * dt + terminal


def contraction_constraint(problem: OcpProblem, u0: np.ndarray) -> tuple[float, float]:
    """Stage-0 contraction pair (lhs, rhs); satisfied iff lhs <= rhs.

    lhs is the sliding-mode Lyapunov rate at the candidate first torque; rhs is
    the same rate at the saturated SMC law, which equals
    -s'(c1*sign(s) + c2*s) whenever that law is inside the torque box. The lhs
    is affine in u0 with gradient torque_gain * s0.
    """
    return problem._lyap_rate_at(u0), problem.contraction_rhs


def _rk4_inline(x: np.ndarray, u: np.ndarray, g1: np.ndarray, g2: np.ndarray, dt: float):
    """Scalar-arithmetic RK4 step, equivalent to dynamics.rk4_step but allocation-free."""
    a0, a1, a2, r0, r1, r2 = x
    g10, g11, g12 = g1
    acc0 = g2[0] * u[0]
    acc1 = g2[1] * u[1]
    acc2 = g2[2] * u[2]
    h2 = 0.5 * dt

    def acc(p0, p1, p2):
        return g10 * p1 * p2 + acc0, g11 * p0 * p2 + acc1, g12 * p0 * p1 + acc2

    k1a = (r0, r1, r2)
    k1b = acc(r0, r1, r2)
    q0, q1, q2 = r0 + h2 * k1b[0], r1 + h2 * k1b[1], r2 + h2 * k1b[2]
    k2a = (q0, q1, q2)
    k2b = acc(q0, q1, q2)
    q0, q1, q2 = r0 + h2 * k2b[0], r1 + h2 * k2b[1], r2 + h2 * k2b[2]
    k3a = (q0, q1, q2)
    k3b = acc(q0, q1, q2)
    q0, q1, q2 = r0 + dt * k3b[0], r1 + dt * k3b[1], r2 + dt * k3b[2]
    k4a = (q0, q1, q2)
    k4b = acc(q0, q1, q2)
    w = dt / 6.0
    return np.array(
        [
            a0 + w * (k1a[0] + 2.0 * (k2a[0] + k3a[0]) + k4a[0]),
            a1 + w * (k1a[1] + 2.0 * (k2a[1] + k3a[1]) + k4a[1]),
            a2 + w * (k1a[2] + 2.0 * (k2a[2] + k3a[2]) + k4a[2]),
            r0 + w * (k1b[0] + 2.0 * (k2b[0] + k3b[0]) + k4b[0]),
            r1 + w * (k1b[1] + 2.0 * (k2b[1] + k3b[1]) + k4b[1]),
            r2 + w * (k1b[2] + 2.0 * (k2b[2] + k3b[2]) + k4b[2]),
        ]
    )


def _rollout(problem: OcpProblem, controls: np.ndarray) -> np.ndarray:
    n = problem.horizon.n_stages
    g1 = problem.params._gyro_gain
    g2 = problem.params._torque_gain
    dt = problem.horizon.dt
    states = np.empty((n + 1, 6))
    states[0] = problem.x0
    for j in range(n):
        states[j + 1] = _rk4_inline(states[j], controls[j], g1, g2, dt)
    return states


def _smc_rollout(problem: OcpProblem) -> np.ndarray:
    """Saturated SMC applied along the horizon: the cold-start initial guess."""
    n = problem.horizon.n_stages
    controls = np.empty((n, 3))
    x = problem.x0.copy()
    for j in range(n):
        ref = ReferenceSample(
            angles=problem.ref_states[j, :3],
            rates=problem.ref_states[j, 3:],
            accels=problem.ref_accels[j],
        )
        controls[j] = saturate(
            smc_control(x, ref, problem.smc_gains, problem.params), problem.constraints.u_max
        )
        x = rk4_step(x, controls[j], problem.params, problem.horizon.dt)
    return controls


def _fallback_solution(problem: OcpProblem, iterations: int) -> OcpSolution:
    controls = _smc_rollout(problem)
    controls[0] = problem.smc_torque0
    states = _rollout(problem, controls)
    return OcpSolution(
        controls=controls,
        states=states,
        objective=evaluate_cost(problem, controls, states),
        kkt_residual=np.inf,
        iterations=iterations,
        status=STATUS_FALLBACK_SMC,
    )


def _batch_dynamics(states: np.ndarray, controls: np.ndarray, g1, g2) -> np.ndarray:
    out = np.empty_like(states)
    r = states[:, 3:]
    out[:, :3] = r
    out[:, 3] = g1[0] * r[:, 1] * r[:, 2] + g2[0] * controls[:, 0]
    out[:, 4] = g1[1] * r[:, 0] * r[:, 2] + g2[1] * controls[:, 1]
    out[:, 5] = g1[2] * r[:, 0] * r[:, 1] + g2[2] * controls[:, 2]
    return out


def _batch_state_jacobian(states: np.ndarray, g1) -> np.ndarray:
    n = states.shape[0]
    fx = np.zeros((n, 6, 6))
    fx[:, 0, 3] = fx[:, 1, 4] = fx[:, 2, 5] = 1.0
    r = states[:, 3:]
    fx[:, 3, 4] = g1[0] * r[:, 2]
    fx[:, 3, 5] = g1[0] * r[:, 1]
    fx[:, 4, 3] = g1[1] * r[:, 2]
    fx[:, 4, 5] = g1[1] * r[:, 0]
    fx[:, 5, 3] = g1[2] * r[:, 1]
    fx[:, 5, 4] = g1[2] * r[:, 0]
    return fx


class _Derivatives:
    """Per-iteration dynamics data along the shooting trajectory.

    Batched equivalent of rk4_step_sensitivities over all stages at once;
    the two are cross-checked in the test suite.
    """

    def __init__(self, problem: OcpProblem, controls: np.ndarray, states: np.ndarray) -> None:
        dt = problem.horizon.dt
        g1 = problem.params._gyro_gain
        g2 = problem.params._torque_gain
        x1 = states[:-1]
        eye = np.eye(6)
        fu = np.zeros((6, 3))
        fu[3:, :] = np.diag(g2)

        k1 = _batch_dynamics(x1, controls, g1, g2)
        j1 = _batch_state_jacobian(x1, g1)
        x2 = x1 + (0.5 * dt) * k1
        k2 = _batch_dynamics(x2, controls, g1, g2)
        j2 = _batch_state_jacobian(x2, g1)
        d2x = j2 @ (eye + (0.5 * dt) * j1)
        d2u = j2 @ ((0.5 * dt) * fu) + fu
        x3 = x1 + (0.5 * dt) * k2
        k3 = _batch_dynamics(x3, controls, g1, g2)
        j3 = _batch_state_jacobian(x3, g1)
        d3x = j3 @ (eye + (0.5 * dt) * d2x)
        d3u = j3 @ ((0.5 * dt) * d2u) + fu
        x4 = x1 + dt * k3
        k4 = _batch_dynamics(x4, controls, g1, g2)
        j4 = _batch_state_jacobian(x4, g1)
        d4x = j4 @ (eye + dt * d3x)
        d4u = j4 @ (dt * d3u) + fu

        x_next = x1 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        self.a = eye + (dt / 6.0) * (j1 + 2.0 * d2x + 2.0 * d3x + d4x)
        self.b = (dt / 6.0) * (fu + 2.0 * d2u + 2.0 * d3u + d4u)
        self.defects = x_next - states[1:]


def _kkt_residual(
    problem: OcpProblem,
    controls: np.ndarray,
    states: np.ndarray,
    der: _Derivatives,
    mult: dict | None,
) -> float:
    """Max-norm KKT residual: defects plus reduced control stationarity.

    States are eliminated through the adjoint recursion, so state stationarity
    holds by construction; bound rows and the contraction row are linear and
    exactly satisfied, leaving defects and the control gradient as the only
    nonzero parts.
    """
    if mult is None:
        return np.inf
    n = problem.horizon.n_stages
    dt = problem.horizon.dt
    w = problem.weights
    err = states - problem.ref_states
    lam_next = 2.0 * w.p * err[n] + mult["mu_x"][n - 1]
    stat = np.empty((n, 3))
    for j in range(n - 1, -1, -1):
        stat[j] = 2.0 * dt * w.r * controls[j] + der.b[j].T @ lam_next + mult["mu_u"][j]
        if j > 0:
            lam_next = der.a[j].T @ lam_next + 2.0 * dt * w.q * err[j] + mult["mu_x"][j - 1]
    stat[0] += mult["nu"] * problem.contraction_grad
    return max(float(np.max(np.abs(der.defects))), float(np.max(np.abs(stat))))


def _solve_subproblem(
    problem: OcpProblem,
    controls: np.ndarray,
    states: np.ndarray,
    der: _Derivatives,
    warm_active: list | None = None,
):
    """Condense states out and solve the QP over stacked control increments.

    Returns (du, dx, multipliers) or None when the QP is infeasible.
    """
    n = problem.horizon.n_stages
    dt = problem.horizon.dt
    w = problem.weights
    nv = 3 * n

    # sensitivity of states 1..n w.r.t. stacked controls, plus defect offsets
    sens = np.zeros((n, 6, nv))
    offset = np.zeros((n, 6))
    sens[0][:, 0:3] = der.b[0]
    offset[0] = der.defects[0]
    for j in range(1, n):
        sens[j] = der.a[j] @ sens[j - 1]
        sens[j][:, 3 * j : 3 * j + 3] += der.b[j]
        offset[j] = der.a[j] @ offset[j - 1] + der.defects[j]

    e_flat = sens.reshape(6 * n, nv)
    w_stack = np.empty((n, 6))
    w_stack[: n - 1] = w.q * dt
    w_stack[n - 1] = w.p
    w_flat = w_stack.reshape(-1)
    err = (states[1:] + offset - problem.ref_states[1:]).reshape(-1)
    r_rep = np.tile(w.r * dt, n)

    hess = 2.0 * (e_flat.T @ (w_flat[:, None] * e_flat) + np.diag(r_rep))
    grad = 2.0 * (e_flat.T @ (w_flat * err) + r_rep * controls.reshape(-1))

    u_max = problem.constraints.u_max
    u_flat = controls.reshape(-1)
    xi_max = problem.constraints.xi_max
    bounded = np.where(np.isfinite(xi_max))[0]
    nb = bounded.size
    base = states[1:] + offset

    eye = np.eye(nv)
    # stage indices of the bounded state entries, flattened over (stage, entry)
    sel = (6 * np.arange(n)[:, None] + bounded[None, :]).reshape(-1)
    s_rows = e_flat[sel]
    s_upper = (xi_max[bounded][None, :] - base[:, bounded]).reshape(-1)
    s_lower = (xi_max[bounded][None, :] + base[:, bounded]).reshape(-1)
    crow = np.zeros((1, nv))
    crow[0, 0:3] = problem.contraction_grad
    a_rows = np.concatenate([eye, -eye, s_rows, -s_rows, crow], axis=0)
    b_vals = np.concatenate(
        [
            np.tile(u_max, n) - u_flat,
            np.tile(u_max, n) + u_flat,
            s_upper,
            s_lower,
            [problem.contraction_rhs - problem._lyap_rate_at(controls[0])],
        ]
    )

    res = qp.solve_qp(hess, grad, a_rows, b_vals, warm_active=warm_active)
    if not res.optimal:
        return None

    lam = res.lam
    mu_u = (lam[:nv] - lam[nv : 2 * nv]).reshape(n, 3)
    mu_x = np.zeros((n, 6))
    n_state_rows = n * nb
    mu_state = lam[2 * nv : 2 * nv + n_state_rows] - lam[2 * nv + n_state_rows : 2 * nv + 2 * n_state_rows]
    mu_x[:, bounded] = mu_state.reshape(n, nb)
    nu = float(lam[-1])
    du = res.x.reshape(n, 3)
    dx = (e_flat @ res.x).reshape(n, 6) + offset
    return du, dx, {"mu_u": mu_u, "mu_x": mu_x, "nu": nu, "active": res.active}


def solve_sqp(
    problem: OcpProblem,
    warm_start: OcpSolution | None = None,
    options: SolverOptions | None = None,
) -> OcpSolution:
    """Solve the horizon problem by full-step SQP.

    ``warm_start`` shifts the previous solution by one stage (tail repeated);
    otherwise controls are initialized from the saturated SMC law rolled out
    over the horizon. RTI mode performs exactly one QP solve.
    """
    opts = options or SolverOptions()
    n = problem.horizon.n_stages
    u_max = problem.constraints.u_max

    active = None
    if warm_start is not None and warm_start.controls.shape == (n, 3):
        controls = np.empty((n, 3))
        controls[: n - 1] = warm_start.controls[1:]
        controls[n - 1] = warm_start.controls[n - 1]
        controls = np.clip(controls, -u_max, u_max)
        active = warm_start.active_set
    else:
        controls = _smc_rollout(problem)
    states = _rollout(problem, controls)

    mult = None
    iterations = 0
    kkt = np.inf
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    max_qp_solves = 1 if opts.rti else opts.max_iter
    status = STATUS_MAX_ITER
    while True:
        der = _Derivatives(problem, controls, states)
        kkt = _kkt_residual(problem, controls, states, der, mult)
        if best is None or kkt < best[0]:
            best = (kkt, controls.copy(), states.copy())
        if kkt <= opts.tol:
            status = STATUS_CONVERGED
            break
        if iterations >= max_qp_solves:
            break
        try:
            step = _solve_subproblem(problem, controls, states, der, active)
        except qp.QpError:
            step = None
        if step is None:
            return _fallback_solution(problem, iterations)
        du, dx, mult = step
        active = mult["active"]
        controls = controls + du
        states = states.copy()
        states[1:] += dx
        iterations += 1

    if status != STATUS_CONVERGED and best is not None:
        kkt, controls, states = best
    # report a defect-free trajectory: re-roll the states under the final controls
    states = _rollout(problem, controls)
    return OcpSolution(
        controls=controls,
        states=states,
        objective=evaluate_cost(problem, controls, states),
        kkt_residual=float(kkt),
        iterations=iterations,
        status=status,
        active_set=active,
    )


class LnmpcController:
    """Receding-horizon stepper with warm-start memory.

    Single-threaded and stateful; use one instance per closed-loop run.
    """

    def __init__(
        self,
        params: UavParams,
        smc_gains: SmcGains,
        weights: MpcWeights,
        constraints: StateConstraints,
        horizon: HorizonConfig,
        options: SolverOptions | None = None,
    ) -> None:
        self.params = params
        self.smc_gains = smc_gains
        self.weights = weights
        self.constraints = constraints
        self.horizon = horizon
        self.options = options or SolverOptions()
        self._previous: OcpSolution | None = None

    def reset(self) -> None:
        self._previous = None

    def step(
        self, state: np.ndarray, ref_window: list[ReferenceSample]
    ) -> tuple[np.ndarray, OcpSolution, dict]:
        """Solve one horizon problem and return (applied torque, solution, diagnostics).

        Only the first control is applied; it is clamped to the torque box so
        the applied command can never exceed the limits, whatever the solver
        status.
        """
        problem = build_ocp(
            state,
            ref_window,
            self.weights,
            self.constraints,
            self.smc_gains,
            self.params,
            self.horizon,
        )
        t0 = time.perf_counter()
        solution = solve_sqp(problem, self._previous, self.options)
        solve_ms = (time.perf_counter() - t0) * 1e3
        self._previous = solution
        applied = saturate(solution.controls[0], self.constraints.u_max)
        lhs, rhs = contraction_constraint(problem, applied)
        diagnostics = {
            "contraction_lhs": lhs,
            "contraction_rhs": rhs,
            "solve_ms": solve_ms,
            "iterations": solution.iterations,
            "status": solution.status,
            "kkt_residual": solution.kkt_residual,
        }
        return applied, solution, diagnostics
