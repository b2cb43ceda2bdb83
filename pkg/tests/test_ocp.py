import numpy as np
import pytest

from lnmpc import (
    HorizonConfig,
    LnmpcController,
    MpcWeights,
    ReferenceSample,
    SmcGains,
    StateConstraints,
    build_ocp,
    contraction_constraint,
    evaluate_cost,
    rk4_step,
    rk4_step_sensitivities,
    saturate,
    smc_control,
    solve_sqp,
)
from lnmpc.ocp import STATUS_CONVERGED, STATUS_FALLBACK_SMC, SolverOptions
from lnmpc.sim import builtin_scenario, reference


def constant_window(angles, n):
    return [ReferenceSample(angles=np.asarray(angles, float)) for _ in range(n + 1)]


def scenario_window(scenario_id, t0, horizon):
    scen = builtin_scenario(scenario_id)
    return [reference(scen, t0 + j * horizon.dt) for j in range(horizon.n_stages + 1)]


@pytest.fixture()
def bundle(params, example_gains, weights, constraints, horizon):
    return dict(
        weights=weights,
        constraints=constraints,
        smc_gains=example_gains,
        params=params,
        horizon=horizon,
    )


class TestWeightsAndConstraints:
    def test_default_weights(self, weights):
        assert weights.p == pytest.approx([30, 30, 30, 1, 1, 1])
        assert weights.q == pytest.approx([30, 30, 30, 1, 1, 1])
        assert weights.r == pytest.approx([1, 1, 1])

    def test_default_box(self, constraints):
        half_pi = np.pi / 2
        assert constraints.xi_max[2] == np.inf
        assert constraints.xi_max[[0, 1, 3, 4, 5]] == pytest.approx([half_pi] * 5)
        assert constraints.u_max == pytest.approx([0.1, 0.1, 0.1])

    def test_horizon_validation(self):
        with pytest.raises(ValueError):
            HorizonConfig(dt=0.0)
        with pytest.raises(ValueError):
            HorizonConfig(n_stages=0)

    def test_weight_positivity(self):
        with pytest.raises(ValueError):
            MpcWeights(p=np.zeros(6), q=np.ones(6), r=np.ones(3))

    def test_bad_xi_max(self):
        with pytest.raises(ValueError):
            StateConstraints(xi_max=-np.ones(6), u_max=np.full(3, 0.1))


class TestBuildOcp:
    def test_window_length_enforced(self, bundle):
        with pytest.raises(ValueError, match="samples"):
            build_ocp(np.zeros(6), constant_window(np.zeros(3), 10), **bundle)

    def test_zero_reference_contraction(self, bundle):
        prob = build_ocp(np.zeros(6), constant_window(np.zeros(3), 30), **bundle)
        lhs, rhs = contraction_constraint(prob, np.zeros(3))
        assert lhs == 0.0
        assert rhs == 0.0

    def test_step_sliding_value(self, params, weights, constraints, horizon):
        gains = SmcGains(lam=2.0, c1=0.01, c2=0.5)
        prob = build_ocp(
            np.zeros(6),
            constant_window(np.ones(3), 30),
            weights,
            constraints,
            gains,
            params,
            horizon,
        )
        assert prob.s0 == pytest.approx([-2.0, -2.0, -2.0])


class TestEvaluateCost:
    def test_zero_on_reference(self, bundle):
        prob = build_ocp(np.zeros(6), constant_window(np.zeros(3), 30), **bundle)
        controls = np.zeros((30, 3))
        states = np.zeros((31, 6))
        assert evaluate_cost(prob, controls, states) == 0.0

    def test_hand_value_single_stage(self, params, example_gains, weights, constraints):
        horizon = HorizonConfig(dt=0.02, n_stages=1)
        prob = build_ocp(
            np.array([1.0, 0, 0, 0, 0, 0]),
            constant_window(np.zeros(3), 1),
            weights,
            constraints,
            example_gains,
            params,
            horizon,
        )
        controls = np.array([[1.0, 0, 0]])
        states = np.array([[1.0, 0, 0, 0, 0, 0], [1.0, 0, 0, 0, 0, 0]])
        assert evaluate_cost(prob, controls, states) == pytest.approx(30.62)

    def test_quadratic_scaling_in_control(self, bundle, rng):
        prob = build_ocp(np.zeros(6), constant_window(np.zeros(3), 30), **bundle)
        controls = rng.uniform(-0.05, 0.05, (30, 3))
        states = rng.uniform(-0.1, 0.1, (31, 6))
        base = evaluate_cost(prob, controls, states)
        j = 13
        doubled = controls.copy()
        doubled[j] *= 2.0
        extra = 3.0 * float(controls[j] @ (prob.weights.r * controls[j])) * prob.horizon.dt
        assert evaluate_cost(prob, doubled, states) == pytest.approx(base + extra)

    def test_length_mismatch_rejected(self, bundle):
        prob = build_ocp(np.zeros(6), constant_window(np.zeros(3), 30), **bundle)
        with pytest.raises(ValueError):
            evaluate_cost(prob, np.zeros((29, 3)), np.zeros((31, 6)))


class TestContraction:
    def test_smc_meets_with_equality(self, params, weights, constraints, horizon, rng):
        for _ in range(20):
            gains = SmcGains(
                lam=rng.uniform(0.5, 3, 3), c1=rng.uniform(0.01, 0.3, 3), c2=rng.uniform(0.1, 1, 3)
            )
            x = rng.uniform(-0.5, 0.5, 6)
            window = constant_window(rng.uniform(-0.5, 0.5, 3), horizon.n_stages)
            prob = build_ocp(x, window, weights, constraints, gains, params, horizon)
            u = saturate(smc_control(x, window[0], gains, params), constraints.u_max)
            lhs, rhs = contraction_constraint(prob, u)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_ideal_form_when_unsaturated(self, params, weights, constraints, horizon):
        """With the SMC law inside the torque box the rhs equals the closed-form
        -s'(c1 sign(s) + c2 s)."""
        gains = SmcGains(lam=2.0, c1=0.01, c2=0.5)
        x = np.array([0.1, 0, 0, 0, 0, 0])
        prob = build_ocp(
            x, constant_window(np.zeros(3), horizon.n_stages), weights, constraints, gains, params, horizon
        )
        lhs, rhs = contraction_constraint(prob, np.zeros(3))
        assert lhs == pytest.approx(0.0, abs=1e-15)
        assert rhs == pytest.approx(-0.2 * (0.01 + 0.5 * 0.2), abs=1e-12)
        assert lhs > rhs  # u = 0 violates the constraint here


class TestSolveSqp:
    def test_equilibrium(self, bundle):
        prob = build_ocp(np.zeros(6), constant_window(np.zeros(3), 30), **bundle)
        sol = solve_sqp(prob)
        assert sol.status == STATUS_CONVERGED
        assert sol.objective <= 1e-10
        assert np.max(np.abs(sol.controls)) <= 1e-10

    def test_step_problem_certificates(self, bundle):
        prob = build_ocp(np.zeros(6), constant_window(np.ones(3), 30), **bundle)
        sol = solve_sqp(prob)
        assert sol.status == STATUS_CONVERGED
        lhs, rhs = contraction_constraint(prob, sol.controls[0])
        assert lhs <= rhs + 1e-8
        assert np.max(np.abs(sol.controls)) <= 0.1 + 1e-9
        bounded = np.isfinite(prob.constraints.xi_max)
        assert np.all(np.abs(sol.states[:, bounded]) <= prob.constraints.xi_max[bounded] + 1e-6)

    def test_shooting_defects_small(self, bundle):
        prob = build_ocp(
            np.array([0.2, -0.1, 0.4, 0.1, 0, -0.2]), constant_window(np.zeros(3), 30), **bundle
        )
        sol = solve_sqp(prob)
        assert sol.status == STATUS_CONVERGED
        for j in range(30):
            step = rk4_step(sol.states[j], sol.controls[j], prob.params, prob.horizon.dt)
            assert np.max(np.abs(step - sol.states[j + 1])) <= 1e-8

    def test_single_stage_matches_least_squares(self, params, example_gains, weights, constraints):
        """One stage, inactive constraints, start on the reference: the SQP
        result must match the dense normal-equations solution of the same QP.

        A yaw-only target keeps the gyro products identically zero, so the
        plant is exactly its own linearization at the origin and the dense
        closed form is the true optimum."""
        horizon = HorizonConfig(dt=0.02, n_stages=1)
        target = np.array([0.0, 0, 0.003, 0.0, 0, 0.015])
        window = [
            ReferenceSample(angles=np.zeros(3)),
            ReferenceSample(angles=target[:3], rates=target[3:]),
        ]
        prob = build_ocp(np.zeros(6), window, weights, constraints, example_gains, params, horizon)
        sol = solve_sqp(prob)
        assert sol.status == STATUS_CONVERGED

        # independent dense solution: min |A x0 + B u - target|_P^2 + dt |u|_R^2
        _, a_disc, b_disc = rk4_step_sensitivities(np.zeros(6), np.zeros(3), params, horizon.dt)
        p_diag = np.diag(weights.p)
        hess = 2.0 * (b_disc.T @ p_diag @ b_disc + horizon.dt * np.diag(weights.r))
        grad = 2.0 * b_disc.T @ p_diag @ (a_disc @ np.zeros(6) - target)
        u_expect = np.linalg.solve(hess, -grad)
        assert np.max(np.abs(sol.controls[0] - u_expect)) <= 1e-8

    def test_local_minimum_perturbations(self, bundle, rng):
        prob = build_ocp(np.zeros(6), constant_window(np.full(3, 0.3), 30), **bundle)
        sol = solve_sqp(prob)
        assert sol.status == STATUS_CONVERGED
        u_max = prob.constraints.u_max

        def rollout_cost(controls):
            states = np.empty((31, 6))
            states[0] = prob.x0
            for j in range(30):
                states[j + 1] = rk4_step(states[j], controls[j], prob.params, prob.horizon.dt)
            return evaluate_cost(prob, controls, states)

        base = rollout_cost(sol.controls)
        lhs0, rhs0 = contraction_constraint(prob, sol.controls[0])
        tried = 0
        while tried < 20:
            direction = rng.standard_normal((30, 3))
            direction /= np.linalg.norm(direction)
            candidate = np.clip(sol.controls + 1e-3 * direction, -u_max, u_max)
            lhs, _ = contraction_constraint(prob, candidate[0])
            if lhs > rhs0 + 1e-12:
                continue  # infeasible direction, resample
            tried += 1
            assert rollout_cost(candidate) >= base - 1e-8

    def test_rti_mode_single_iteration(self, bundle):
        prob = build_ocp(np.zeros(6), constant_window(np.ones(3), 30), **bundle)
        sol = solve_sqp(prob, options=SolverOptions(rti=True))
        assert sol.iterations == 1
        assert np.max(np.abs(sol.controls)) <= 0.1 + 1e-9

    def test_determinism(self, bundle):
        prob1 = build_ocp(np.zeros(6), constant_window(np.ones(3), 30), **bundle)
        prob2 = build_ocp(np.zeros(6), constant_window(np.ones(3), 30), **bundle)
        a = solve_sqp(prob1)
        b = solve_sqp(prob2)
        assert np.array_equal(a.controls, b.controls)
        assert np.array_equal(a.states, b.states)
        assert a.objective == b.objective


class TestFallback:
    def test_infeasible_measurement_falls_back(self, params, example_gains, weights, horizon):
        """A measured rate far beyond the state box cannot be recovered in one
        step: the QP is infeasible and the saturated SMC output is applied."""
        tight = StateConstraints(
            xi_max=np.array([np.pi / 2, np.pi / 2, np.inf, 0.2, 0.2, 0.2]),
            u_max=np.array([0.1, 0.1, 0.1]),
        )
        x = np.array([0.0, 0, 0, 1.5, 0, 0])  # rate 7.5x the box
        window = constant_window(np.zeros(3), horizon.n_stages)
        prob = build_ocp(x, window, weights, tight, example_gains, params, horizon)
        sol = solve_sqp(prob)
        assert sol.status == STATUS_FALLBACK_SMC
        expected = saturate(smc_control(x, window[0], example_gains, params), tight.u_max)
        assert sol.controls[0] == pytest.approx(expected)
        lhs, rhs = contraction_constraint(prob, sol.controls[0])
        assert lhs <= rhs + 1e-12


class TestController:
    def test_applied_torque_exactly_bounded(self, params, example_gains, weights, constraints, horizon):
        ctl = LnmpcController(params, example_gains, weights, constraints, horizon)
        window = constant_window(np.ones(3), horizon.n_stages)
        applied, _, diag = ctl.step(np.zeros(6), window)
        assert np.all(np.abs(applied) <= 0.1)
        assert diag["contraction_lhs"] <= diag["contraction_rhs"] + 1e-8

    def test_perfect_tracking_zero_torque(self, params, example_gains, weights, constraints, horizon):
        ctl = LnmpcController(params, example_gains, weights, constraints, horizon)
        window = constant_window(np.zeros(3), horizon.n_stages)
        applied, sol, _ = ctl.step(np.zeros(6), window)
        assert np.max(np.abs(applied)) <= 1e-10
        assert sol.objective <= 1e-10

    def test_warm_start_reduces_iterations(self, params, example_gains, weights, constraints, horizon):
        """Median iteration count along a tracking run drops versus solving
        every step cold."""
        scen = builtin_scenario("2")
        warm_ctl = LnmpcController(params, example_gains, weights, constraints, horizon)
        cold_ctl = LnmpcController(params, example_gains, weights, constraints, horizon)
        x_warm = np.zeros(6)
        x_cold = np.zeros(6)
        warm_iters = []
        cold_iters = []
        for k in range(80):
            t = k * horizon.dt
            window = [reference(scen, t + j * horizon.dt) for j in range(horizon.n_stages + 1)]
            u_w, sol_w, _ = warm_ctl.step(x_warm, window)
            warm_iters.append(sol_w.iterations)
            x_warm = rk4_step(x_warm, u_w, params, horizon.dt)
            cold_ctl.reset()
            u_c, sol_c, _ = cold_ctl.step(x_cold, window)
            cold_iters.append(sol_c.iterations)
            x_cold = rk4_step(x_cold, u_c, params, horizon.dt)
        assert np.median(warm_iters) < np.median(cold_iters)
