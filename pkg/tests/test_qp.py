import numpy as np
import pytest

from lnmpc.qp import INFEASIBLE, OPTIMAL, solve_qp
from oracles import enumerate_box_qp, random_spd, verify_box_qp_kkt


def box_rows(lb, ub):
    n = lb.size
    eye = np.eye(n)
    return np.concatenate([eye, -eye]), np.concatenate([ub, -lb])


class TestUnconstrained:
    def test_matches_linear_solve(self, rng):
        hess = random_spd(rng, 8)
        grad = rng.standard_normal(8)
        res = solve_qp(hess, grad)
        assert res.status == OPTIMAL
        assert res.x == pytest.approx(np.linalg.solve(hess, -grad))


class TestBoxQps:
    def test_small_random_vs_enumeration(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 7))
            hess = random_spd(rng, n)
            grad = rng.standard_normal(n) * 2
            lb = rng.uniform(-1.5, -0.1, n)
            ub = rng.uniform(0.1, 1.5, n)
            rows, rhs = box_rows(lb, ub)
            res = solve_qp(hess, grad, rows, rhs)
            assert res.status == OPTIMAL
            expected = enumerate_box_qp(hess, grad, lb, ub)
            assert expected is not None
            assert np.max(np.abs(res.x - expected)) <= 1e-7

    def test_multipliers_nonnegative_and_complementary(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 9))
            hess = random_spd(rng, n)
            grad = rng.standard_normal(n) * 3
            lb = np.full(n, -0.5)
            ub = np.full(n, 0.5)
            rows, rhs = box_rows(lb, ub)
            res = solve_qp(hess, grad, rows, rhs)
            assert np.all(res.lam >= 0)
            slack = rhs - rows @ res.x
            assert np.all(slack >= -1e-9)
            assert np.max(np.abs(res.lam * slack)) <= 1e-7
            # stationarity of the Lagrangian
            assert np.max(np.abs(hess @ res.x + grad + rows.T @ res.lam)) <= 1e-7


class TestGeneralRow:
    def test_single_affine_row_vs_enumeration(self, rng):
        """Box plus one general inequality, checked by enumerating the row's
        activity on top of the box assignments."""
        for _ in range(40):
            n = int(rng.integers(2, 6))
            hess = random_spd(rng, n)
            grad = rng.standard_normal(n)
            lb = np.full(n, -1.0)
            ub = np.full(n, 1.0)
            a = rng.standard_normal(n)
            # anchor the row through a random interior point so the instance
            # is feasible by construction
            b = float(a @ rng.uniform(-0.8, 0.8, n))
            rows, rhs = box_rows(lb, ub)
            rows = np.concatenate([rows, a[None, :]])
            rhs = np.concatenate([rhs, [b]])
            res = solve_qp(hess, grad, rows, rhs)
            assert res.status == OPTIMAL
            # oracle: unconstrained-in-row candidate vs the row active as an
            # equality; with the row tight, eliminate each row variable in
            # turn (at the true optimum at least one of them is strictly
            # inside its box, and eliminating that one reproduces it)
            best = None

            def consider(x):
                nonlocal best
                if np.any(x < lb - 1e-9) or np.any(x > ub + 1e-9) or a @ x > b + 1e-9:
                    return
                if best is None or 0.5 * x @ hess @ x + grad @ x < (
                    0.5 * best @ hess @ best + grad @ best - 1e-12
                ):
                    best = x

            cand = enumerate_box_qp(hess, grad, lb, ub)
            if cand is not None:
                consider(cand)
            for elim in range(n):
                if abs(a[elim]) < 1e-8:
                    continue
                # substitute x_elim = (b - a_rest x_rest)/a_elim into the QP
                rest = [i for i in range(n) if i != elim]
                t = -a[rest] / a[elim]
                m_mat = np.zeros((n, n - 1))
                v = np.zeros(n)
                for col, i in enumerate(rest):
                    m_mat[i, col] = 1.0
                    m_mat[elim, col] = t[col]
                v[elim] = b / a[elim]
                h_red = m_mat.T @ hess @ m_mat
                g_red = m_mat.T @ (grad + hess @ v)
                y = enumerate_box_qp(h_red, g_red, lb[rest], ub[rest])
                if y is not None:
                    consider(m_mat @ y + v)
            assert best is not None
            f_solver = 0.5 * res.x @ hess @ res.x + grad @ res.x
            f_oracle = 0.5 * best @ hess @ best + grad @ best
            assert f_solver <= f_oracle + 1e-7
            assert np.max(np.abs(res.x - best)) <= 1e-6

    def test_zero_row_feasible(self):
        hess = np.eye(2)
        grad = np.array([1.0, -1.0])
        rows = np.zeros((1, 2))
        res = solve_qp(hess, grad, rows, np.array([0.0]))
        assert res.status == OPTIMAL

    def test_zero_row_infeasible(self):
        hess = np.eye(2)
        res = solve_qp(hess, np.zeros(2), np.zeros((1, 2)), np.array([-1.0]))
        assert res.status == INFEASIBLE


class TestInfeasible:
    def test_contradictory_rows(self):
        hess = np.eye(2)
        grad = np.zeros(2)
        rows = np.array([[1.0, 0.0], [-1.0, 0.0]])
        rhs = np.array([-1.0, -1.0])  # x0 <= -1 and x0 >= 1
        res = solve_qp(hess, grad, rows, rhs)
        assert res.status == INFEASIBLE


class TestWarmStart:
    def test_warm_start_matches_cold(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 8))
            hess = random_spd(rng, n)
            grad = rng.standard_normal(n) * 2
            lb = np.full(n, -0.4)
            ub = np.full(n, 0.4)
            rows, rhs = box_rows(lb, ub)
            cold = solve_qp(hess, grad, rows, rhs)
            # correct, wrong, and partial guesses must all land on the optimum
            for guess in (cold.active, [0, 1], list(range(min(n, 4))), cold.active[:1]):
                warm = solve_qp(hess, grad, rows, rhs, warm_active=guess)
                assert warm.status == OPTIMAL
                assert np.max(np.abs(warm.x - cold.x)) <= 1e-8

    def test_kkt_certified_larger_sizes(self, rng):
        for _ in range(25):
            n = int(rng.integers(10, 21))
            hess = random_spd(rng, n)
            grad = rng.standard_normal(n) * 2
            lb = np.full(n, -0.3)
            ub = np.full(n, 0.3)
            rows, rhs = box_rows(lb, ub)
            res = solve_qp(hess, grad, rows, rhs)
            assert res.status == OPTIMAL
            assert verify_box_qp_kkt(hess, grad, lb, ub, res.x)


class TestDeterminism:
    def test_bit_identical(self, rng):
        hess = random_spd(rng, 12)
        grad = rng.standard_normal(12)
        lb = np.full(12, -0.2)
        ub = np.full(12, 0.2)
        rows, rhs = box_rows(lb, ub)
        a = solve_qp(hess, grad, rows, rhs)
        b = solve_qp(hess, grad, rows, rhs)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.lam, b.lam)
        assert a.active == b.active
