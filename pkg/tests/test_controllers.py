import numpy as np
import pytest

from lnmpc import (
    BscGains,
    ReferenceSample,
    SmcGains,
    bsc_control,
    lyapunov_rate,
    rk4_step,
    saturate,
    sliding_surface,
    smc_control,
    smc_lyapunov,
    tracking_error,
)
from lnmpc.dynamics import attitude_derivative


def zero_ref():
    return ReferenceSample(angles=np.zeros(3))


def random_gains(rng):
    return SmcGains(lam=rng.uniform(0.5, 3, 3), c1=rng.uniform(0.01, 0.5, 3), c2=rng.uniform(0.1, 1, 3))


class TestGainValidation:
    def test_scalar_broadcast(self):
        g = SmcGains(lam=2.0, c1=0.01, c2=0.5)
        assert g.lam == pytest.approx([2, 2, 2])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            SmcGains(lam=2.0, c1=-0.01, c2=0.5)
        with pytest.raises(ValueError):
            BscGains(k1=0.0, k2=1.0)


class TestTrackingError:
    def test_perfect_tracking(self):
        ref = ReferenceSample(angles=np.array([0.2, 0.1, -0.4]), rates=np.array([1.0, 0, 0]))
        err = tracking_error(np.concatenate([ref.angles, ref.rates]), ref)
        assert err.angles == pytest.approx(np.zeros(3))
        assert err.rates == pytest.approx(np.zeros(3))

    def test_pure_offset(self):
        err = tracking_error(np.array([1, 1, 1, 0, 0, 0], float), zero_ref())
        assert err.angles == pytest.approx([1, 1, 1])
        assert err.rates == pytest.approx([0, 0, 0])

    def test_hand_values(self):
        ref = ReferenceSample(angles=np.array([0.2, 0, 0]), rates=np.array([0.3, 0, 0]))
        err = tracking_error(np.array([0.5, 0, 0, 0.1, 0, 0]), ref)
        assert err.angles == pytest.approx([0.3, 0, 0])
        assert err.rates == pytest.approx([-0.2, 0, 0])


class TestSlidingSurface:
    def test_zero(self, example_gains):
        err = tracking_error(np.zeros(6), zero_ref())
        assert sliding_surface(err, example_gains) == pytest.approx(np.zeros(3))

    def test_angle_term(self, example_gains):
        err = tracking_error(np.array([0.1, 0, 0, 0, 0, 0]), zero_ref())
        assert sliding_surface(err, example_gains) == pytest.approx([0.2, 0, 0])

    def test_rate_passthrough(self, rng):
        err = tracking_error(np.array([0, 0, 0, 0.3, -0.1, 0]), zero_ref())
        assert sliding_surface(err, random_gains(rng)) == pytest.approx([0.3, -0.1, 0])


class TestSmcControl:
    def test_zero_at_equilibrium(self, params, example_gains):
        # sign(0) = 0 keeps the law zero at the origin
        u = smc_control(np.zeros(6), zero_ref(), example_gains, params)
        assert u == pytest.approx(np.zeros(3))

    def test_feedforward_only(self, params, example_gains):
        ref = ReferenceSample(angles=np.zeros(3), accels=np.array([1.0, 0, 0]))
        u = smc_control(np.zeros(6), ref, example_gains, params)
        assert u == pytest.approx([0.01 / 0.21, 0, 0], abs=1e-12)

    def test_hand_arithmetic(self, params, example_gains):
        x = np.array([0.1, 0, 0, 0, 0, 0])
        u = smc_control(x, zero_ref(), example_gains, params)
        assert u == pytest.approx([-(0.01 / 0.21) * (0.01 + 0.5 * 0.2), 0, 0], abs=1e-12)

    def test_odd_in_error(self, params, rng):
        gains = random_gains(rng)
        for _ in range(20):
            x = np.zeros(6)
            x[:3] = rng.uniform(-0.5, 0.5, 3)
            x[3:] = rng.uniform(-1e-7, 1e-7, 3)  # keep bilinear coupling below 1e-12
            u_pos = smc_control(x, zero_ref(), gains, params)
            u_neg = smc_control(-x, zero_ref(), gains, params)
            assert np.max(np.abs(u_pos + u_neg)) <= 1e-9


class TestLyapunov:
    def test_values(self):
        assert smc_lyapunov(np.zeros(3)) == 0.0
        assert smc_lyapunov(np.array([1.0, 0, 0])) == pytest.approx(0.5)
        assert smc_lyapunov(np.array([1.0, 2.0, 2.0])) == pytest.approx(4.5)

    def test_rate_zero_on_surface(self, params, rng):
        gains = random_gains(rng)
        # state with zero rates and zero angle error: s = 0 factors the rate out
        assert lyapunov_rate(np.zeros(6), zero_ref(), rng.uniform(-1, 1, 3), gains, params) == 0.0

    def test_rate_hand_value(self, params, example_gains):
        x = np.array([0.1, 0, 0, 0, 0, 0])
        assert lyapunov_rate(x, zero_ref(), np.zeros(3), example_gains, params) == pytest.approx(0.0)

    def test_smc_identity(self, params, rng):
        """Closed form: the rate at the SMC law equals -s'(c1 sign(s) + c2 s)."""
        for _ in range(100):
            gains = random_gains(rng)
            x = rng.uniform(-1, 1, 6)
            ref = ReferenceSample(
                angles=rng.uniform(-1, 1, 3),
                rates=rng.uniform(-1, 1, 3),
                accels=rng.uniform(-2, 2, 3),
            )
            u = smc_control(x, ref, gains, params)
            s = sliding_surface(tracking_error(x, ref), gains)
            expected = -float(s @ (gains.c1 * np.sign(s) + gains.c2 * s))
            assert lyapunov_rate(x, ref, u, gains, params) == pytest.approx(expected, abs=1e-12)
            assert lyapunov_rate(x, ref, u, gains, params) <= 0.0


class TestClosedLoopSmc:
    def test_lyapunov_nonincreasing(self, params, example_gains):
        """10 s unsaturated regulation run: V never rises more than the
        per-step discretization slack."""
        x = np.zeros(6)
        x[:3] = np.array([-1.0, -1.0, -1.0])
        dt = 0.02
        v_prev = None
        for _ in range(500):
            u = smc_control(x, zero_ref(), example_gains, params)
            assert np.max(np.abs(u)) <= 0.1  # stays unsaturated throughout
            v = smc_lyapunov(sliding_surface(tracking_error(x, zero_ref()), example_gains))
            if v_prev is not None:
                assert v <= v_prev + 1e-6
            v_prev = v
            x = rk4_step(x, u, params, dt)


class TestBsc:
    def test_zero_at_perfect_tracking(self, params, bsc_gains):
        ref = ReferenceSample(angles=np.array([0.3, -0.2, 1.0]))
        x = np.concatenate([ref.angles, ref.rates])
        assert bsc_control(x, ref, bsc_gains, params) == pytest.approx(np.zeros(3))

    def test_converges_to_step(self, params, bsc_gains):
        ref = ReferenceSample(angles=np.array([0.3, 0.2, 0.1]))
        x = np.zeros(6)
        dt = 0.02
        norms = []
        for k in range(500):
            u = saturate(bsc_control(x, ref, bsc_gains, params), np.full(3, 0.1))
            x = rk4_step(x, u, params, dt)
            norms.append(np.linalg.norm(x[:3] - ref.angles))
        assert norms[-1] < 1e-6
        # monotone decrease after the initial transient, until numerically tiny
        tail = [v for v in norms[100:] if v > 1e-4]
        assert all(b <= a + 1e-9 for a, b in zip(tail, tail[1:]))

    def test_lyapunov_nonincreasing_unconstrained(self, params, bsc_gains):
        """0.5(|z1|^2 + |e2|^2) decreases along the continuous closed loop,
        checked on a fine grid (dt = 1e-4)."""
        ref = ReferenceSample(angles=np.array([0.1, -0.05, 0.08]))
        x = np.zeros(6)
        dt = 1e-4

        def lyap(x):
            err = tracking_error(x, ref)
            e2 = x[3:] - (ref.rates - bsc_gains.k1 * err.angles)
            return 0.5 * float(err.angles @ err.angles + e2 @ e2)

        v_prev = lyap(x)
        for k in range(20000):
            u = bsc_control(x, ref, bsc_gains, params)
            x = x + dt * attitude_derivative(x, u, params)
            if k % 100 == 0:
                v = lyap(x)
                assert v <= v_prev + 1e-10
                v_prev = v


class TestSaturate:
    def test_interior_untouched(self):
        u = np.array([0.05, 0, 0])
        assert saturate(u, np.full(3, 0.1)) == pytest.approx(u)

    def test_clamps(self):
        out = saturate(np.array([0.5, -0.5, 0]), np.full(3, 0.1))
        assert out == pytest.approx([0.1, -0.1, 0])

    def test_boundary_admissible(self):
        u = np.array([0.1, 0.1, 0.1])
        assert saturate(u, np.full(3, 0.1)) == pytest.approx(u)

    def test_idempotent_projection(self, rng):
        lim = np.full(3, 0.1)
        for _ in range(50):
            u = rng.uniform(-0.3, 0.3, 3)
            s1 = saturate(u, lim)
            assert saturate(s1, lim) == pytest.approx(s1)
            feasible = bool(np.all(np.abs(u) <= lim))
            assert (np.linalg.norm(s1 - u) == 0.0) == feasible
