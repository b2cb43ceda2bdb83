"""Sliding-mode and backstepping attitude controllers.

The sliding-mode controller doubles as the feasibility certificate and warm
start of the predictive controller: its (saturated) output is the auxiliary
law whose Lyapunov decrease the contraction constraint references.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import UavParams, gyro_coupling

__all__ = [
    "ReferenceSample",
    "TrackingError",
    "SmcGains",
    "BscGains",
    "tracking_error",
    "sliding_surface",
    "smc_control",
    "smc_lyapunov",
    "lyapunov_rate",
    "bsc_control",
    "saturate",
]


def _positive_diag(value, name: str) -> np.ndarray:
    d = np.atleast_1d(np.asarray(value, dtype=float))
    if d.size == 1:
        d = np.full(3, d[0])
    if d.shape != (3,):
        raise ValueError(f"{name} must be a scalar or a 3-vector of diagonal entries")
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise ValueError(f"{name} entries must be strictly positive, got {d}")
    d.flags.writeable = False
    return d


@dataclass
class ReferenceSample:
    """Desired angles [rad], rates [rad/s], and accelerations [rad/s²] at one instant."""

    angles: np.ndarray
    rates: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accels: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.angles = np.asarray(self.angles, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        self.accels = np.asarray(self.accels, dtype=float)

    def state(self) -> np.ndarray:
        """Stacked 6-vector (angles, rates)."""
        return np.concatenate([self.angles, self.rates])


@dataclass
class TrackingError:
    """Angle and rate errors (actual minus reference)."""

    angles: np.ndarray
    rates: np.ndarray


@dataclass
class SmcGains:
    """Sliding-mode gains: diagonals of the positive matrices lambda, c1, c2."""

    lam: np.ndarray
    c1: np.ndarray
    c2: np.ndarray

    def __post_init__(self) -> None:
        self.lam = _positive_diag(self.lam, "smc.lambda")
        self.c1 = _positive_diag(self.c1, "smc.c1")
        self.c2 = _positive_diag(self.c2, "smc.c2")


@dataclass
class BscGains:
    """Backstepping gains: diagonals of the positive matrices k1, k2."""

    k1: np.ndarray
    k2: np.ndarray

    def __post_init__(self) -> None:
        self.k1 = _positive_diag(self.k1, "bsc.k1")
        self.k2 = _positive_diag(self.k2, "bsc.k2")


def tracking_error(state: np.ndarray, ref: ReferenceSample) -> TrackingError:
    """Componentwise tracking error of angles and rates."""
    x = np.asarray(state, dtype=float)
    return TrackingError(angles=x[:3] - ref.angles, rates=x[3:] - ref.rates)


def sliding_surface(err: TrackingError, gains: SmcGains) -> np.ndarray:
    """Sliding value s = rate error + lambda * angle error."""
    return err.rates + gains.lam * err.angles


def smc_control(
    state: np.ndarray, ref: ReferenceSample, gains: SmcGains, params: UavParams
) -> np.ndarray:
    """Equivalent-plus-switching sliding-mode torque (unsaturated).

    The equivalent part cancels the model dynamics to keep the sliding value
    stationary; the switching part (componentwise sign with sign(0) = 0, plus
    a linear term) steers toward the surface. No boundary-layer smoothing:
    chattering is a deliberate characteristic of the baseline.
    """
    x = np.asarray(state, dtype=float)
    err = tracking_error(x, ref)
    s = sliding_surface(err, gains)
    inv_g2 = params._inv_torque_gain
    u_eq = inv_g2 * (ref.accels - gains.lam * err.rates - params._gyro_gain * gyro_coupling(x[3:]))
    u_sw = -inv_g2 * (gains.c1 * np.sign(s) + gains.c2 * s)
    return u_eq + u_sw


def smc_lyapunov(s: np.ndarray) -> float:
    """Sliding-mode Lyapunov value 0.5 * s'S."""
    s = np.asarray(s, dtype=float)
    return 0.5 * float(s @ s)


def lyapunov_rate(
    state: np.ndarray,
    ref: ReferenceSample,
    torque: np.ndarray,
    gains: SmcGains,
    params: UavParams,
) -> float:
    """Time derivative of the sliding-mode Lyapunov value at the given torque."""
    x = np.asarray(state, dtype=float)
    u = np.asarray(torque, dtype=float)
    err = tracking_error(x, ref)
    s = sliding_surface(err, gains)
    s_dot = (
        params._gyro_gain * gyro_coupling(x[3:])
        + params._torque_gain * u
        - ref.accels
        + gains.lam * err.rates
    )
    return float(s @ s_dot)


def bsc_control(
    state: np.ndarray, ref: ReferenceSample, gains: BscGains, params: UavParams
) -> np.ndarray:
    """Integrator-backstepping torque (unsaturated).

    Virtual rate alpha = desired rate - k1 * angle error; the law renders
    0.5*(|z1|^2 + |e2|^2) nonincreasing along the unconstrained closed loop.
    """
    x = np.asarray(state, dtype=float)
    err = tracking_error(x, ref)
    alpha = ref.rates - gains.k1 * err.angles
    e2 = x[3:] - alpha
    accel_cmd = (
        ref.accels
        - gains.k1 * err.rates
        - err.angles
        - gains.k2 * e2
        - params._gyro_gain * gyro_coupling(x[3:])
    )
    return params._inv_torque_gain * accel_cmd


def saturate(torque: np.ndarray, u_max: np.ndarray) -> np.ndarray:
    """Componentwise clamp to the symmetric torque limits [-u_max, u_max]."""
    u = np.asarray(torque, dtype=float)
    m = np.asarray(u_max, dtype=float)
    return np.minimum(m, np.maximum(u, -m))
