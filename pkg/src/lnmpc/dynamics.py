"""Quadrotor attitude dynamics, exact Jacobians, and a fixed-step RK4 integrator.

State layout everywhere in this package: a 6-vector
``x = (phi, theta, psi, dphi, dtheta, dpsi)`` -- roll/pitch/yaw angles [rad]
followed by the body rates [rad/s]. Control is the torque 3-vector
``u = (tau_phi, tau_theta, tau_psi)`` [N·m]. The angular accelerations are

    accel = gyro_gain * gyro_coupling(rates) + torque_gain * u

with ``gyro_gain`` and ``torque_gain`` the diagonal matrices derived from the
inertias and arm length (see :class:`UavParams`). Angles are never wrapped to
(-pi, pi]; yaw may grow without bound under ramp references and wrapping would
corrupt the tracking error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UavParams",
    "gyro_coupling",
    "attitude_derivative",
    "dynamics_jacobians",
    "rk4_step",
    "rk4_step_sensitivities",
]


@dataclass
class UavParams:
    """Rigid-body attitude parameters of a quadrotor.

    Parameters
    ----------
    ix, iy, iz : moments of inertia about the body axes [kg·m²], > 0.
    la : arm length [m], > 0.

    Derived arrays (diagonals of the corresponding 3x3 matrices) are computed
    once and frozen; treat instances as immutable.
    """

    ix: float
    iy: float
    iz: float
    la: float

    def __post_init__(self) -> None:
        for name in ("ix", "iy", "iz", "la"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be finite and > 0, got {v}")
            setattr(self, name, v)
        gyro = np.array(
            [
                (self.iy - self.iz) / self.ix,
                (self.iz - self.ix) / self.iy,
                (self.ix - self.iy) / self.iz,
            ]
        )
        torque = np.array([self.la / self.ix, self.la / self.iy, 1.0 / self.iz])
        if not (np.all(np.isfinite(gyro)) and np.all(torque > 0)):
            raise ValueError("derived gain matrices must be finite with invertible torque gain")
        gyro.flags.writeable = False
        torque.flags.writeable = False
        inv = 1.0 / torque
        inv.flags.writeable = False
        self._gyro_gain = gyro
        self._torque_gain = torque
        self._inv_torque_gain = inv

    @property
    def gyro_gain(self) -> np.ndarray:
        """Diagonal of the rate-coupling gain matrix (maps gyro_coupling to accel)."""
        return self._gyro_gain

    @property
    def torque_gain(self) -> np.ndarray:
        """Diagonal of the control effectiveness matrix (maps torque to accel)."""
        return self._torque_gain

    @property
    def inv_torque_gain(self) -> np.ndarray:
        """Diagonal of the inverse control effectiveness matrix (maps accel to torque)."""
        return self._inv_torque_gain

    @classmethod
    def pelican(cls) -> "UavParams":
        """AscTec Pelican parameters: ix = iy = 0.01, iz = 0.02 kg·m², la = 0.21 m."""
        return cls(ix=0.01, iy=0.01, iz=0.02, la=0.21)


def gyro_coupling(rates: np.ndarray) -> np.ndarray:
    """Bilinear gyroscopic products (dtheta*dpsi, dphi*dpsi, dphi*dtheta)."""
    r = np.asarray(rates, dtype=float)
    return np.array([r[1] * r[2], r[0] * r[2], r[0] * r[1]])


def attitude_derivative(state: np.ndarray, torque: np.ndarray, params: UavParams) -> np.ndarray:
    """Continuous-time state derivative: angle rates and gyro/torque accelerations."""
    x = np.asarray(state, dtype=float)
    u = np.asarray(torque, dtype=float)
    out = np.empty(6)
    out[:3] = x[3:]
    out[3:] = params._gyro_gain * gyro_coupling(x[3:]) + params._torque_gain * u
    return out


def dynamics_jacobians(
    state: np.ndarray, torque: np.ndarray, params: UavParams
) -> tuple[np.ndarray, np.ndarray]:
    """Exact analytic Jacobians (d f/d state, d f/d torque) of attitude_derivative.

    The torque Jacobian is constant: zeros in the angle rows, the control
    effectiveness diagonal in the rate rows.
    """
    x = np.asarray(state, dtype=float)
    r = x[3:]
    fx = np.zeros((6, 6))
    fx[:3, 3:] = np.eye(3)
    dcoupling = np.array(
        [
            [0.0, r[2], r[1]],
            [r[2], 0.0, r[0]],
            [r[1], r[0], 0.0],
        ]
    )
    fx[3:, 3:] = params._gyro_gain[:, None] * dcoupling
    fu = np.zeros((6, 3))
    fu[3:, :] = np.diag(params._torque_gain)
    return fx, fu


def rk4_step(state: np.ndarray, torque: np.ndarray, params: UavParams, dt: float) -> np.ndarray:
    """Classical 4th-order Runge-Kutta step with the torque held constant (ZOH)."""
    x = np.asarray(state, dtype=float)
    k1 = attitude_derivative(x, torque, params)
    k2 = attitude_derivative(x + 0.5 * dt * k1, torque, params)
    k3 = attitude_derivative(x + 0.5 * dt * k2, torque, params)
    k4 = attitude_derivative(x + dt * k3, torque, params)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_sensitivities(
    state: np.ndarray, torque: np.ndarray, params: UavParams, dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 step plus the exact Jacobians of the discrete map.

    Returns ``(next_state, A, B)`` where A (6x6) and B (6x3) are the chain-rule
    derivatives of the RK4 update through all four stages, not a first-order
    approximation. ``dt = 0`` degenerates to ``(state, I, 0)``.
    """
    x = np.asarray(state, dtype=float)
    eye = np.eye(6)

    k1 = attitude_derivative(x, torque, params)
    j1x, fu = dynamics_jacobians(x, torque, params)  # fu is state-independent

    x2 = x + 0.5 * dt * k1
    k2 = attitude_derivative(x2, torque, params)
    j2x_loc, _ = dynamics_jacobians(x2, torque, params)
    d2x = j2x_loc @ (eye + 0.5 * dt * j1x)
    d2u = j2x_loc @ (0.5 * dt * fu) + fu

    x3 = x + 0.5 * dt * k2
    k3 = attitude_derivative(x3, torque, params)
    j3x_loc, _ = dynamics_jacobians(x3, torque, params)
    d3x = j3x_loc @ (eye + 0.5 * dt * d2x)
    d3u = j3x_loc @ (0.5 * dt * d2u) + fu

    x4 = x + dt * k3
    k4 = attitude_derivative(x4, torque, params)
    j4x_loc, _ = dynamics_jacobians(x4, torque, params)
    d4x = j4x_loc @ (eye + dt * d3x)
    d4u = j4x_loc @ (dt * d3u) + fu

    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    a_disc = eye + (dt / 6.0) * (j1x + 2.0 * d2x + 2.0 * d3x + d4x)
    b_disc = (dt / 6.0) * (fu + 2.0 * d2u + 2.0 * d3u + d4u)
    return x_next, a_disc, b_disc
