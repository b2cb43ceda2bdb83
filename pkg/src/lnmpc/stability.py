"""Stability machinery: norm utilities, certified bounds, the recursive-
feasibility margin, and a runtime Lyapunov monitor for closed-loop logs.

The feasibility check is a worst-case certificate: it bounds the sliding-mode
law's torque demand from norm bounds alone and compares it against the torque
limit. A negative margin means the certificate fails, not necessarily that the
closed loop saturates; the monitor checks the actual trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controllers import SmcGains, TrackingError
from .dynamics import UavParams
from .ocp import StateConstraints

__all__ = [
    "BoundSet",
    "StabilityReport",
    "max_norm",
    "p_norm",
    "derive_bounds",
    "feasibility_margin",
    "sliding_surface_bound",
    "lyapunov_monitor",
]


def max_norm(x: np.ndarray) -> float:
    """Max norm: vectors -> max |x_k|; square matrices -> max absolute row sum."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        return float(np.max(np.abs(a))) if a.size else 0.0
    if a.ndim == 2:
        return float(np.max(np.sum(np.abs(a), axis=1)))
    raise ValueError("max_norm expects a vector or a matrix")


def p_norm(x: np.ndarray, p: float) -> float:
    """p-norm (sum |x_k|^p)^(1/p) for p >= 1, evaluated overflow-safely."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(np.asarray(x, dtype=float))
    m = float(np.max(a)) if a.size else 0.0
    if m == 0.0:
        return 0.0
    return m * float(np.sum((a / m) ** p)) ** (1.0 / p)


@dataclass
class BoundSet:
    """Norm bounds feeding the recursive-feasibility condition.

    State bounds (angles, rates, accelerations), reference bounds, the gain
    and parameter-matrix norms, the initial error norm z_bar = |Z(0)|_2, and
    the torque limit tau_max.
    """

    xi1_bar: float
    xi2_bar: float
    xi3_bar: float
    xi1d_bar: float
    xi2d_bar: float
    xi3d_bar: float
    i_bar: float
    l1_bar: float
    l2_bar: float
    z_bar: float
    lambda_bar: float
    c1_bar: float
    c2_bar: float
    tau_max: float

    def __post_init__(self) -> None:
        for name, v in self.__dict__.items():
            v = float(v)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"bound {name} must be finite and >= 0, got {v}")
            setattr(self, name, v)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def derive_bounds(
    params: UavParams,
    constraints: StateConstraints,
    ref_bounds: tuple[float, float, float],
    gains: SmcGains,
    z0: TrackingError,
) -> BoundSet:
    """Compute the bound set from parameters, box constraints, and gains.

    Matrix norms use absolute values of the diagonal entries so they are
    genuine norms (the inertia differences can be negative). The angle and
    rate bounds take the largest finite box entry; the acceleration bound
    follows from the gyro coupling and the torque limit.
    """
    i_bar = float(np.max(np.abs(params.gyro_gain)))
    l1_bar = float(np.max(params.torque_gain))
    l2_bar = float(np.max(params.inv_torque_gain))
    angle_box = constraints.xi_max[:3]
    rate_box = constraints.xi_max[3:]
    xi1_bar = float(np.max(angle_box[np.isfinite(angle_box)]))
    xi2_bar = float(np.max(rate_box[np.isfinite(rate_box)]))
    tau_max = float(np.max(constraints.u_max))
    xi3_bar = i_bar * xi2_bar**2 + l1_bar * tau_max
    z_bar = p_norm(np.concatenate([z0.angles, z0.rates]), 2.0)
    xi1d_bar, xi2d_bar, xi3d_bar = (float(b) for b in ref_bounds)
    return BoundSet(
        xi1_bar=xi1_bar,
        xi2_bar=xi2_bar,
        xi3_bar=xi3_bar,
        xi1d_bar=xi1d_bar,
        xi2d_bar=xi2d_bar,
        xi3d_bar=xi3d_bar,
        i_bar=i_bar,
        l1_bar=l1_bar,
        l2_bar=l2_bar,
        z_bar=z_bar,
        lambda_bar=float(np.max(gains.lam)),
        c1_bar=float(np.max(gains.c1)),
        c2_bar=float(np.max(gains.c2)),
        tau_max=tau_max,
    )


def feasibility_margin(bounds: BoundSet) -> tuple[float, float]:
    """Worst-case SMC torque demand (lhs) and the margin tau_max - lhs.

    The receding-horizon problem stays recursively feasible whenever the
    margin is nonnegative: the saturated warm-start law then never actually
    clips, so a feasible candidate exists at every sampling instant.
    """
    b = bounds
    lhs = b.l2_bar * (b.xi3d_bar + b.lambda_bar * b.z_bar + b.i_bar * b.xi2_bar**2) + b.l2_bar * (
        b.c1_bar + b.c2_bar * (1.0 + b.lambda_bar) * b.z_bar
    )
    return lhs, b.tau_max - lhs


def sliding_surface_bound(bounds: BoundSet) -> float:
    """Certified sliding-value bound (1 + lambda_bar) * z_bar."""
    return (1.0 + bounds.lambda_bar) * bounds.z_bar


@dataclass
class StabilityReport:
    """Violations found in a trajectory log plus the error contraction summary."""

    n_steps: int
    contraction_violations: list[int] = field(default_factory=list)
    rate_violations: list[int] = field(default_factory=list)
    initial_error_norm: float = 0.0
    final_error_norm: float = 0.0

    @property
    def clean(self) -> bool:
        return not self.contraction_violations and not self.rate_violations

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "contraction_violations": list(self.contraction_violations),
            "rate_violations": list(self.rate_violations),
            "initial_error_norm": self.initial_error_norm,
            "final_error_norm": self.final_error_norm,
            "clean": self.clean,
        }


def lyapunov_monitor(log, tol: float = 1e-6) -> StabilityReport:
    """Scan a trajectory log for Lyapunov-decrease violations.

    Flags (a) steps where the contraction lhs exceeds rhs + tol, (b) steps
    where the Lyapunov rate at the applied control (= the logged lhs) is
    positive beyond tol while the sliding value is nonzero, and reports the
    final versus initial stacked error norm. An empty log yields an empty
    report.
    """
    n = len(log.t)
    report = StabilityReport(n_steps=n)
    if n == 0:
        return report
    lhs = np.asarray(log.contraction_lhs)
    rhs = np.asarray(log.contraction_rhs)
    v_smc = np.asarray(log.v_smc)
    report.contraction_violations = np.where(lhs > rhs + tol)[0].tolist()
    report.rate_violations = np.where((lhs > tol) & (v_smc > 1e-12))[0].tolist()
    err0 = np.concatenate(
        [log.states[0, :3] - log.ref_angles[0], log.states[0, 3:] - log.ref_rates[0]]
    )
    err1 = np.concatenate(
        [log.states[-1, :3] - log.ref_angles[-1], log.states[-1, 3:] - log.ref_rates[-1]]
    )
    report.initial_error_norm = p_norm(err0, 2.0)
    report.final_error_norm = p_norm(err1, 2.0)
    return report
