"""Reader for the benchmark's delimited trajectory logs.

The file format is the producer's external interface: ``# key=value`` header
comments, one column-name row, then comma-separated floats. Required columns:

    t, phi, theta, psi, dphi, dtheta, dpsi, phi_d, theta_d, psi_d,
    tau_phi, tau_theta, tau_psi, tau_phi_raw, tau_theta_raw, tau_psi_raw,
    v_smc, contraction_lhs, contraction_rhs, sqp_iters, solve_ms
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REQUIRED_COLUMNS = [
    "t",
    "phi",
    "theta",
    "psi",
    "dphi",
    "dtheta",
    "dpsi",
    "phi_d",
    "theta_d",
    "psi_d",
    "tau_phi",
    "tau_theta",
    "tau_psi",
    "tau_phi_raw",
    "tau_theta_raw",
    "tau_psi_raw",
    "v_smc",
    "contraction_lhs",
    "contraction_rhs",
    "sqp_iters",
    "solve_ms",
]

ANGLE_COLUMNS = ["phi", "theta", "psi"]
REF_COLUMNS = ["phi_d", "theta_d", "psi_d"]
TORQUE_COLUMNS = ["tau_phi", "tau_theta", "tau_psi"]
AXIS_LABELS = ["roll", "pitch", "yaw"]


class SchemaMismatch(ValueError):
    """The CSV file lacks required columns (message lists them)."""


@dataclass
class LogFile:
    path: str
    meta: dict
    columns: dict = field(repr=False)

    @property
    def label(self) -> str:
        return self.meta.get("controller", self.path)

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def torque_limits(self) -> np.ndarray:
        raw = self.meta.get("u_max")
        if raw is None:
            return np.full(3, 0.1)
        try:
            return np.array([float(v) for v in raw.split(",")])
        except ValueError:
            return np.full(3, 0.1)


def read_log(path) -> LogFile:
    meta: dict = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                missing = [c for c in REQUIRED_COLUMNS if c not in header]
                if missing:
                    raise SchemaMismatch(f"{path}: missing columns: {', '.join(missing)}")
                continue
            rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise SchemaMismatch(f"{path}: empty log, nothing to plot")
    data = np.asarray(rows)
    columns = {name: data[:, header.index(name)] for name in header}
    return LogFile(path=str(path), meta=meta, columns=columns)


def common_time_grid(logs: list[LogFile]) -> np.ndarray:
    """All inputs must share one time grid; returns it."""
    t0 = logs[0].t
    for log in logs[1:]:
        if log.t.shape != t0.shape or not np.allclose(log.t, t0, atol=1e-9):
            raise ValueError(f"{log.path}: time grid differs from {logs[0].path}")
    return t0
