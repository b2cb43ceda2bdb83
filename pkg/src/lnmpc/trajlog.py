"""Per-run trajectory logs and their delimited on-disk form.

The CSV layout is the package's external interface: comment lines of the form
``# key=value`` echoing the run configuration (including ``# seed=...``),
one header row, then the columns

    t, phi, theta, psi, dphi, dtheta, dpsi, phi_d, theta_d, psi_d,
    tau_phi, tau_theta, tau_psi, tau_phi_raw, tau_theta_raw, tau_psi_raw,
    v_smc, contraction_lhs, contraction_rhs, sqp_iters, solve_ms

Floats are written with repr precision so re-parsing reproduces the original
binary values (and therefore any derived metrics) exactly. Identical seeds
give bit-identical logs in every column except solve_ms, which records wall
time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrajectoryLog", "CSV_COLUMNS", "SchemaError"]

CSV_COLUMNS = [
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


class SchemaError(ValueError):
    """Raised when a CSV file does not carry the expected columns."""


@dataclass
class TrajectoryLog:
    """Columnar closed-loop record on a uniform time grid."""

    t: np.ndarray
    states: np.ndarray  # (n, 6) true plant state at each control instant
    ref_angles: np.ndarray  # (n, 3)
    torques: np.ndarray  # (n, 3) commanded (post-saturation) torque
    torques_raw: np.ndarray  # (n, 3) pre-saturation controller output
    v_smc: np.ndarray
    contraction_lhs: np.ndarray  # Lyapunov rate at the applied control
    contraction_rhs: np.ndarray  # Lyapunov rate at the saturated SMC law
    sqp_iters: np.ndarray
    solve_ms: np.ndarray
    meta: dict = field(default_factory=dict)
    ref_rates: np.ndarray | None = None  # kept in memory; not part of the CSV schema

    def __len__(self) -> int:
        return len(self.t)

    def validate(self) -> None:
        n = len(self.t)
        if n >= 2:
            dt = np.diff(self.t)
            if np.any(dt <= 0) or np.max(np.abs(dt - dt[0])) > 1e-9:
                raise ValueError("log time grid must be uniform and strictly increasing")

    def column(self, name: str) -> np.ndarray:
        mapping = {
            "t": self.t,
            "phi": self.states[:, 0],
            "theta": self.states[:, 1],
            "psi": self.states[:, 2],
            "dphi": self.states[:, 3],
            "dtheta": self.states[:, 4],
            "dpsi": self.states[:, 5],
            "phi_d": self.ref_angles[:, 0],
            "theta_d": self.ref_angles[:, 1],
            "psi_d": self.ref_angles[:, 2],
            "tau_phi": self.torques[:, 0],
            "tau_theta": self.torques[:, 1],
            "tau_psi": self.torques[:, 2],
            "tau_phi_raw": self.torques_raw[:, 0],
            "tau_theta_raw": self.torques_raw[:, 1],
            "tau_psi_raw": self.torques_raw[:, 2],
            "v_smc": self.v_smc,
            "contraction_lhs": self.contraction_lhs,
            "contraction_rhs": self.contraction_rhs,
            "sqp_iters": self.sqp_iters,
            "solve_ms": self.solve_ms,
        }
        return mapping[name]

    def write_csv(self, path) -> None:
        self.validate()
        cols = [self.column(name) for name in CSV_COLUMNS]
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(len(self.t)):
                fh.write(",".join(repr(float(c[i])) for c in cols) + "\n")

    @classmethod
    def read_csv(cls, path) -> "TrajectoryLog":
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
                    missing = [c for c in CSV_COLUMNS if c not in header]
                    if missing:
                        raise SchemaError(f"missing columns: {', '.join(missing)}")
                    continue
                rows.append([float(v) for v in line.split(",")])
        if header is None or not rows:
            raise SchemaError(f"{path}: empty log, nothing to parse")
        data = np.asarray(rows)
        idx = {name: header.index(name) for name in CSV_COLUMNS}

        def col(name: str) -> np.ndarray:
            return data[:, idx[name]]

        log = cls(
            t=col("t"),
            states=np.column_stack([col(c) for c in ("phi", "theta", "psi", "dphi", "dtheta", "dpsi")]),
            ref_angles=np.column_stack([col(c) for c in ("phi_d", "theta_d", "psi_d")]),
            torques=np.column_stack([col(c) for c in ("tau_phi", "tau_theta", "tau_psi")]),
            torques_raw=np.column_stack(
                [col(c) for c in ("tau_phi_raw", "tau_theta_raw", "tau_psi_raw")]
            ),
            v_smc=col("v_smc"),
            contraction_lhs=col("contraction_lhs"),
            contraction_rhs=col("contraction_rhs"),
            sqp_iters=col("sqp_iters"),
            solve_ms=col("solve_ms"),
            meta=meta,
        )
        log.ref_rates = _difference_rates(log.t, log.ref_angles)
        log.validate()
        return log


def _difference_rates(t: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Central-difference reference rates for logs loaded from disk."""
    n = len(t)
    if n < 2:
        return np.zeros_like(angles)
    rates = np.gradient(angles, t, axis=0)
    return rates
