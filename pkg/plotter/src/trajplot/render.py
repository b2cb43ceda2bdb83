"""Figure families for trajectory-log inspection.

Four kinds, all per-axis 3-panel layouts:

* ``trajectories``   tracked angles per controller against the dashed reference
* ``errors``         angle tracking errors per controller
* ``controls``       torque channels per controller with the +/- limit lines
* ``step-response``  angles with the reference and its 2% settling band

Rendering is read-only over the inputs and deterministic.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .logfile import (
    ANGLE_COLUMNS,
    AXIS_LABELS,
    REF_COLUMNS,
    TORQUE_COLUMNS,
    LogFile,
    common_time_grid,
    read_log,
)

KINDS = ("trajectories", "errors", "controls", "step-response")


def _three_panel(title: str):
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 7.5), sharex=True)
    fig.suptitle(title)
    axes[-1].set_xlabel("time [s]")
    return fig, axes


def build_figure(kind: str, logs: list[LogFile], title: str | None = None):
    """Assemble one figure of the requested kind; caller owns saving/closing."""
    if kind not in KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    if not logs:
        raise ValueError("no input logs")
    t = common_time_grid(logs)
    scenario = logs[0].meta.get("scenario", "")
    title = title or f"{scenario} {kind}".strip()

    if kind == "trajectories":
        fig, axes = _three_panel(title)
        for axis in range(3):
            ax = axes[axis]
            ax.plot(t, logs[0].columns[REF_COLUMNS[axis]], "k--", linewidth=1.2, label="reference")
            for log in logs:
                ax.plot(t, log.columns[ANGLE_COLUMNS[axis]], linewidth=1.0, label=log.label)
            ax.set_ylabel(f"{AXIS_LABELS[axis]} [rad]")
            ax.grid(alpha=0.3)
        axes[0].legend(loc="best", fontsize=8)
    elif kind == "errors":
        fig, axes = _three_panel(title)
        for axis in range(3):
            ax = axes[axis]
            for log in logs:
                err = log.columns[ANGLE_COLUMNS[axis]] - log.columns[REF_COLUMNS[axis]]
                ax.plot(t, err, linewidth=1.0, label=log.label)
            ax.axhline(0.0, color="k", linewidth=0.6)
            ax.set_ylabel(f"{AXIS_LABELS[axis]} error [rad]")
            ax.grid(alpha=0.3)
        axes[0].legend(loc="best", fontsize=8)
    elif kind == "controls":
        fig, axes = _three_panel(title)
        limits = logs[0].torque_limits()
        for axis in range(3):
            ax = axes[axis]
            for log in logs:
                ax.plot(t, log.columns[TORQUE_COLUMNS[axis]], linewidth=0.9, label=log.label)
            ax.axhline(limits[axis], color="r", linestyle=":", linewidth=1.0, label="_limit")
            ax.axhline(-limits[axis], color="r", linestyle=":", linewidth=1.0, label="_limit")
            ax.set_ylabel(f"{TORQUE_COLUMNS[axis]} [N·m]")
            ax.grid(alpha=0.3)
        axes[0].legend(loc="best", fontsize=8)
    else:  # step-response
        fig, axes = _three_panel(title)
        for axis in range(3):
            ax = axes[axis]
            ref = logs[0].columns[REF_COLUMNS[axis]]
            target = ref[-1]
            band = 0.02 * abs(target - logs[0].columns[ANGLE_COLUMNS[axis]][0])
            ax.plot(t, ref, "k--", linewidth=1.2, label="reference")
            if band > 0:
                ax.fill_between(t, target - band, target + band, color="k", alpha=0.08,
                                label="2% band")
            for log in logs:
                ax.plot(t, log.columns[ANGLE_COLUMNS[axis]], linewidth=1.0, label=log.label)
            ax.set_ylabel(f"{AXIS_LABELS[axis]} [rad]")
            ax.grid(alpha=0.3)
        axes[0].legend(loc="best", fontsize=8)

    fig.tight_layout()
    return fig


def render(kind: str, logs: list[LogFile], out_path: str, title: str | None = None) -> str:
    """Draw one figure of the requested kind and write it to out_path."""
    fig = build_figure(kind, logs, title)
    fig.savefig(out_path)
    plt.close(fig)
    return str(out_path)


def render_paths(kind: str, csv_paths: list[str], out_path: str, title: str | None = None) -> str:
    logs = [read_log(p) for p in csv_paths]
    return render(kind, logs, out_path, title)
