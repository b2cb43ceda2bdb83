"""Command-line entry point.

Subcommands:

* ``run``          closed-loop comparison; one CSV per controller plus
                   metrics.json and stability.json under --out.
* ``check-bounds`` evaluate the recursive-feasibility certificate.
* ``sweep``        grid over the sliding-mode gains, reporting margin and RMSE.

Exit status of ``run`` reflects the predictive controller's contraction
violations (0 violations <=> exit 0); configuration or I/O problems exit 2.
LNMPC_LOG_LEVEL in {error, info, debug} controls verbosity.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .controllers import SmcGains, tracking_error
from .sim import compute_metrics, reference, run_closed_loop, scenario_ids
from .stability import derive_bounds, feasibility_margin, lyapunov_monitor, sliding_surface_bound

log = logging.getLogger("lnmpc")

__all__ = ["main", "run_command", "check_bounds_command", "sweep_command"]


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("LNMPC_LOG_LEVEL", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--scenario", help=f"scenario id ({', '.join(scenario_ids())})")
    p.add_argument("--controllers", help="comma list from lnmpc,smc,bsc")
    p.add_argument("--seed", type=int, help="rng seed (echoed in the log header)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--rti", action="store_true", help="one SQP iteration per period")
    p.add_argument("--duration", type=float, help="override scenario duration [s]")


def _config_from_args(args) -> RunConfig:
    overrides = {
        "scenario": args.scenario,
        "controllers": args.controllers,
        "seed": args.seed,
        "out": args.out,
        "duration": args.duration,
    }
    if args.rti:
        overrides["solver.rti"] = True
    return parse_config(args.config, overrides)


def run_command(cfg: RunConfig) -> int:
    """Execute the configured runs; returns the process exit status."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_doc: dict = {"scenario": cfg.scenario.name, "seed": cfg.seed, "controllers": {}}
    reports: dict = {}
    violations = 0
    for controller in cfg.controllers:
        log.info("running %s / %s", cfg.scenario.name, controller)
        traj = run_closed_loop(
            cfg.scenario,
            controller,
            params=cfg.params,
            horizon=cfg.horizon,
            weights=cfg.weights,
            constraints=cfg.constraints,
            smc_gains=cfg.smc_gains,
            bsc_gains=cfg.bsc_gains,
            seed=cfg.seed,
            solver=cfg.solver,
            preview=cfg.preview,
        )
        csv_path = out / f"{cfg.scenario.name}_{controller}.csv"
        traj.write_csv(csv_path)
        metrics = compute_metrics(traj, cfg.scenario)
        metrics_doc["controllers"][controller] = metrics.to_dict()
        report = lyapunov_monitor(traj)
        reports[controller] = report.to_dict()
        if controller == "lnmpc":
            violations = len(report.contraction_violations)
            mean_ms = float(np.mean(traj.solve_ms))
            log.info("lnmpc mean solve time %.2f ms, %d contraction violations", mean_ms, violations)

    x0 = cfg.scenario.initial_state
    ref0 = reference(cfg.scenario, 0.0)
    bounds = derive_bounds(
        cfg.params, cfg.constraints, cfg.ref_bounds, cfg.smc_gains, tracking_error(x0, ref0)
    )
    lhs, margin = feasibility_margin(bounds)
    stability_doc = {
        "feasibility": {
            "lhs": lhs,
            "margin": margin,
            "feasible": margin >= 0.0,
            "sliding_surface_bound": sliding_surface_bound(bounds),
            "bounds": bounds.to_dict(),
        },
        "monitors": reports,
    }
    try:
        (out / "metrics.json").write_text(json.dumps(metrics_doc, indent=2))
        (out / "stability.json").write_text(json.dumps(stability_doc, indent=2))
    except OSError as exc:
        log.error("writing outputs failed: %s", exc)
        return 2
    log.info("outputs written to %s", out)
    return min(violations, 100)


def check_bounds_command(cfg: RunConfig, overrides: dict) -> int:
    """Evaluate the torque-demand certificate, with optional explicit bounds."""
    x0 = cfg.scenario.initial_state
    ref0 = reference(cfg.scenario, 0.0)
    bounds = derive_bounds(
        cfg.params, cfg.constraints, cfg.ref_bounds, cfg.smc_gains, tracking_error(x0, ref0)
    )
    for name, value in overrides.items():
        if value is not None:
            setattr(bounds, name, float(value))
    lhs, margin = feasibility_margin(bounds)
    verdict = "feasible" if margin >= 0.0 else "INFEASIBLE"
    print(f"torque demand bound (lhs): {lhs:.6f}")
    print(f"margin (tau_max - lhs):    {margin:.6f}")
    print(f"certificate:               {verdict}")
    print(f"sliding-surface bound:     {sliding_surface_bound(bounds):.6f}")
    return 0


def _sweep_one(task) -> dict:
    lam, c1, c2, cfg_args = task
    cfg = parse_config(None, cfg_args)
    cfg = replace(cfg, smc_gains=SmcGains(lam=lam, c1=c1, c2=c2), controllers=["lnmpc"])
    x0 = cfg.scenario.initial_state
    ref0 = reference(cfg.scenario, 0.0)
    bounds = derive_bounds(
        cfg.params, cfg.constraints, cfg.ref_bounds, cfg.smc_gains, tracking_error(x0, ref0)
    )
    lhs, margin = feasibility_margin(bounds)
    traj = run_closed_loop(
        cfg.scenario,
        "lnmpc",
        params=cfg.params,
        horizon=cfg.horizon,
        weights=cfg.weights,
        constraints=cfg.constraints,
        smc_gains=cfg.smc_gains,
        bsc_gains=cfg.bsc_gains,
        seed=cfg.seed,
        solver=cfg.solver,
        preview=cfg.preview,
    )
    metrics = compute_metrics(traj, cfg.scenario)
    return {
        "lambda": lam,
        "c1": c1,
        "c2": c2,
        "margin": margin,
        "lhs": lhs,
        "rmse": [float(v) for v in metrics.rmse],
    }


def sweep_command(args) -> int:
    """Fan a gain grid out across workers and write the merged table."""
    lam_values = [float(v) for v in args.lam.split(",")]
    c1_values = [float(v) for v in args.c1.split(",")]
    c2_values = [float(v) for v in args.c2.split(",")]
    cfg_args = {
        "scenario": args.scenario or "1",
        "seed": args.seed,
        "duration": args.duration,
    }
    if args.rti:
        cfg_args["solver.rti"] = True
    grid = sorted(itertools.product(lam_values, c1_values, c2_values))
    tasks = [(lam, c1, c2, cfg_args) for lam, c1, c2 in grid]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.json"
    path.write_text(json.dumps(rows, indent=2))
    for row in rows:
        log.info(
            "lambda=%g c1=%g c2=%g margin=%+.4f rmse=%s",
            row["lambda"],
            row["c1"],
            row["c2"],
            row["margin"],
            ",".join(f"{v:.4f}" for v in row["rmse"]),
        )
    print(f"sweep table written to {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="lnmpc",
        description="Quadrotor attitude control benchmark: Lyapunov-constrained NMPC "
        "against sliding-mode and backstepping baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="closed-loop comparison run")
    _add_common_flags(p_run)

    p_chk = sub.add_parser("check-bounds", help="recursive-feasibility certificate")
    _add_common_flags(p_chk)
    for name in ("xi2-bar", "xi3d-bar", "z-bar", "lambda-bar", "c1-bar", "c2-bar", "tau-max"):
        p_chk.add_argument(f"--{name}", type=float, help=f"override bound {name.replace('-', '_')}")

    p_sweep = sub.add_parser("sweep", help="gain grid sweep (margin + RMSE)")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--lam", default="1,2,4", help="comma list of lambda diagonals")
    p_sweep.add_argument("--c1", default="0.05,0.2", help="comma list of c1 diagonals")
    p_sweep.add_argument("--c2", default="0.25,0.5", help="comma list of c2 diagonals")
    p_sweep.add_argument("--workers", type=int, default=1)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_command(_config_from_args(args))
        if args.command == "check-bounds":
            overrides = {
                "xi2_bar": args.xi2_bar,
                "xi3d_bar": args.xi3d_bar,
                "z_bar": args.z_bar,
                "lambda_bar": args.lambda_bar,
                "c1_bar": args.c1_bar,
                "c2_bar": args.c2_bar,
                "tau_max": args.tau_max,
            }
            return check_bounds_command(_config_from_args(args), overrides)
        return sweep_command(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"usage: run `{parser.prog} --help` for options", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
