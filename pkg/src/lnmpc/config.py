"""Run configuration: defaults, the flat dotted-key config file format, and
flag overrides.

Config grammar (one assignment per line):

    # comments and blank lines are ignored
    key = value          # '=' required; inline '#' comments allowed
    smc.lambda = 2.0     # scalars broadcast over matrix diagonals
    mpc.q = 30,30,30,1,1,1
    limits.xi_max = 1.5708,1.5708,inf,1.5708,1.5708,1.5708

Unknown keys, malformed numbers, and sign violations are rejected with the
offending key and line number. Flags always override file values.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .controllers import BscGains, SmcGains
from .dynamics import UavParams
from .ocp import HorizonConfig, MpcWeights, SolverOptions, StateConstraints
from .sim import CONTROLLERS, DisturbanceSpec, Scenario, builtin_scenario

__all__ = ["RunConfig", "ConfigError", "parse_config", "default_run_config"]


class ConfigError(ValueError):
    """Configuration problem, carrying the key name and file line when known."""


@dataclass
class RunConfig:
    """Everything one `run` invocation needs."""

    scenario: Scenario
    controllers: list[str]
    params: UavParams
    smc_gains: SmcGains
    bsc_gains: BscGains
    weights: MpcWeights
    horizon: HorizonConfig
    constraints: StateConstraints
    solver: SolverOptions
    preview: bool = True
    seed: int = 0
    out_dir: str = "out"
    ref_bounds: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.controllers:
            raise ConfigError("at least one controller must be selected")
        for c in self.controllers:
            if c not in CONTROLLERS:
                raise ConfigError(f"unknown controller {c!r}; expected one of {CONTROLLERS}")


#: per-scenario analytic reference bounds (angle, rate, acceleration max norms)
_REF_BOUNDS = {
    "step": (1.0, 0.0, 0.0),
    "hold": (0.0, 0.0, 0.0),
    "periodic": (5.5, 4.0 / 3.0, 7.0 / 3.0),
    "saturating": (5.5, 5.0 / 3.0, 22.0 / 3.0),
    "disturbed": (5.0, 61.0 / 60.0, 2.0),
}

_SCALAR_KEYS = {
    "uav.ix",
    "uav.iy",
    "uav.iz",
    "uav.la",
    "horizon.dt",
    "horizon.n_stages",
    "solver.tol",
    "solver.max_iter",
    "noise.input_magnitude",
    "noise.output_variance",
    "duration",
    "seed",
}
_VECTOR_KEYS = {
    "smc.lambda": 3,
    "smc.c1": 3,
    "smc.c2": 3,
    "bsc.k1": 3,
    "bsc.k2": 3,
    "mpc.p": 6,
    "mpc.q": 6,
    "mpc.r": 3,
    "limits.xi_max": 6,
    "limits.u_max": 3,
}
_BOOL_KEYS = {"solver.rti", "solver.preview"}
_STRING_KEYS = {"scenario", "controllers", "out"}
KNOWN_KEYS = _SCALAR_KEYS | set(_VECTOR_KEYS) | _BOOL_KEYS | _STRING_KEYS


def default_run_config(scenario_id: str = "1") -> RunConfig:
    scenario = builtin_scenario(scenario_id)
    return RunConfig(
        scenario=scenario,
        controllers=list(CONTROLLERS),
        params=UavParams.pelican(),
        smc_gains=SmcGains(lam=np.array([2.0, 2.0, 4.0]), c1=0.2, c2=np.array([0.5, 0.5, 1.0])),
        bsc_gains=BscGains(k1=3.0, k2=3.0),
        weights=MpcWeights.default(),
        horizon=HorizonConfig(),
        constraints=StateConstraints.default(),
        solver=SolverOptions(),
        ref_bounds=_REF_BOUNDS[scenario.ref_id],
    )


def _parse_value(key: str, raw: str, line_no: int):
    def fail(msg: str):
        raise ConfigError(f"line {line_no}: key '{key}': {msg}")

    if key in _STRING_KEYS:
        return raw
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        fail(f"expected a boolean, got {raw!r}")
    parts = [p.strip() for p in raw.split(",")]
    try:
        values = np.array([float(p) for p in parts])
    except ValueError:
        fail(f"malformed number in {raw!r}")
    if key in _SCALAR_KEYS:
        if values.size != 1:
            fail("expected a single number")
        return float(values[0])
    width = _VECTOR_KEYS[key]
    if values.size not in (1, width):
        fail(f"expected a scalar or {width} comma-separated values")
    return values if values.size == width else np.full(width, values[0])


def parse_config_file(path: str) -> dict:
    """Parse the flat key=value file into {key: (value, line_no)}."""
    entries: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {body!r}")
            key, _, raw = body.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in KNOWN_KEYS:
                raise ConfigError(f"line {line_no}: unknown key '{key}'")
            entries[key] = (_parse_value(key, raw, line_no), line_no)
    return entries


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional config file, and flag overrides.

    ``overrides`` uses the same dotted keys as the file; values may already be
    parsed Python objects (flags) or raw strings.
    """
    values: dict = {}
    if path is not None:
        for key, (value, line_no) in parse_config_file(path).items():
            values[key] = (value, line_no)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key '{key}'")
        if isinstance(value, str):
            value = _parse_value(key, value, 0)
        values[key] = (value, 0)

    def get(key: str, default=None):
        return values[key][0] if key in values else default

    def line_of(key: str) -> int:
        return values[key][1] if key in values else 0

    def wrap(key: str, builder):
        try:
            return builder()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {line_of(key)}: key '{key}': {exc}") from exc

    scenario_id = str(get("scenario", "1"))
    try:
        scenario = builtin_scenario(scenario_id, duration=get("duration"))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    noise_mag = get("noise.input_magnitude")
    noise_var = get("noise.output_variance")
    if noise_mag is not None or noise_var is not None:
        dist = scenario.disturbance
        scenario = replace(
            scenario,
            disturbance=DisturbanceSpec(
                kind=dist.kind,
                magnitude=dist.magnitude if noise_mag is None else float(noise_mag),
                variance=dist.variance if noise_var is None else float(noise_var),
            ),
        )

    raw_controllers = get("controllers", ",".join(CONTROLLERS))
    if isinstance(raw_controllers, str):
        controllers = [c.strip() for c in raw_controllers.split(",") if c.strip()]
    else:
        controllers = list(raw_controllers)

    params = wrap(
        "uav.ix",
        lambda: UavParams(
            ix=get("uav.ix", 0.01),
            iy=get("uav.iy", 0.01),
            iz=get("uav.iz", 0.02),
            la=get("uav.la", 0.21),
        ),
    )
    smc_gains = wrap(
        "smc.c1",
        lambda: SmcGains(
            lam=get("smc.lambda", np.array([2.0, 2.0, 4.0])),
            c1=get("smc.c1", 0.2),
            c2=get("smc.c2", np.array([0.5, 0.5, 1.0])),
        ),
    )
    bsc_gains = wrap("bsc.k1", lambda: BscGains(k1=get("bsc.k1", 3.0), k2=get("bsc.k2", 3.0)))
    default_w = MpcWeights.default()
    weights = wrap(
        "mpc.q",
        lambda: MpcWeights(
            p=get("mpc.p", default_w.p), q=get("mpc.q", default_w.q), r=get("mpc.r", default_w.r)
        ),
    )
    horizon = wrap(
        "horizon.dt",
        lambda: HorizonConfig(
            dt=get("horizon.dt", 0.02), n_stages=int(get("horizon.n_stages", 30))
        ),
    )
    default_c = StateConstraints.default()
    constraints = wrap(
        "limits.xi_max",
        lambda: StateConstraints(
            xi_max=get("limits.xi_max", default_c.xi_max),
            u_max=get("limits.u_max", default_c.u_max),
        ),
    )
    solver = wrap(
        "solver.tol",
        lambda: SolverOptions(
            tol=float(get("solver.tol", 1e-6)),
            max_iter=int(get("solver.max_iter", 30)),
            rti=bool(get("solver.rti", False)),
        ),
    )
    return RunConfig(
        scenario=scenario,
        controllers=controllers,
        params=params,
        smc_gains=smc_gains,
        bsc_gains=bsc_gains,
        weights=weights,
        horizon=horizon,
        constraints=constraints,
        solver=solver,
        preview=bool(get("solver.preview", True)),
        seed=int(get("seed", 0)),
        out_dir=str(get("out", "out")),
        ref_bounds=_REF_BOUNDS[scenario.ref_id],
    )
