import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lnmpc import (
    BscGains,
    HorizonConfig,
    MpcWeights,
    SmcGains,
    StateConstraints,
    UavParams,
)
from lnmpc.sim import builtin_scenario, run_closed_loop


@pytest.fixture(scope="session")
def params():
    return UavParams.pelican()


@pytest.fixture(scope="session")
def default_gains():
    return SmcGains(lam=np.array([2.0, 2.0, 4.0]), c1=0.2, c2=np.array([0.5, 0.5, 1.0]))


@pytest.fixture(scope="session")
def example_gains():
    """The worked-example gain set used by the hand-arithmetic checks."""
    return SmcGains(lam=2.0, c1=0.01, c2=0.5)


@pytest.fixture(scope="session")
def bsc_gains():
    return BscGains(k1=3.0, k2=3.0)


@pytest.fixture(scope="session")
def weights():
    return MpcWeights.default()


@pytest.fixture(scope="session")
def constraints():
    return StateConstraints.default()


@pytest.fixture(scope="session")
def horizon():
    return HorizonConfig()


def _run(scenario_id, controller, *, seed=0, duration=None, **kwargs):
    defaults = dict(
        params=UavParams.pelican(),
        horizon=HorizonConfig(),
        weights=MpcWeights.default(),
        constraints=StateConstraints.default(),
        smc_gains=SmcGains(lam=np.array([2.0, 2.0, 4.0]), c1=0.2, c2=np.array([0.5, 0.5, 1.0])),
        bsc_gains=BscGains(k1=3.0, k2=3.0),
        seed=seed,
    )
    defaults.update(kwargs)
    return run_closed_loop(builtin_scenario(scenario_id, duration=duration), controller, **defaults)


@pytest.fixture(scope="session")
def run_scenario():
    """Factory running a builtin scenario with package defaults."""
    return _run


@pytest.fixture(scope="session")
def scenario1_logs(run_scenario):
    return {c: run_scenario("1", c) for c in ("lnmpc", "smc", "bsc")}


@pytest.fixture(scope="session")
def scenario2_logs(run_scenario):
    return {c: run_scenario("2", c) for c in ("lnmpc", "smc", "bsc")}


@pytest.fixture(scope="session")
def scenario3_logs(run_scenario):
    return {c: run_scenario("3", c) for c in ("lnmpc", "smc", "bsc")}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
