import numpy as np
import pytest

from amerikan import (
    EvalPoint,
    GridSpec,
    MarketParams,
    OptionKind,
    OptionSpec,
    solve_obstacle,
)


@pytest.fixture(scope="session", autouse=True)
def numba_warmup():
    """Compile the jitted kernels once so per-test timings are meaningful."""
    params = MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0)
    spec = OptionSpec(OptionKind.PUT, 100.0)
    solve_obstacle(params, spec, GridSpec.default(params, spec, 8, 32))


@pytest.fixture(scope="session")
def canonical():
    """The standard put configuration used throughout the suite."""
    return (
        MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0),
        OptionSpec(OptionKind.PUT, 100.0),
        EvalPoint(0.0, 100.0),
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.Philox(key=7))
