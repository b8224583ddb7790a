import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from satmpc import SolverConfig, benchmark_model, benchmark_ocp, check_feasible


@pytest.fixture(scope="session")
def spec():
    return benchmark_ocp()


@pytest.fixture(scope="session")
def model():
    return benchmark_model()


@pytest.fixture(scope="session")
def solver_cfg():
    return SolverConfig()


@pytest.fixture(scope="session")
def feasible_states(spec, model, solver_cfg):
    """100 deterministic feasible initial states for sweep-style tests."""
    rng = np.random.default_rng(2024)
    out = []
    while len(out) < 100:
        x0 = rng.uniform(spec.x_lower, spec.x_upper)
        if check_feasible(spec, model, x0, solver_cfg):
            out.append(x0)
    return out
