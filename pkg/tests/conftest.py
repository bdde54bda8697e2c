import numpy as np
import pytest

from stockpile.model import ModelSpec, NumericsParams, build_economy
from stockpile.solver import solve_egm


@pytest.fixture(scope="session")
def small_spec():
    # trimmed benchmark: same economics, coarser grids, fast to solve
    return ModelSpec(numerics=NumericsParams(n_rate_states=15, n_storage_grid=60))


@pytest.fixture(scope="session")
def small_economy(small_spec):
    return build_economy(small_spec)


@pytest.fixture(scope="session")
def small_solution(small_economy):
    return solve_egm(small_economy)


@pytest.fixture(scope="session")
def benchmark_spec():
    # the quantitative calibration: delta=0.02, lam=-0.06, K=100, N=51
    return ModelSpec()


@pytest.fixture(scope="session")
def benchmark_economy(benchmark_spec):
    return build_economy(benchmark_spec)


@pytest.fixture(scope="session")
def benchmark_solution(benchmark_economy):
    return solve_egm(benchmark_economy)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
