import functools

import numpy as np
import pytest

from pfdsqo import bench
from pfdsqo.problem import TwoBlockProblem
from pfdsqo.solver import SolverParams, solve


@functools.lru_cache(maxsize=None)
def hs118_run(q: int, c: float, distributed: bool = True):
    """Cached benchmark solve; several test modules look at the same runs."""
    problem, split = bench.build_hs118(q)
    u0 = bench.find_feasible_start(problem, split)
    params = SolverParams(c=c, distributed=distributed)
    return problem, split, params, solve(problem, u0, params=params)


@functools.lru_cache(maxsize=None)
def epd_run(valve_point: bool, instance: int | None = None):
    fam = bench.load_units_file(bench.default_units_path())
    if instance is not None:
        fam = bench.replicate_instance(fam, instance)
    if valve_point:
        fam = bench.with_valve_point(fam)
    problem, split = bench.build_epd(fam)
    params = SolverParams.epd(valve_point=valve_point)
    u0 = bench.find_feasible_start(problem, split)
    return fam, problem, params, solve(problem, u0, bench.epd_lambda0(fam), params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def units5():
    return bench.load_units_file(bench.default_units_path())


def quadratic_problem(h_x, a_x, h_y, a_y, **constraints):
    """``f = 1/2 sum h_x (x - a_x)^2`` and the same for ``theta``."""
    h_x, a_x, h_y, a_y = (np.asarray(v, dtype=float) for v in (h_x, a_x, h_y, a_y))
    return TwoBlockProblem(
        lambda x: 0.5 * float(np.sum(h_x * (x - a_x) ** 2)),
        lambda x: h_x * (x - a_x),
        lambda x: np.diag(h_x),
        lambda y: 0.5 * float(np.sum(h_y * (y - a_y) ** 2)),
        lambda y: h_y * (y - a_y),
        lambda y: np.diag(h_y),
        n1=a_x.size,
        n2=a_y.size,
        **constraints,
    )
