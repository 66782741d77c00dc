import dataclasses

import numpy as np
import pytest

from sparse_sensing.precision_opt import reweighted_solve
from sparse_sensing.scenario import build_context, problem_for, reference_config

BLOCKED_CELLS = ((1, 10), (2, 10), (3, 10))   # channels y1..y3 at step 10, 1-based
S_MAX_CASES = (450.0, 750.0, 1200.0)


@pytest.fixture(scope="session")
def ref_config():
    return reference_config()


@pytest.fixture(scope="session")
def blocked_config(ref_config):
    return dataclasses.replace(ref_config, blocked=BLOCKED_CELLS)


@pytest.fixture(scope="session")
def ref_context(ref_config):
    return build_context(ref_config)


@pytest.fixture(scope="session")
def blocked_context(blocked_config):
    return build_context(blocked_config)


@pytest.fixture(scope="session")
def solved_cases(ref_config, ref_context, blocked_context):
    """(s_max, blocked) -> (problem, schedule, solve_seconds) for all six cases."""
    import time

    results = {}
    for blocked, context in ((False, ref_context), (True, blocked_context)):
        for s_max in S_MAX_CASES:
            problem = problem_for(context, s_max)
            t0 = time.perf_counter()
            sched = reweighted_solve(
                problem,
                epsilon=ref_config.reweight_epsilon_scale * s_max,
                max_iters=ref_config.reweight_max_iters,
                active_threshold=ref_config.active_threshold,
                gap_tol=ref_config.gap_tol, feas_tol=ref_config.feas_tol)
            results[(s_max, blocked)] = (problem, sched, time.perf_counter() - t0)
    return results


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
