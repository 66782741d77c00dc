import numpy as np
import pytest

from sparse_sensing.conic import (AffineMatrixMap, LinearConstraint, SdpProblem,
                                  SolverStatus, solve, verify, write_sdpa)


def min_x_psd_problem():
    """minimize x subject to [[x]] >= 0, x <= 5."""
    lmi = AffineMatrixMap.from_terms(1, 1, {0: np.array([[1.0]])})
    return SdpProblem(num_vars=1, objective=np.array([1.0]), psd_constraints=(lmi,),
                      upper=np.array([5.0]))


def dominance_problem():
    """minimize trace(W) subject to W - diag(1, 2) >= 0, W 2x2 symmetric.

    Variables: [w11, w21 (off-diagonal), w22].
    """
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]])
    e21 = np.array([[0.0, 1.0], [1.0, 0.0]])
    e22 = np.array([[0.0, 0.0], [0.0, 1.0]])
    lmi = AffineMatrixMap.from_terms(2, 3, {0: e11, 1: e21, 2: e22},
                                     constant=-np.diag([1.0, 2.0]))
    return SdpProblem(num_vars=3, objective=np.array([1.0, 0.0, 1.0]),
                      psd_constraints=(lmi,))


def test_scalar_psd_cone():
    sol = solve(min_x_psd_problem())
    assert sol.status is SolverStatus.OPTIMAL
    assert abs(sol.values[0]) <= 1e-7
    assert sol.iterations is not None and sol.iterations > 0


def test_diagonal_dominance():
    sol = solve(dominance_problem())
    assert sol.status is SolverStatus.OPTIMAL
    assert abs(sol.objective - 3.0) <= 1e-6
    np.testing.assert_allclose([sol.values[0], sol.values[2]], [1.0, 2.0], atol=1e-5)
    assert abs(sol.values[1]) <= 1e-5
    # optimal results carry a complementarity-based duality-gap estimate
    assert sol.duality_gap is not None and sol.duality_gap <= 1e-5
    assert verify(dominance_problem(), sol.values).worst_psd >= -1e-8


def test_infeasible_detected():
    # x >= 1 (via PSD map x - 1 >= 0) conflicts with x <= 0
    lmi = AffineMatrixMap.from_terms(1, 1, {0: np.array([[1.0]])},
                                     constant=np.array([[-1.0]]))
    prob = SdpProblem(num_vars=1, objective=np.array([1.0]), psd_constraints=(lmi,),
                      upper=np.array([0.0]))
    assert solve(prob).status is SolverStatus.INFEASIBLE


def test_unbounded_detected():
    lmi = AffineMatrixMap.from_terms(1, 1, {0: np.array([[1.0]])})
    prob = SdpProblem(num_vars=1, objective=np.array([-1.0]), psd_constraints=(lmi,))
    assert solve(prob).status is SolverStatus.UNBOUNDED


def test_iteration_limit_is_numerical_failure():
    sol = solve(dominance_problem(), max_iters=1)
    assert sol.status is SolverStatus.NUMERICAL_FAILURE
    assert sol.values is not None  # best iterate attached


def random_feasible_sdp(rng, n, num_vars):
    """Strictly feasible bounded instance: A(v0) > 0 at a known interior v0."""
    mats = {}
    for j in range(num_vars):
        m = rng.normal(size=(n, n))
        mats[j] = (m + m.T) / 2
    v0 = rng.normal(size=num_vars)
    slack = random_strictly_pd(rng, n)
    const = slack - sum(v0[j] * mats[j] for j in range(num_vars))
    lmi = AffineMatrixMap.from_terms(n, num_vars, mats, constant=const)
    objective = rng.normal(size=num_vars)
    return SdpProblem(num_vars=num_vars, objective=objective, psd_constraints=(lmi,),
                      lower=v0 - 3.0, upper=v0 + 3.0)


def random_strictly_pd(rng, n):
    m = rng.normal(size=(n, n))
    return m @ m.T + 0.5 * np.eye(n)


def test_cross_solver_agreement(rng):
    import cvxpy as cp

    assert "CVXOPT" in cp.installed_solvers()
    for trial in range(5):
        prob = random_feasible_sdp(rng, int(rng.integers(2, 10)),
                                   int(rng.integers(2, 6)))
        a = solve(prob, solver="CLARABEL")
        b = solve(prob, solver="CVXOPT")
        assert a.status is SolverStatus.OPTIMAL
        assert b.status is SolverStatus.OPTIMAL
        scale = max(abs(a.objective), 1.0)
        assert abs(a.objective - b.objective) <= 1e-5 * scale


def test_verify_self_consistency():
    prob = dominance_problem()
    sol = solve(prob)
    rep = verify(prob, sol.values)
    assert rep.ok(1e-6)
    assert abs(rep.objective - sol.objective) <= 1e-12


def test_verify_flags_corruption():
    prob = dominance_problem()
    sol = solve(prob)
    bad = sol.values.copy()
    bad[0] -= 1.0   # w11 below the required diagonal
    rep = verify(prob, bad)
    assert not rep.ok(1e-6)
    assert rep.worst_psd < -0.5


def test_verify_checks_linear_and_bounds():
    lmi = AffineMatrixMap.from_terms(1, 2, {0: np.array([[1.0]])})
    prob = SdpProblem(num_vars=2, objective=np.zeros(2), psd_constraints=(lmi,),
                      linear_constraints=(
                          LinearConstraint(np.array([1.0, 1.0]), 1.0),
                          LinearConstraint(np.array([1.0, -1.0]), 0.0, equality=True)),
                      lower=np.array([0.0, -np.inf]))
    rep = verify(prob, np.array([2.0, 1.0]))
    assert rep.linear_violations[0] == pytest.approx(2.0)   # 3 > 1
    assert rep.linear_violations[1] == pytest.approx(1.0)   # |2 - 1|
    assert verify(prob, np.array([0.25, 0.25])).ok(1e-9)


def test_objective_scaling_leaves_argmin(rng):
    prob = dominance_problem()
    base = solve(prob).values
    import dataclasses
    scaled = dataclasses.replace(prob, objective=prob.objective * 37.0)
    other = solve(scaled).values
    assert np.abs(base - other).max() <= 1e-6


def _parse_sdpa(path):
    lines = [l for l in open(path, encoding="utf-8")
             if l.strip() and not l.startswith("*")]
    num_vars = int(lines[0])
    nblocks = int(lines[1])
    sizes = [int(tok) for tok in lines[2].split()]
    c = np.array([float(tok) for tok in lines[3].split()])
    entries = []
    for line in lines[4:]:
        mat, blk, i, j, val = line.split()
        entries.append((int(mat), int(blk), int(i), int(j), float(val)))
    return num_vars, nblocks, sizes, c, entries


def test_sdpa_round_trip(tmp_path):
    prob = dominance_problem()
    path = tmp_path / "prob.dat-s"
    write_sdpa(prob, str(path))
    num_vars, nblocks, sizes, c, entries = _parse_sdpa(path)
    assert num_vars == 3
    assert sizes[0] == 2
    np.testing.assert_allclose(c, prob.objective)
    # reconstruct block 1 at the solved point and compare with the direct map
    sol = solve(prob)
    mats = {m: np.zeros((2, 2)) for m in range(num_vars + 1)}
    for mat, blk, i, j, val in entries:
        if blk != 1:
            continue
        mats[mat][i - 1, j - 1] = val
        mats[mat][j - 1, i - 1] = val
    recon = sum(sol.values[k] * mats[k + 1] for k in range(num_vars)) - mats[0]
    np.testing.assert_allclose(recon, prob.psd_constraints[0].evaluate(sol.values),
                               atol=1e-12)


def test_sdpa_encodes_bounds_and_linear(tmp_path):
    lmi = AffineMatrixMap.from_terms(1, 1, {0: np.array([[1.0]])})
    prob = SdpProblem(num_vars=1, objective=np.array([1.0]), psd_constraints=(lmi,),
                      linear_constraints=(LinearConstraint(np.array([2.0]), 6.0),),
                      lower=np.array([0.0]), upper=np.array([5.0]))
    path = tmp_path / "p.dat-s"
    write_sdpa(prob, str(path))
    num_vars, nblocks, sizes, c, entries = _parse_sdpa(path)
    assert nblocks == 2
    assert sizes[1] == -3  # inequality + lower + upper as one diagonal block
