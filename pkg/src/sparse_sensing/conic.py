"""Generic linear SDP representation with a pluggable interior-point backend.

A problem holds one scalar variable vector ``v``: a linear objective, affine
symmetric-matrix maps required PSD, affine scalar constraints, and box
bounds.  ``solve`` delegates to an interior-point conic solver through CVXPY;
``verify`` recomputes every residual from the raw problem data with plain
NumPy so it shares no code with the solve path and can catch backend bugs.
"""
from __future__ import annotations

import enum
import io
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SolverStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class AffineMatrixMap:
    """A(v) = constant + sum_i v_i * coeff_i, symmetric ``dim`` x ``dim``.

    ``coefficients`` stores each coeff_i as a column of a (dim*dim, num_vars)
    sparse matrix in row-major vectorization; every coeff_i and the constant
    must be symmetric.
    """

    dim: int
    coefficients: sp.csr_matrix
    constant: np.ndarray

    def __post_init__(self):
        if self.coefficients.shape[0] != self.dim * self.dim:
            raise ValueError("coefficient rows must equal dim*dim")
        if self.constant.shape != (self.dim, self.dim):
            raise ValueError("constant shape must be (dim, dim)")

    @property
    def num_vars(self) -> int:
        return self.coefficients.shape[1]

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        mat = (self.coefficients @ v).reshape(self.dim, self.dim) + self.constant
        return 0.5 * (mat + mat.T)

    @classmethod
    def from_terms(cls, dim: int, num_vars: int, terms: "dict[int, np.ndarray]",
                   constant: np.ndarray | None = None) -> "AffineMatrixMap":
        """Build from per-variable dense symmetric coefficient matrices."""
        cols, rows, vals = [], [], []
        for var, mat in terms.items():
            mat = np.asarray(mat, dtype=float)
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"coefficient matrix for variable {var} is not symmetric")
            r, c = np.nonzero(mat)
            rows.extend(r * dim + c)
            cols.extend([var] * len(r))
            vals.extend(mat[r, c])
        coeff = sp.csr_matrix((vals, (rows, cols)), shape=(dim * dim, num_vars))
        const = np.zeros((dim, dim)) if constant is None else np.asarray(constant, float)
        return cls(dim=dim, coefficients=coeff, constant=const)


@dataclass(frozen=True)
class LinearConstraint:
    """coefficients . v <= rhs, or == rhs when ``equality``."""

    coefficients: np.ndarray
    rhs: float
    equality: bool = False


@dataclass(frozen=True)
class SdpProblem:
    """min objective . v subject to PSD maps, linear constraints, and bounds."""

    num_vars: int
    objective: np.ndarray
    psd_constraints: tuple[AffineMatrixMap, ...]
    linear_constraints: tuple[LinearConstraint, ...] = ()
    lower: np.ndarray | None = None   # -inf where absent
    upper: np.ndarray | None = None   # +inf where absent

    def __post_init__(self):
        if self.objective.shape != (self.num_vars,):
            raise ValueError("objective length must equal num_vars")
        for m in self.psd_constraints:
            if m.num_vars != self.num_vars:
                raise ValueError("PSD map has wrong variable count")
        for lc in self.linear_constraints:
            if lc.coefficients.shape != (self.num_vars,):
                raise ValueError("linear constraint has wrong variable count")
        for b in (self.lower, self.upper):
            if b is not None and b.shape != (self.num_vars,):
                raise ValueError("bound vector has wrong length")


@dataclass(frozen=True)
class ConicSolution:
    values: np.ndarray | None
    status: SolverStatus
    objective: float | None
    duality_gap: float | None
    iterations: int | None
    solver_name: str
    message: str = ""


@dataclass(frozen=True)
class ViolationReport:
    """Constraint residuals recomputed from scratch at a candidate point."""

    psd_min_eigenvalues: tuple[float, ...]
    linear_violations: tuple[float, ...]   # positive amounts; 0 when satisfied
    bound_violation: float
    objective: float

    @property
    def worst_psd(self) -> float:
        return min(self.psd_min_eigenvalues, default=0.0)

    @property
    def worst_linear(self) -> float:
        return max(self.linear_violations, default=0.0)

    def ok(self, feas_tol: float) -> bool:
        return (self.worst_psd >= -feas_tol and self.worst_linear <= feas_tol
                and self.bound_violation <= feas_tol)


_STATUS_MAP = {
    "optimal": SolverStatus.OPTIMAL,
    "infeasible": SolverStatus.INFEASIBLE,
    "unbounded": SolverStatus.UNBOUNDED,
}


def solve(problem: SdpProblem, gap_tol: float = 1e-7, feas_tol: float = 1e-8,
          max_iters: int = 200, solver: str = "CLARABEL") -> ConicSolution:
    """Solve via CVXPY with an interior-point conic backend (default CLARABEL).

    Results are deterministic for identical inputs and options.  Inaccurate
    or failed solves are reported as NUMERICAL_FAILURE with the best iterate
    attached when the backend provides one.
    """
    import cvxpy as cp

    v = cp.Variable(problem.num_vars)
    constraints = []
    for m in problem.psd_constraints:
        expr = cp.reshape(m.coefficients @ v, (m.dim, m.dim), order="C") + m.constant
        constraints.append((expr + expr.T) / 2 >> 0)
    for lc in problem.linear_constraints:
        if lc.equality:
            constraints.append(lc.coefficients @ v == lc.rhs)
        else:
            constraints.append(lc.coefficients @ v <= lc.rhs)
    if problem.lower is not None:
        finite = np.isfinite(problem.lower)
        if finite.any():
            constraints.append(v[finite] >= problem.lower[finite])
    if problem.upper is not None:
        finite = np.isfinite(problem.upper)
        if finite.any():
            constraints.append(v[finite] <= problem.upper[finite])

    prob = cp.Problem(cp.Minimize(problem.objective @ v), constraints)
    kwargs = {}
    if solver.upper() == "CLARABEL":
        kwargs = {"tol_gap_rel": gap_tol, "tol_gap_abs": gap_tol,
                  "tol_feas": feas_tol, "max_iter": max_iters}
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            prob.solve(solver=solver, **kwargs)
    except cp.error.SolverError as exc:
        return ConicSolution(values=None, status=SolverStatus.NUMERICAL_FAILURE,
                             objective=None, duality_gap=None, iterations=None,
                             solver_name=solver, message=str(exc))

    status = _STATUS_MAP.get(prob.status, SolverStatus.NUMERICAL_FAILURE)
    values = None if v.value is None else np.asarray(v.value, dtype=float)
    stats = prob.solver_stats
    iters = getattr(stats, "num_iters", None)
    gap = _complementarity_gap(problem, values, constraints) \
        if status is SolverStatus.OPTIMAL and values is not None else None
    objective = float(problem.objective @ values) if values is not None else None
    message = "" if status is not SolverStatus.NUMERICAL_FAILURE else \
        f"backend status {prob.status!r}"
    return ConicSolution(values=values, status=status, objective=objective,
                         duality_gap=gap, iterations=iters,
                         solver_name=getattr(stats, "solver_name", solver),
                         message=message)


def _complementarity_gap(problem: SdpProblem, v: np.ndarray, constraints) -> float | None:
    """Duality-gap estimate from complementary slackness residuals."""
    gap = 0.0
    try:
        for m, con in zip(problem.psd_constraints, constraints):
            dual = con.dual_value
            if dual is None:
                return None
            gap += abs(float(np.tensordot(m.evaluate(v), dual)))
    except Exception:
        return None
    return gap


def verify(problem: SdpProblem, values: np.ndarray,
           feas_tol: float = 1e-8) -> ViolationReport:
    """Recompute all residuals at ``values`` independently of the solve path."""
    v = np.asarray(values, dtype=float)
    psd_eigs = tuple(float(np.linalg.eigvalsh(m.evaluate(v)).min())
                     for m in problem.psd_constraints)
    lin = []
    for lc in problem.linear_constraints:
        resid = float(lc.coefficients @ v - lc.rhs)
        lin.append(abs(resid) if lc.equality else max(0.0, resid))
    bound = 0.0
    if problem.lower is not None:
        finite = np.isfinite(problem.lower)
        if finite.any():
            bound = max(bound, float((problem.lower[finite] - v[finite]).max(initial=0.0)))
    if problem.upper is not None:
        finite = np.isfinite(problem.upper)
        if finite.any():
            bound = max(bound, float((v[finite] - problem.upper[finite]).max(initial=0.0)))
    return ViolationReport(psd_min_eigenvalues=psd_eigs, linear_violations=tuple(lin),
                           bound_violation=bound,
                           objective=float(problem.objective @ v))


def write_sdpa(problem: SdpProblem, path: str) -> None:
    """Dump the problem in sparse SDPA format (``.dat-s``) for external checks.

    Layout: the m variables are ``v``; the objective vector is written as-is
    (SDPA minimizes c^T x subject to ``sum_i x_i F_i - F_0 >= 0``).  Each PSD
    constraint becomes one block with ``F_i = coeff_i`` and ``F_0 =
    -constant``.  A trailing diagonal block collects, in order: linear
    inequalities (one diagonal entry each, ``rhs - a.v >= 0``), equalities as
    two opposing inequalities, then finite lower and upper bounds.  Only
    upper-triangle entries are written, 1-based indices.
    """
    diag_entries = []  # (coeff dict var->val, rhs) meaning  rhs - a.v >= 0 -> F0 = -rhs
    for lc in problem.linear_constraints:
        nz = {i: -float(c) for i, c in enumerate(lc.coefficients) if c != 0.0}
        diag_entries.append((nz, -float(lc.rhs)))
        if lc.equality:
            nz2 = {i: float(c) for i, c in enumerate(lc.coefficients) if c != 0.0}
            diag_entries.append((nz2, float(lc.rhs)))
    if problem.lower is not None:
        for i in np.flatnonzero(np.isfinite(problem.lower)):
            diag_entries.append(({int(i): 1.0}, float(problem.lower[i])))
    if problem.upper is not None:
        for i in np.flatnonzero(np.isfinite(problem.upper)):
            diag_entries.append(({int(i): -1.0}, -float(problem.upper[i])))

    blocks = [m.dim for m in problem.psd_constraints]
    if diag_entries:
        blocks.append(-len(diag_entries))

    buf = io.StringIO()
    buf.write("* sparse SDPA export: blocks 1..{} are PSD maps; ".format(
        len(problem.psd_constraints)))
    buf.write("a trailing diagonal block holds linear constraints and bounds\n")
    buf.write(f"{problem.num_vars}\n{len(blocks)}\n")
    buf.write(" ".join(str(b) for b in blocks) + "\n")
    buf.write(" ".join(repr(float(c)) for c in problem.objective) + "\n")

    def emit(mat_no: int, blk_no: int, i: int, j: int, value: float):
        if value != 0.0:
            buf.write(f"{mat_no} {blk_no} {i + 1} {j + 1} {value!r}\n")

    for b, m in enumerate(problem.psd_constraints, start=1):
        const = m.constant
        for i in range(m.dim):
            for j in range(i, m.dim):
                emit(0, b, i, j, -float(const[i, j]))
        coo = m.coefficients.tocoo()
        for flat, var, val in zip(coo.row, coo.col, coo.data):
            i, j = divmod(int(flat), m.dim)
            if i <= j:
                emit(int(var) + 1, b, i, j, float(val))
    if diag_entries:
        blk = len(blocks)
        for d, (nz, f0) in enumerate(diag_entries):
            emit(0, blk, d, d, f0)
            for var, val in nz.items():
                emit(var + 1, blk, d, d, val)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
