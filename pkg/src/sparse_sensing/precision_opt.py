"""Sparse minimum-precision scheduling as a reweighted l1 semidefinite program.

The trace bound ``trace(Sigma_+) <= gamma`` on the horizon-end posterior is
certified by a matrix ``W`` through the block LMI

    [[W, (M - G Cbar) sqrt(Sigmabar), G       ],
     [*,  I,                          0       ],
     [*,  *,                          diag(s) ]]  >= 0,

which is jointly linear in the reduced gain ``G = M Kbar``, the certificate
``W``, and the stacked precision vector ``s``.  Minimizing a weighted l1 norm
of ``s`` under ``trace(W) <= gamma`` and box bounds yields sparse schedules;
iterative reweighting with ``rho <- 1/(s + eps)`` sharpens the sparsity.

Stacked layout: entry ``k * m_y + channel`` is channel ``channel`` at horizon
step ``k`` (0-based), matching the block order of ``Cbar``.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import conic
from .discretization import symmetrize
from .kalman import BatchSystem, batch_posterior_stats, optimal_reduced_gain

_SQRT2 = np.sqrt(2.0)


class ScheduleStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class PrecisionLayout:
    """Index map between SDP variables and (W, G, s).

    Channels whose upper bound is zero are eliminated structurally; only the
    ``m_act`` remaining channels carry variables.  To keep the solver well
    conditioned the stored scalars are rescaled:

    * ``v[0 : w_dim]`` is svec(W / gamma): lower-triangle scaled convention,
      iterating columns j = 0..n-1 and rows i = j..n-1, off-diagonal entries
      multiplied by sqrt(2) so inner products are preserved,
    * ``v[w_dim : w_dim + n*m_act]`` is row-major vec(G / gain_scale) over
      active channels, with ``gain_scale = sqrt(gamma * s_scale)``,
    * the last ``m_act`` entries are ``s / s_scale`` over active channels,
      with ``s_scale = max(s_max)`` (1 when unbounded).

    ``pack``/``unpack`` convert between full-shape unscaled quantities and
    the variable vector.
    """

    n: int
    total_channels: int
    active: np.ndarray          # bool (total_channels,)
    gamma: float
    s_scale: float

    def __post_init__(self):
        a = np.asarray(self.active, dtype=bool).copy()
        a.setflags(write=False)
        object.__setattr__(self, "active", a)

    @property
    def m_act(self) -> int:
        return int(self.active.sum())

    @property
    def w_dim(self) -> int:
        return self.n * (self.n + 1) // 2

    @property
    def g_dim(self) -> int:
        return self.n * self.m_act

    @property
    def num_vars(self) -> int:
        return self.w_dim + self.g_dim + self.m_act

    @property
    def gain_scale(self) -> float:
        return float(np.sqrt(self.gamma * self.s_scale))

    def svec_indices(self) -> list[tuple[int, int]]:
        return [(i, j) for j in range(self.n) for i in range(j, self.n)]

    def pack(self, w: np.ndarray, gain: np.ndarray, s: np.ndarray) -> np.ndarray:
        v = np.empty(self.num_vars)
        for k, (i, j) in enumerate(self.svec_indices()):
            v[k] = w[i, j] / self.gamma * (_SQRT2 if i != j else 1.0)
        v[self.w_dim:self.w_dim + self.g_dim] = \
            (gain[:, self.active] / self.gain_scale).ravel()
        v[self.w_dim + self.g_dim:] = s[self.active] / self.s_scale
        return v

    def unpack(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.zeros((self.n, self.n))
        for k, (i, j) in enumerate(self.svec_indices()):
            val = v[k] * self.gamma * (1.0 / _SQRT2 if i != j else 1.0)
            w[i, j] = val
            w[j, i] = val
        gain = np.zeros((self.n, self.total_channels))
        gain[:, self.active] = \
            v[self.w_dim:self.w_dim + self.g_dim].reshape(self.n, self.m_act) \
            * self.gain_scale
        s = np.zeros(self.total_channels)
        s[self.active] = v[self.w_dim + self.g_dim:] * self.s_scale
        return w, gain, s


@dataclass(frozen=True)
class PrecisionProblem:
    """One horizon's scheduling problem: batch system, trace bound, bounds, weights.

    ``s_max`` is the availability-adjusted (horizon, channels) upper-bound
    grid; masked cells are zero.  ``weights`` is the stacked l1 weight vector
    (all ones by default).
    """

    batch: BatchSystem
    gamma: float
    s_max: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        s_max = np.asarray(self.s_max, dtype=float)
        shape = (self.batch.horizon, self.batch.num_channels)
        if s_max.shape != shape:
            raise ValueError(f"s_max shape {s_max.shape}, expected {shape}")
        if (s_max < 0).any():
            raise ValueError("s_max must be non-negative")
        object.__setattr__(self, "s_max", s_max)
        w = np.ones(s_max.size) if self.weights is None \
            else np.asarray(self.weights, dtype=float)
        if w.shape != (s_max.size,):
            raise ValueError(f"weights shape {w.shape}, expected ({s_max.size},)")
        if (w <= 0).any():
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)

    @property
    def s_max_flat(self) -> np.ndarray:
        return self.s_max.ravel()


@dataclass(frozen=True)
class PrecisionSchedule:
    """Solved schedule: stacked precisions, certificate pair (W, G), diagnostics."""

    precisions: np.ndarray     # (p*m_y,)
    gain: np.ndarray           # (n, p*m_y)
    certificate: np.ndarray    # (n, n)
    status: ScheduleStatus
    objective: float
    reweight_iterations: int
    active_count: int
    horizon: int
    num_channels: int
    gamma: float
    history: tuple[tuple[float, int], ...] = ()
    solver_iterations: int | None = None
    duality_gap: float | None = None
    message: str = ""

    def grid(self) -> np.ndarray:
        return self.precisions.reshape(self.horizon, self.num_channels)


def assemble_lmi(batch: BatchSystem, gamma: float,
                 s_max: np.ndarray | None = None,
                 weights: np.ndarray | None = None,
                 ) -> tuple[conic.SdpProblem, PrecisionLayout]:
    """Assemble the certificate LMI plus trace/box constraints as a generic SDP.

    ``s_max`` is the stacked upper-bound vector (None leaves precisions
    unbounded above); channels with a zero bound are eliminated.
    """
    n = batch.state_dim
    n_stack = batch.a_bar.shape[0]
    m_total = batch.total_channels
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if s_max is not None:
        s_max = np.asarray(s_max, dtype=float)
        if s_max.shape != (m_total,):
            raise ValueError(f"s_max has shape {s_max.shape}, expected ({m_total},)")
        active = s_max > 0
        s_scale = float(s_max.max()) if s_max.max() > 0 else 1.0
    else:
        active = np.ones(m_total, dtype=bool)
        s_scale = 1.0
    layout = PrecisionLayout(n=n, total_channels=m_total, active=active,
                             gamma=gamma, s_scale=s_scale)
    m_act = layout.m_act
    d = n + n_stack + m_act

    sqrt_prior = batch.prior_cov_sqrt
    ms_scaled = (batch.mask @ sqrt_prior) / np.sqrt(gamma)
    cs_scaled = np.sqrt(s_scale) * (batch.c_bar[active] @ sqrt_prior)  # (m_act, n_stack)

    rows, cols, vals = [], [], []

    def put_sym(r, c, var, val):
        rows.append(r * d + c)
        cols.append(var)
        vals.append(val)
        if r != c:
            rows.append(c * d + r)
            cols.append(var)
            vals.append(val)

    for k, (i, j) in enumerate(layout.svec_indices()):
        put_sym(i, j, k, 1.0 if i == j else 1.0 / _SQRT2)

    q_idx = np.arange(n_stack)
    for r in range(n):
        g_vars = layout.w_dim + r * m_act + np.arange(m_act)
        # (r, n + n_stack + c) <- 1
        for c in range(m_act):
            put_sym(r, n + n_stack + c, g_vars[c], 1.0)
        # (r, n + q) <- -cs_scaled[c, q]
        rr = np.repeat(g_vars, n_stack)
        cc = np.tile(n + q_idx, m_act)
        vv = -cs_scaled.ravel()
        nz = vv != 0.0
        flat_up = r * d + cc[nz]
        flat_lo = cc[nz] * d + r
        rows.extend(flat_up.tolist())
        cols.extend(rr[nz].tolist())
        vals.extend(vv[nz].tolist())
        rows.extend(flat_lo.tolist())
        cols.extend(rr[nz].tolist())
        vals.extend(vv[nz].tolist())

    for c in range(m_act):
        put_sym(n + n_stack + c, n + n_stack + c, layout.w_dim + layout.g_dim + c, 1.0)

    coeff = sp.csr_matrix(
        sp.coo_matrix((vals, (rows, cols)), shape=(d * d, layout.num_vars)))
    const = np.zeros((d, d))
    const[:n, n:n + n_stack] = ms_scaled
    const[n:n + n_stack, :n] = ms_scaled.T
    const[n:n + n_stack, n:n + n_stack] = np.eye(n_stack)
    lmi = conic.AffineMatrixMap(dim=d, coefficients=coeff, constant=const)

    trace_coeff = np.zeros(layout.num_vars)
    for k, (i, j) in enumerate(layout.svec_indices()):
        if i == j:
            trace_coeff[k] = 1.0
    trace_con = conic.LinearConstraint(coefficients=trace_coeff, rhs=1.0)

    lower = np.full(layout.num_vars, -np.inf)
    upper = np.full(layout.num_vars, np.inf)
    lower[layout.w_dim + layout.g_dim:] = 0.0
    if s_max is not None:
        upper[layout.w_dim + layout.g_dim:] = s_max[active] / s_scale

    w = np.ones(m_total) if weights is None else np.asarray(weights, dtype=float)
    objective = np.zeros(layout.num_vars)
    objective[layout.w_dim + layout.g_dim:] = w[active] * s_scale

    problem = conic.SdpProblem(num_vars=layout.num_vars, objective=objective,
                               psd_constraints=(lmi,), linear_constraints=(trace_con,),
                               lower=lower, upper=upper)
    return problem, layout


_ZERO_FLOOR = 1e-9   # relative to s_scale; below this a channel is snapped off


def _failed(problem: PrecisionProblem, status: ScheduleStatus, iterations: int,
            message: str, solver_iterations=None) -> PrecisionSchedule:
    m_total = problem.batch.total_channels
    n = problem.batch.state_dim
    return PrecisionSchedule(
        precisions=np.zeros(m_total), gain=np.zeros((n, m_total)),
        certificate=np.zeros((n, n)), status=status, objective=float("nan"),
        reweight_iterations=iterations, active_count=0,
        horizon=problem.batch.horizon, num_channels=problem.batch.num_channels,
        gamma=problem.gamma, solver_iterations=solver_iterations, message=message)


def solve_precisions(problem: PrecisionProblem, *, weights: np.ndarray | None = None,
                     gap_tol: float = 1e-9, feas_tol: float = 1e-9,
                     max_solver_iters: int = 200, active_threshold: float = 1e-6,
                     _prebuilt=None) -> PrecisionSchedule:
    """Single weighted-l1 solve; returns the schedule with a tight certificate.

    After the conic solve the precision vector is clipped to its box, channels
    below a tiny floor are snapped off together with their gain columns, and
    the certificate ``W`` is recomputed as the exact posterior covariance of
    the returned ``(G, s)`` pair, which keeps the LMI residual at roundoff.
    """
    w_vec = problem.weights if weights is None else np.asarray(weights, dtype=float)
    if _prebuilt is None:
        sdp, layout = assemble_lmi(problem.batch, problem.gamma,
                                   problem.s_max_flat, w_vec)
    else:
        sdp, layout = _prebuilt
        objective = np.zeros(layout.num_vars)
        objective[layout.w_dim + layout.g_dim:] = w_vec[layout.active] * layout.s_scale
        sdp = dataclasses.replace(sdp, objective=objective)

    sol = conic.solve(sdp, gap_tol=gap_tol, feas_tol=feas_tol,
                      max_iters=max_solver_iters)
    if sol.status is conic.SolverStatus.INFEASIBLE:
        return _failed(problem, ScheduleStatus.INFEASIBLE, 1,
                       "trace bound unreachable within precision bounds",
                       sol.iterations)
    if sol.status is not conic.SolverStatus.OPTIMAL or sol.values is None:
        return _failed(problem, ScheduleStatus.NUMERICAL_FAILURE, 1,
                       f"conic backend: {sol.status.value} {sol.message}".strip(),
                       sol.iterations)

    w_raw, gain, s = layout.unpack(sol.values)
    s = np.clip(s, 0.0, problem.s_max_flat)
    snap = s < _ZERO_FLOOR * layout.s_scale
    s[snap] = 0.0
    gain[:, snap] = 0.0

    posterior = batch_posterior_stats(problem.batch, gain, s)
    certificate = symmetrize(posterior.cov)
    tol = problem.gamma * (1.0 + 1e-6)
    if np.trace(certificate) > tol:
        if np.trace(w_raw) <= tol:
            certificate = symmetrize(w_raw)
        else:
            return _failed(problem, ScheduleStatus.NUMERICAL_FAILURE, 1,
                           f"certificate trace {np.trace(certificate):.6e} exceeds "
                           f"gamma*(1+1e-6) = {tol:.6e}", sol.iterations)

    active_count = int((s > active_threshold * layout.s_scale).sum())
    objective = float(problem.weights @ s)
    return PrecisionSchedule(
        precisions=s, gain=gain, certificate=certificate,
        status=ScheduleStatus.OPTIMAL, objective=objective,
        reweight_iterations=1, active_count=active_count,
        horizon=problem.batch.horizon, num_channels=problem.batch.num_channels,
        gamma=problem.gamma, history=((objective, active_count),),
        solver_iterations=sol.iterations, duality_gap=sol.duality_gap)


def reweighted_solve(problem: PrecisionProblem, epsilon: float | None = None,
                     max_iters: int = 5, *, active_threshold: float = 1e-6,
                     gap_tol: float = 1e-9, feas_tol: float = 1e-9,
                     max_solver_iters: int = 200) -> PrecisionSchedule:
    """Iteratively reweighted l1 solve: rho_{j+1} = 1/(s_j + eps), elementwise.

    Stops when the active set stops changing or after ``max_iters`` solves;
    the returned schedule never has more active channels than the sparsest
    iterate seen.  Weights are normalized to unit mean before each solve
    (argmin-invariant).  Infeasibility at any iteration is final: weights
    cannot change the feasible set.
    """
    s_ref = float(problem.s_max_flat.max()) if problem.s_max_flat.max() > 0 else 1.0
    if epsilon is None:
        epsilon = 1e-3 * s_ref
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    sdp, layout = assemble_lmi(problem.batch, problem.gamma, problem.s_max_flat,
                               problem.weights)
    rho = problem.weights.copy()
    best: PrecisionSchedule | None = None
    prev_active: np.ndarray | None = None
    history: list[tuple[float, int]] = []
    for iteration in range(1, max_iters + 1):
        sched = solve_precisions(problem, weights=rho / rho.mean(),
                                 gap_tol=gap_tol, feas_tol=feas_tol,
                                 max_solver_iters=max_solver_iters,
                                 active_threshold=active_threshold,
                                 _prebuilt=(sdp, layout))
        if sched.status is ScheduleStatus.INFEASIBLE:
            return dataclasses.replace(sched, reweight_iterations=iteration,
                                       history=tuple(history))
        if sched.status is ScheduleStatus.NUMERICAL_FAILURE:
            if best is not None:
                return dataclasses.replace(
                    best, reweight_iterations=iteration, history=tuple(history),
                    message=f"reweighting stopped early: {sched.message}")
            return dataclasses.replace(sched, reweight_iterations=iteration,
                                       history=tuple(history))
        history.append((sched.objective, sched.active_count))
        active = sched.precisions > active_threshold * s_ref
        if best is None or sched.active_count <= best.active_count:
            best = sched
        if prev_active is not None and np.array_equal(active, prev_active):
            return dataclasses.replace(best, reweight_iterations=iteration,
                                       history=tuple(history))
        prev_active = active
        rho = 1.0 / (sched.precisions + epsilon)
    return dataclasses.replace(best, reweight_iterations=max_iters,
                               history=tuple(history))


@dataclass(frozen=True)
class SparsityReport:
    """Thresholded precision grid plus the active-set summary."""

    grid: np.ndarray               # (p, m_y), entries below threshold zeroed
    threshold: float               # relative threshold actually used
    verified_trace: float          # optimal-gain trace using the thresholded grid
    gamma: float
    active_cells: tuple[tuple[int, int], ...]   # 0-based (step, channel)
    step_counts: tuple[int, ...]

    @property
    def active_count(self) -> int:
        return len(self.active_cells)

    def active_channels_at(self, step: int) -> tuple[int, ...]:
        return tuple(ch for st, ch in self.active_cells if st == step)


def sparsity_report(problem: PrecisionProblem, schedule: PrecisionSchedule,
                    threshold: float = 1e-6) -> SparsityReport:
    """Threshold the schedule and re-verify the trace bound with optimal gains.

    Entries below ``threshold * max(s_max)`` report as zero.  If removing them
    pushes the reachable trace past ``gamma * (1 + 1e-3)`` the threshold is
    lowered tenfold and re-verified, down to no thresholding at all.
    """
    if schedule.status is not ScheduleStatus.OPTIMAL:
        raise ValueError("sparsity report requires an optimal schedule")
    s_ref = float(problem.s_max_flat.max()) if problem.s_max_flat.max() > 0 else 1.0
    tol = problem.gamma * (1.0 + 1e-3)
    t = threshold
    while True:
        flat = schedule.precisions.copy()
        flat[flat < t * s_ref] = 0.0
        gain = optimal_reduced_gain(problem.batch, flat)
        trace = float(np.trace(batch_posterior_stats(problem.batch, gain, flat).cov))
        if trace <= tol or t == 0.0:
            break
        t = t / 10.0 if t > 1e-16 else 0.0
    grid = flat.reshape(schedule.horizon, schedule.num_channels)
    cells = tuple((int(k), int(ch)) for k, ch in zip(*np.nonzero(grid)))
    counts = tuple(int(c) for c in (grid > 0).sum(axis=1))
    return SparsityReport(grid=grid, threshold=t, verified_trace=trace,
                          gamma=problem.gamma, active_cells=cells, step_counts=counts)
