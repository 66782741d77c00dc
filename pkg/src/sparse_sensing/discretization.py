"""Discretization of the linearized dynamics along a nominal trajectory.

State-transition matrices come from integrating the variational equation
``Phi' = A_c(t) Phi`` with the same RK4 stepper and grid as the nominal, so
sampled values are mutually consistent.  Discrete process noise is extracted
from the continuously propagated covariance via
``Q_k = Sigma(t_{k+1}) - A_k Sigma(t_k) A_k^T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import NominalTrajectory, jacobian, rk4_step, vector_field
from .errors import DiscretizationError, DivergenceError, NotPsdError


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class ContinuousNoiseSpec:
    """Spectral density of the white process noise and its input matrix."""

    density: np.ndarray      # (m_w, m_w), symmetric PSD
    input_matrix: np.ndarray  # (n, m_w)

    def __post_init__(self):
        q = np.asarray(self.density, dtype=float)
        b = np.asarray(self.input_matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("density must be square")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("density must be symmetric")
        if b.ndim != 2 or b.shape[1] != q.shape[0]:
            raise ValueError("input_matrix columns must match density dimension")
        w = np.linalg.eigvalsh(symmetrize(q))
        if w.min() < -1e-10 * max(1.0, abs(w).max()):
            raise NotPsdError("noise spectral density is not PSD")
        object.__setattr__(self, "density", q)
        object.__setattr__(self, "input_matrix", b)


@dataclass(frozen=True)
class GaussianState:
    """Mean and covariance; the covariance is symmetrized on construction."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = symmetrize(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ValueError("non-finite mean or covariance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GaussianSeries:
    """Mean/covariance samples on a time grid."""

    times: np.ndarray
    means: np.ndarray   # (len(times), n)
    covs: np.ndarray    # (len(times), n, n)

    def at(self, index: int) -> GaussianState:
        return GaussianState(self.means[index], self.covs[index])


@dataclass(frozen=True)
class DiscreteLtvSystem:
    """Per-step (A_k, B_k, Q_k) of the linearized, discretized plant."""

    transitions: np.ndarray  # (p, n, n)
    inputs: np.ndarray       # (p, n, m)
    noise_covs: np.ndarray   # (p, m, m)
    dt: float

    @property
    def num_steps(self) -> int:
        return self.transitions.shape[0]

    @property
    def state_dim(self) -> int:
        return self.transitions.shape[1]

    @property
    def noise_dim(self) -> int:
        return self.inputs.shape[2]


def state_transition(nominal: NominalTrajectory, t0: float, t1: float) -> np.ndarray:
    """State-transition matrix Phi(t1, t0) of the variational equation."""
    i0, i1 = nominal.index_at(t0), nominal.index_at(t1)
    if i1 < i0:
        raise ValueError("t1 must not precede t0")
    config = nominal.config
    n = config.n

    def field(y):
        x = y[:n]
        phi = y[n:].reshape(n, n)
        return np.concatenate([vector_field(x, config), (jacobian(x, config) @ phi).ravel()])

    y = np.concatenate([nominal.states[i0], np.eye(n).ravel()])
    for _ in range(i1 - i0):
        y = rk4_step(field, y, nominal.step)
    return y[n:].reshape(n, n).copy()


def propagate_mean_cov(
    state0: GaussianState,
    nominal: NominalTrajectory,
    noise: ContinuousNoiseSpec,
    t_end: float,
    t_start: float = 0.0,
) -> GaussianSeries:
    """Propagate perturbation mean and covariance along the nominal grid.

    Integrates mu' = A_c mu and Sigma' = A_c Sigma + Sigma A_c^T + B_c Q B_c^T
    over [t_start, t_end] jointly with the nominal state so the Jacobian is
    evaluated at the RK4 stage points.  Rank-deficient initial covariances
    are fine.
    """
    config = nominal.config
    n = config.n
    if state0.dim != n:
        raise ValueError(f"state0 has dimension {state0.dim}, expected {n}")
    i0 = nominal.index_at(t_start)
    i_end = nominal.index_at(t_end)
    if i_end < i0:
        raise ValueError("t_end must not precede t_start")
    bqb = noise.input_matrix @ noise.density @ noise.input_matrix.T

    def field(y):
        x = y[:n]
        mu = y[n:2 * n]
        cov = y[2 * n:].reshape(n, n)
        a = jacobian(x, config)
        dcov = a @ cov + cov @ a.T + bqb
        return np.concatenate([vector_field(x, config), a @ mu, dcov.ravel()])

    steps = i_end - i0
    times = nominal.times[i0:i_end + 1]
    means = np.empty((steps + 1, n))
    covs = np.empty((steps + 1, n, n))
    means[0] = state0.mean
    covs[0] = state0.cov
    y = np.concatenate([nominal.states[i0], state0.mean, state0.cov.ravel()])
    for k in range(steps):
        y = rk4_step(field, y, nominal.step)
        if not np.isfinite(y).all():
            raise DivergenceError(f"mean/covariance non-finite at t={times[k + 1]:.6g}")
        means[k + 1] = y[n:2 * n]
        covs[k + 1] = symmetrize(y[2 * n:].reshape(n, n))
    return GaussianSeries(times=times, means=means, covs=covs)


def discretize_process_noise(
    covs: "list[np.ndarray] | np.ndarray",
    transitions: "list[np.ndarray] | np.ndarray",
) -> list[np.ndarray]:
    """Q_k = Sigma(t_{k+1}) - A_k Sigma(t_k) A_k^T, symmetrized and floored to PSD.

    Raises :class:`DiscretizationError` when an eigenvalue is below
    -1e-6 * ||Q_k||, which signals an inconsistent (too coarse) grid.
    """
    covs = [np.asarray(c, dtype=float) for c in covs]
    transitions = [np.asarray(a, dtype=float) for a in transitions]
    if len(covs) != len(transitions) + 1:
        raise ValueError("need one more covariance sample than transitions")
    out = []
    for k, a in enumerate(transitions):
        q = symmetrize(covs[k + 1] - a @ covs[k] @ a.T)
        w, v = np.linalg.eigh(q)
        scale = abs(w).max()
        if scale > 0 and w.min() < -1e-6 * scale:
            raise DiscretizationError(
                f"Q_{k} has eigenvalue {w.min():.3e} below -1e-6*{scale:.3e}; "
                "covariance grid too coarse")
        out.append(symmetrize(v @ np.diag(np.clip(w, 0.0, None)) @ v.T))
    return out


def build_discrete_system(
    nominal: NominalTrajectory,
    noise: ContinuousNoiseSpec,
    sample_times: np.ndarray,
    initial: GaussianState,
) -> DiscreteLtvSystem:
    """Assemble (A_k, B_k = I, Q_k) on the grid ``sample_times``.

    ``sample_times[0]`` is where ``initial`` holds; it need not be the start
    of the nominal grid.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if len(sample_times) < 2:
        raise ValueError("need at least two sample times")
    n = nominal.config.n
    series = propagate_mean_cov(initial, nominal, noise, sample_times[-1],
                                t_start=sample_times[0])
    i0 = nominal.index_at(sample_times[0])
    covs = [series.covs[nominal.index_at(t) - i0] for t in sample_times]
    transitions = [state_transition(nominal, sample_times[k], sample_times[k + 1])
                   for k in range(len(sample_times) - 1)]
    qs = discretize_process_noise(covs, transitions)
    p = len(transitions)
    return DiscreteLtvSystem(
        transitions=np.array(transitions),
        inputs=np.broadcast_to(np.eye(n), (p, n, n)).copy(),
        noise_covs=np.array(qs),
        dt=float(sample_times[1] - sample_times[0]),
    )
