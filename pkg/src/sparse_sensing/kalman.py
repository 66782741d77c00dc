"""Sequential Kalman filtering and horizon-stacked batch augmentation.

The batch form stacks the states of one update horizon,
``xbar = [x_{kp+1}, ..., x_{(k+1)p}]``, relates it to the posterior at step
``kp`` through ``xbar = Abar x_{kp} + Bbar wbar``, and performs a single
update with all horizon measurements.  The masking matrix ``M = [0 ... 0 I]``
extracts the final-step block.  Joseph-form covariance updates are used
throughout so suboptimal gains remain valid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import DiscreteLtvSystem, GaussianState, symmetrize
from .errors import GainContractError, NotPsdError, NumericalError


def kf_predict(state: GaussianState, a: np.ndarray, b: np.ndarray,
               q: np.ndarray) -> GaussianState:
    """One prediction step: mean A mu, covariance A Sigma A^T + B Q B^T."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    return GaussianState(a @ state.mean, a @ state.cov @ a.T + b @ q @ b.T)


def kf_update(state: GaussianState, c: np.ndarray, r_diag: np.ndarray,
              y: np.ndarray) -> GaussianState:
    """Measurement update with diagonal noise covariance ``diag(r_diag)``.

    Channels with infinite variance must be excluded from ``c``/``r_diag``
    before the call; an empty ``c`` returns the prior unchanged.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    r_diag = np.atleast_1d(np.asarray(r_diag, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if c.shape[0] == 0:
        return state
    if (r_diag <= 0).any():
        raise ValueError("used channels need strictly positive noise variance")
    s_inn = c @ state.cov @ c.T + np.diag(r_diag)
    try:
        gain = np.linalg.solve(s_inn, c @ state.cov).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is singular") from exc
    ikc = np.eye(state.dim) - gain @ c
    cov = ikc @ state.cov @ ikc.T + gain @ np.diag(r_diag) @ gain.T
    mean = state.mean + gain @ (y - c @ state.mean)
    return GaussianState(mean, cov)


@dataclass(frozen=True)
class BatchSystem:
    """Horizon-stacked system with prior statistics of the stacked state."""

    a_bar: np.ndarray          # (n p, n)
    b_bar: np.ndarray          # (n p, m p), block lower triangular
    c_bar: np.ndarray          # (m_y p, n p), block diagonal
    q_bar: np.ndarray          # (m p, m p), block diagonal
    mask: np.ndarray           # (n, n p) selector of the last block
    prior_mean: np.ndarray     # (n p,)
    prior_cov: np.ndarray      # (n p, n p)
    prior_cov_sqrt: np.ndarray  # principal PSD square root of prior_cov
    horizon: int
    state_dim: int

    @property
    def num_channels(self) -> int:
        return self.c_bar.shape[0] // self.horizon

    @property
    def total_channels(self) -> int:
        return self.c_bar.shape[0]


def build_batch(system: DiscreteLtvSystem, meas: "list[np.ndarray]",
                posterior: GaussianState, horizon: int | None = None) -> BatchSystem:
    """Stack ``horizon`` steps of the system starting from ``posterior``.

    ``meas[k]`` is the output matrix applied to the state after k+1 steps.
    """
    p = len(meas) if horizon is None else horizon
    if len(meas) < p or system.num_steps < p:
        raise ValueError(f"need {p} measurement matrices and system steps")
    n = system.state_dim
    m = system.noise_dim
    if posterior.dim != n:
        raise ValueError(f"posterior dimension {posterior.dim} != state dimension {n}")
    a = system.transitions
    b = system.inputs
    q = system.noise_covs

    a_bar = np.zeros((n * p, n))
    prod = np.eye(n)
    for k in range(p):
        prod = a[k] @ prod
        a_bar[k * n:(k + 1) * n] = prod

    # block (i, j), i = 1..p (state after i steps), j = 0..i-1 (noise at step j):
    # (A_{i-1} ... A_{j+1}) B_j, computed bottom-up per column
    b_bar = np.zeros((n * p, m * p))
    for j in range(p):
        blk = b[j]
        b_bar[j * n:(j + 1) * n, j * m:(j + 1) * m] = blk
        for i in range(j + 2, p + 1):
            blk = a[i - 1] @ blk
            b_bar[(i - 1) * n:i * n, j * m:(j + 1) * m] = blk

    m_y = meas[0].shape[0]
    c_bar = np.zeros((m_y * p, n * p))
    for k in range(p):
        ck = np.asarray(meas[k], dtype=float)
        if ck.shape != (m_y, n):
            raise ValueError(f"measurement matrix {k} has shape {ck.shape}")
        c_bar[k * m_y:(k + 1) * m_y, k * n:(k + 1) * n] = ck

    q_bar = np.zeros((m * p, m * p))
    for k in range(p):
        q_bar[k * m:(k + 1) * m, k * m:(k + 1) * m] = q[k]

    mask = np.zeros((n, n * p))
    mask[:, -n:] = np.eye(n)

    prior_mean = a_bar @ posterior.mean
    prior_cov = symmetrize(a_bar @ posterior.cov @ a_bar.T + b_bar @ q_bar @ b_bar.T)
    w, v = np.linalg.eigh(prior_cov)
    scale = max(abs(w).max(), 1e-300)
    if w.min() < -1e-8 * scale:
        raise NotPsdError(f"stacked prior covariance eigenvalue {w.min():.3e} "
                          f"below -1e-8*{scale:.3e}")
    sqrt = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return BatchSystem(a_bar=a_bar, b_bar=b_bar, c_bar=c_bar, q_bar=q_bar, mask=mask,
                       prior_mean=prior_mean, prior_cov=prior_cov,
                       prior_cov_sqrt=symmetrize(sqrt), horizon=p, state_dim=n)


def _check_gain_support(gain: np.ndarray, active: np.ndarray) -> None:
    if (~active).any():
        off = np.abs(gain[:, ~active])
        if off.size and off.max() > 1e-8 * (1.0 + np.abs(gain).max()):
            raise GainContractError(
                f"gain column norm {off.max():.3e} on a zero-precision channel")


def batch_posterior_stats(batch: BatchSystem, gain: np.ndarray, s: np.ndarray,
                          y_bar: np.ndarray | None = None) -> GaussianState:
    """Posterior of the final-step state under reduced gain ``G`` and precisions ``s``.

    With N = M - G Cbar the covariance is N Sigmabar N^T + G Rbar G^T where
    Rbar = diag(s)^-1 over active channels; columns of ``G`` on channels with
    zero precision must vanish.  Without measurements ``y_bar`` the returned
    mean is the zero-innovation value M mubar.
    """
    s = np.asarray(s, dtype=float)
    gain = np.asarray(gain, dtype=float)
    n = batch.state_dim
    if gain.shape != (n, batch.total_channels) or s.shape != (batch.total_channels,):
        raise ValueError("gain/precision dimensions do not match the batch")
    if (s < 0).any():
        raise ValueError("precisions must be non-negative")
    active = s > 0
    _check_gain_support(gain, active)
    n_mat = batch.mask - gain @ batch.c_bar
    cov = n_mat @ batch.prior_cov @ n_mat.T
    if active.any():
        ga = gain[:, active]
        cov = cov + (ga / s[active]) @ ga.T
    if y_bar is None:
        mean = batch.mask @ batch.prior_mean
    else:
        mean = batch.mask @ batch.prior_mean + gain @ (y_bar - batch.c_bar @ batch.prior_mean)
    return GaussianState(mean, cov)


def optimal_reduced_gain(batch: BatchSystem, s: np.ndarray) -> np.ndarray:
    """Trace-optimal reduced gain G = M Kbar for noise precisions ``s``.

    Inactive channels (zero precision) get exactly zero columns.
    """
    s = np.asarray(s, dtype=float)
    if (s < 0).any():
        raise ValueError("precisions must be non-negative")
    active = s > 0
    gain = np.zeros((batch.state_dim, batch.total_channels))
    if not active.any():
        return gain
    ca = batch.c_bar[active]
    s_inn = ca @ batch.prior_cov @ ca.T + np.diag(1.0 / s[active])
    try:
        k_bar = np.linalg.solve(s_inn, ca @ batch.prior_cov).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("batch innovation covariance is singular") from exc
    gain[:, active] = batch.mask @ k_bar
    return gain
