"""Classical kernelized movement primitive.

Fitting factorizes (K + lambda * Sigma) once; predictions are inner products
with the cached solve of the stacked reference means.  Via-point adaptation
extends the reference distribution by one point and refits, which is the
cubic-cost baseline the null-space variant avoids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernel import KernelConfig, cross_matrix, cross_vector, gram_matrix
from .refdist import ReferenceTrajectoryDistribution

# Residual tolerance the cached solve must satisfy at fit time.
PSI_MU_RTOL = 1e-8

# Count of completed fits, used to assert which code paths refactorize.
_fit_count = 0


def fit_count() -> int:
    return _fit_count


class FactorizationError(RuntimeError):
    """Raised when (K + lambda * Sigma) cannot be factorized."""


@dataclass(frozen=True)
class ViaPoint:
    """Desired (input, output) pair with a covariance expressing tolerance."""

    input: np.ndarray  # (I,)
    mean: np.ndarray  # (D,)
    covariance: np.ndarray  # (D, D)

    def __post_init__(self):
        object.__setattr__(self, "input", np.atleast_1d(np.asarray(self.input, dtype=float)))
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        cov = np.asarray(self.covariance, dtype=float)
        d = self.mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be ({d}, {d}), got {cov.shape}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class KmpModel:
    """Fitted kernel model; immutable, safe to share across threads."""

    inputs: np.ndarray  # (N, I)
    mu_stack: np.ndarray  # (DN,)
    sigma_block: np.ndarray  # (DN, DN) block diagonal
    lam: float
    kernel_cfg: KernelConfig
    chol: tuple  # cho_factor of (K + lam * Sigma + jitter)
    psi_mu: np.ndarray  # (DN,) solve of mu_stack
    jitter: float
    reference: ReferenceTrajectoryDistribution

    @property
    def n_points(self) -> int:
        return self.inputs.shape[0]

    @property
    def output_dim(self) -> int:
        return self.kernel_cfg.output_dim


def _block_diag_add(target: np.ndarray, blocks: np.ndarray, scale: float) -> None:
    """Add scale * blockdiag(blocks) to target in place."""
    n, d, _ = blocks.shape
    base = np.arange(n)[:, None, None] * d
    rows = base + np.arange(d)[None, :, None]
    cols = base + np.arange(d)[None, None, :]
    target[rows, cols] += scale * blocks


def fit(ref: ReferenceTrajectoryDistribution, lam: float, kernel_cfg: KernelConfig) -> KmpModel:
    """Fit a KMP to a reference trajectory distribution.

    Raises FactorizationError if (K + lam * Sigma) stays indefinite through the
    jitter schedule (three retries, starting at 1e-10 of the mean diagonal).
    """
    global _fit_count
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if len(ref) < 1:
        raise ValueError("reference distribution is empty")
    d = ref.means.shape[1]
    if d != kernel_cfg.output_dim:
        raise ValueError(
            f"reference output dim {d} != kernel output_dim {kernel_cfg.output_dim}"
        )

    a = gram_matrix(ref.inputs, kernel_cfg)
    _block_diag_add(a, ref.covariances, lam)
    mu = ref.means.reshape(-1)

    jitter = 0.0
    step = 1e-10 * float(np.mean(np.diag(a)))
    chol = None
    for attempt in range(4):
        try:
            chol = cho_factor(a, lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            add = step * 10**attempt
            a[np.diag_indices_from(a)] += add - jitter
            jitter = add
    if chol is None:
        raise FactorizationError(
            f"(K + lambda Sigma) not SPD after jitter {jitter:.3e}; "
            f"diag mean {np.mean(np.diag(a)):.3e}, N={len(ref)}, D={d}"
        )

    psi_mu = cho_solve(chol, mu, check_finite=False)
    residual = np.linalg.norm(a @ psi_mu - mu)
    scale = max(np.linalg.norm(mu), 1.0)
    if residual > PSI_MU_RTOL * scale:
        raise FactorizationError(
            f"cached solve residual {residual:.3e} exceeds {PSI_MU_RTOL:.0e} * {scale:.3e}"
        )

    sigma_block = np.zeros_like(a)
    _block_diag_add(sigma_block, ref.covariances, 1.0)
    _fit_count += 1
    return KmpModel(
        inputs=ref.inputs,
        mu_stack=mu,
        sigma_block=sigma_block,
        lam=lam,
        kernel_cfg=kernel_cfg,
        chol=chol,
        psi_mu=psi_mu,
        jitter=jitter,
        reference=ref,
    )


def predict(model: KmpModel, s_star) -> np.ndarray:
    """Expected output at one query input."""
    k_star = cross_vector(s_star, model.inputs, model.kernel_cfg)
    return k_star @ model.psi_mu


def predict_many(model: KmpModel, queries) -> np.ndarray:
    """Expected outputs for a batch of query inputs, shape (Q, D)."""
    k = cross_matrix(queries, model.inputs, model.kernel_cfg)
    return (k @ model.psi_mu).reshape(-1, model.output_dim)


def adapt_via_point(model: KmpModel, vp: ViaPoint) -> KmpModel:
    """Fresh model fitted over the reference extended with one via-point."""
    ref = model.reference
    if vp.input.shape[0] != ref.inputs.shape[1]:
        raise ValueError(
            f"via-point input dim {vp.input.shape[0]} != model input dim {ref.inputs.shape[1]}"
        )
    extended = ReferenceTrajectoryDistribution(
        np.vstack([ref.inputs, vp.input[None, :]]),
        np.vstack([ref.means, vp.mean[None, :]]),
        np.concatenate([ref.covariances, vp.covariance[None, :, :]], axis=0),
    )
    return fit(extended, model.lam, model.kernel_cfg)
