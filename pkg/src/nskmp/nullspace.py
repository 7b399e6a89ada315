"""Null-space modulation of a fitted kernel movement primitive.

A secondary target (s_hat, xi_hat) deforms the predicted trajectory through a
soft null-space term that reuses the factorization cached at fit time, so a
modulated prediction costs two triangular solves instead of a refit.  The
deformation scale and direction are governed by the reference covariances:
directions with more demonstrated variation deform more.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernel import cross_matrix, expand_blocks, scalar_gram
from .kmp import KmpModel, ViaPoint, predict

log = logging.getLogger(__name__)

# Ridge added to the secondary-target gram when it is singular (duplicate inputs).
SECONDARY_RIDGE = 1e-8

# Default covariance scale for the via-point equivalent of a modulation.
EQUIVALENT_VIA_COV = 1e-6


@dataclass(frozen=True)
class NullSpaceReference:
    """Secondary target: desired output xi_hat applied at input s_hat."""

    input: np.ndarray  # (I,)
    target: np.ndarray  # (D,)

    def __post_init__(self):
        object.__setattr__(self, "input", np.atleast_1d(np.asarray(self.input, dtype=float)))
        object.__setattr__(self, "target", np.atleast_1d(np.asarray(self.target, dtype=float)))


def _check_refs(model: KmpModel, refs) -> tuple[np.ndarray, np.ndarray]:
    i_dim = model.inputs.shape[1]
    d = model.output_dim
    s_hat = np.stack([r.input for r in refs])
    xi = np.stack([r.target for r in refs])
    if s_hat.shape[1] != i_dim:
        raise ValueError(f"reference input dim {s_hat.shape[1]} != model input dim {i_dim}")
    if xi.shape[1] != d:
        raise ValueError(f"reference target dim {xi.shape[1]} != output dim {d}")
    return s_hat, xi


def _solve_secondary(model: KmpModel, s_hat: np.ndarray, xi_stack: np.ndarray) -> np.ndarray:
    """Solve the P-target coupling system K_underline v = xi_stack."""
    p = s_hat.shape[0]
    if p == 1 and model.kernel_cfg.feature_map is None:
        # Squared-exponential kernel: k(s, s) = 1, so the system is the identity.
        return xi_stack
    ku = expand_blocks(scalar_gram(s_hat, s_hat, model.kernel_cfg), model.output_dim)
    try:
        return cho_solve(cho_factor(ku, lower=True, check_finite=False), xi_stack)
    except np.linalg.LinAlgError:
        log.warning(
            "secondary-target gram singular (duplicate inputs?); adding %g ridge",
            SECONDARY_RIDGE,
        )
        ku[np.diag_indices_from(ku)] += SECONDARY_RIDGE
        return cho_solve(cho_factor(ku, lower=True, check_finite=False), xi_stack)


def ns_predict(model: KmpModel, s_star, refs) -> np.ndarray:
    """Expected output at s_star, modulated by the secondary targets in refs.

    With no refs (or zero targets) this reduces to the plain prediction.  No
    refactorization happens: the cached factor is reused via triangular solves.
    """
    refs = list(refs)
    if not refs:
        return predict(model, s_star)
    s_hat, xi = _check_refs(model, refs)
    d = model.output_dim

    k_star = expand_blocks(scalar_gram(s_star, model.inputs, model.kernel_cfg), d)
    base = k_star @ model.psi_mu

    k_hat_star = expand_blocks(scalar_gram(s_star, s_hat, model.kernel_cfg), d)
    k_hat = expand_blocks(scalar_gram(model.inputs, s_hat, model.kernel_cfg), d)
    k_psi = cho_solve(model.chol, k_star.T, check_finite=False).T  # (D, DN)
    bracket = k_hat_star - k_psi @ k_hat
    v = _solve_secondary(model, s_hat, xi.reshape(-1))
    return base + bracket @ v


def equivalent_via_point(
    model: KmpModel, ref: NullSpaceReference, covariance_scale: float = EQUIVALENT_VIA_COV
) -> ViaPoint:
    """Via-point that reproduces a single-target modulation under refitting.

    The via-point mean is the modulated prediction at the reference input,
    which generally differs from the raw target: the projector only realizes
    the share of the target the reference covariances permit.
    """
    mean = ns_predict(model, ref.input, [ref])
    cov = covariance_scale * np.eye(model.output_dim)
    return ViaPoint(ref.input, mean, cov)


def project_weights_primal(features, sigma_block, lam, mu_stack, w_hat) -> np.ndarray:
    """Dense weight-space solution with a secondary weight objective.

    ``features`` is the explicit feature matrix with one D-column block per
    reference point (BD x DN).  Returns the minimizer of the covariance-
    weighted data misfit plus ridge, biased toward ``w_hat`` through the soft
    null-space projector (secondary and ridge weights tied 1:1).  This is the
    reference computation the kernelized path must match; test use only.
    """
    phi = np.asarray(features, dtype=float)
    sigma_block = np.asarray(sigma_block, dtype=float)
    mu = np.asarray(mu_stack, dtype=float).reshape(-1)
    w_hat = np.asarray(w_hat, dtype=float).reshape(-1)
    a = phi.T @ phi + lam * sigma_block
    fit_term = phi @ np.linalg.solve(a, mu)
    null_term = w_hat - phi @ np.linalg.solve(a, phi.T @ w_hat)
    return fit_term + null_term


class GridNsPredictor:
    """Modulated trajectory predictions over a fixed query grid.

    Precomputes the nominal trajectory and the grid's solve against the cached
    factor once; each modulation then costs two small kernel blocks and one
    matrix product, independent of the number of past modulations.
    """

    def __init__(self, model: KmpModel, grid_inputs):
        self.model = model
        self.grid = np.atleast_2d(np.asarray(grid_inputs, dtype=float))
        k_grid = cross_matrix(self.grid, model.inputs, model.kernel_cfg)  # (QD, DN)
        self._base_flat = k_grid @ model.psi_mu
        self._k_psi = cho_solve(model.chol, k_grid.T, check_finite=False).T  # (QD, DN)

    @property
    def nominal(self) -> np.ndarray:
        return self._base_flat.reshape(-1, self.model.output_dim)

    def trajectory(self, refs, start: int = 0) -> np.ndarray:
        """Modulated predictions for grid rows from ``start`` on, shape (Q', D)."""
        d = self.model.output_dim
        lo = start * d
        if not refs:
            return self._base_flat[lo:].reshape(-1, d)
        s_hat, xi = _check_refs(self.model, refs)
        k_hat_grid = expand_blocks(
            scalar_gram(self.grid[start:], s_hat, self.model.kernel_cfg), d
        )
        k_hat = expand_blocks(scalar_gram(self.model.inputs, s_hat, self.model.kernel_cfg), d)
        bracket = k_hat_grid - self._k_psi[lo:] @ k_hat
        v = _solve_secondary(self.model, s_hat, xi.reshape(-1))
        return (self._base_flat[lo:] + bracket @ v).reshape(-1, d)
