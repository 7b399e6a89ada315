"""Probabilistic movement primitive baseline (time input only).

Trajectories are weighted sums of normalized Gaussian radial basis functions
on [0, 1].  Fitting ridge-regresses one weight vector per demonstration and
takes their sample mean and covariance; via-points are incorporated by
Gaussian conditioning of the weight distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SIGMA_W_FLOOR = 1e-8
DEFAULT_RIDGE = 1e-6
BANDWIDTH_FACTOR = 0.7  # bandwidth = factor * center spacing


@dataclass(frozen=True)
class PrompModel:
    """Basis-function weight distribution with its basis configuration."""

    basis_count: int
    centers: np.ndarray  # (B,)
    bandwidth: float
    mu_w: np.ndarray  # (BD,)
    sigma_w: np.ndarray  # (BD, BD)
    output_dim: int

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.shape != (self.basis_count,):
            raise ValueError("centers must have length basis_count")
        if np.any(np.diff(centers) <= 0):
            raise ValueError("centers must be strictly increasing")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "mu_w", np.asarray(self.mu_w, dtype=float))
        object.__setattr__(self, "sigma_w", np.asarray(self.sigma_w, dtype=float))


def basis_row(centers: np.ndarray, bandwidth: float, t) -> np.ndarray:
    """Normalized RBF activations at times t; rows sum to 1."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    raw = np.exp(-0.5 * ((t[:, None] - centers[None, :]) / bandwidth) ** 2)
    return raw / raw.sum(axis=1, keepdims=True)


def _phi_block(model: PrompModel, t: float) -> np.ndarray:
    """Block-diagonal basis matrix (BD x D) at one time."""
    phi = basis_row(model.centers, model.bandwidth, t)[0]
    return np.kron(np.eye(model.output_dim), phi[:, None])


def fit_promp(demos, n_basis: int, ridge: float = DEFAULT_RIDGE) -> PrompModel:
    """Maximum-likelihood weight distribution from per-demonstration regressions.

    Demonstrations must use a one-dimensional time input covering [0, 1] and
    provide at least n_basis samples each.
    """
    if len(demos) < 2:
        raise ValueError("need at least 2 demonstrations to estimate a weight covariance")
    if n_basis < 2:
        raise ValueError("need at least 2 basis functions")
    d = demos[0].outputs.shape[1]
    centers = np.linspace(0.0, 1.0, n_basis)
    bandwidth = BANDWIDTH_FACTOR * (centers[1] - centers[0])

    ws = []
    for demo in demos:
        if demo.inputs.shape[1] != 1:
            raise ValueError("ProMP supports one-dimensional (time) inputs only")
        t = demo.inputs[:, 0]
        if t.min() < -1e-9 or t.max() > 1 + 1e-9:
            raise ValueError("demonstration times must lie in [0, 1]")
        if len(t) < n_basis:
            raise ValueError("each demonstration needs at least n_basis samples")
        phi = basis_row(centers, bandwidth, t)  # (M, B)
        gram = phi.T @ phi + ridge * np.eye(n_basis)
        # The block structure decouples the regression per output dimension.
        w = np.linalg.solve(gram, phi.T @ demo.outputs)  # (B, D)
        ws.append(w.T.reshape(-1))  # dimension-major stacking
    ws = np.stack(ws)
    mu_w = ws.mean(axis=0)
    sigma_w = np.cov(ws, rowvar=False, ddof=1) + SIGMA_W_FLOOR * np.eye(ws.shape[1])
    return PrompModel(n_basis, centers, bandwidth, mu_w, sigma_w, d)


def promp_predict(model: PrompModel, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the output at time t."""
    phi = _phi_block(model, t)
    return phi.T @ model.mu_w, phi.T @ model.sigma_w @ phi


def predict_mean_many(model: PrompModel, ts) -> np.ndarray:
    """Mean trajectory over a time grid, shape (Q, D)."""
    phi = basis_row(model.centers, model.bandwidth, ts)  # (Q, B)
    w = model.mu_w.reshape(model.output_dim, model.basis_count)  # (D, B)
    return phi @ w.T


def condition(model: PrompModel, t_bar: float, xi_bar, sigma_bar) -> PrompModel:
    """Condition the weight distribution on the observation xi(t_bar) = xi_bar.

    sigma_bar is the observation noise; tiny values force the mean trajectory
    through xi_bar, large values leave the model essentially unchanged.
    """
    xi_bar = np.atleast_1d(np.asarray(xi_bar, dtype=float))
    sigma_bar = np.asarray(sigma_bar, dtype=float)
    d = model.output_dim
    if xi_bar.shape != (d,) or sigma_bar.shape != (d, d):
        raise ValueError("via-point mean/covariance dimensions do not match the model")
    phi = _phi_block(model, t_bar)  # (BD, D)
    cross = model.sigma_w @ phi  # (BD, D)
    innovation = phi.T @ cross + sigma_bar
    try:
        gain = np.linalg.solve(innovation, cross.T).T  # (BD, D)
    except np.linalg.LinAlgError:
        innovation = innovation + SIGMA_W_FLOOR * np.eye(d)
        gain = np.linalg.solve(innovation, cross.T).T
    mu_w = model.mu_w + gain @ (xi_bar - phi.T @ model.mu_w)
    sigma_w = model.sigma_w - gain @ cross.T
    sigma_w = 0.5 * (sigma_w + sigma_w.T)
    return replace(model, mu_w=mu_w, sigma_w=sigma_w)
