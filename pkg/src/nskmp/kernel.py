"""Squared-exponential kernel and the block kernel matrices used by the primitives.

The scalar kernel is k(a, b) = exp(-||a - b||^2 / l^2).  Outputs are
D-dimensional, so every scalar kernel value expands to a D x D identity
block; the block layout is row-major in the training points (block (i, j)
occupies rows i*D:(i+1)*D and columns j*D:(j+1)*D).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

FeatureMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KernelConfig:
    """Kernel hyperparameters shared by all kernelized models.

    Parameters
    ----------
    length_scale : float
        Length scale l of the squared-exponential kernel, in input units.
    output_dim : int
        Output dimension D; controls the identity-block expansion.
    feature_map : callable, optional
        When set, replaces the squared-exponential with the finite-feature
        kernel k(a, b) = phi(a) . phi(b).  Used by the dense reference
        computations in the test suite; such configs are not serializable.
    """

    length_scale: float
    output_dim: int
    feature_map: FeatureMap | None = None

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if self.output_dim < 1:
            raise ValueError(f"output_dim must be >= 1, got {self.output_dim}")


def _as_points(x, name: str) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.ndim != 2:
        raise ValueError(f"{name} must be a vector or a matrix of row vectors")
    return pts


def scalar_gram(a, b, cfg: KernelConfig) -> np.ndarray:
    """Scalar kernel matrix k(a_i, b_j) for row-vector input sets."""
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"input dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if cfg.feature_map is not None:
        fa = np.stack([np.asarray(cfg.feature_map(p), dtype=float) for p in a])
        fb = np.stack([np.asarray(cfg.feature_map(p), dtype=float) for p in b])
        return fa @ fb.T
    d2 = cdist(a, b, "sqeuclidean")
    return np.exp(-d2 / (cfg.length_scale**2))


def kernel_eval(s_i, s_j, cfg: KernelConfig) -> float:
    """Scalar kernel value for a single input pair."""
    return float(scalar_gram(s_i, s_j, cfg)[0, 0])


def expand_blocks(scalar: np.ndarray, output_dim: int) -> np.ndarray:
    """Expand a scalar kernel matrix into identity blocks, k_ij -> k_ij * I_D."""
    if output_dim == 1:
        return np.ascontiguousarray(scalar)
    n, m = scalar.shape
    out = np.zeros((n * output_dim, m * output_dim))
    for d in range(output_dim):
        out[d::output_dim, d::output_dim] = scalar
    return out


def gram_matrix(inputs, cfg: KernelConfig) -> np.ndarray:
    """Block kernel matrix K (DN x DN) over N training inputs."""
    return expand_blocks(scalar_gram(inputs, inputs, cfg), cfg.output_dim)


def cross_vector(s_star, inputs, cfg: KernelConfig) -> np.ndarray:
    """Block cross-kernel k* (D x DN) between one query and the training inputs."""
    return expand_blocks(scalar_gram(s_star, inputs, cfg), cfg.output_dim)


def cross_matrix(queries, inputs, cfg: KernelConfig) -> np.ndarray:
    """Stacked cross-kernels (QD x DN) for a batch of Q query inputs."""
    return expand_blocks(scalar_gram(queries, inputs, cfg), cfg.output_dim)
