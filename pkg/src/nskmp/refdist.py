"""Reference trajectory distributions from demonstrations.

A Gaussian mixture is fitted with EM over the joint (input, output) space;
Gaussian mixture regression then conditions it on query inputs to produce
the per-input mean/covariance pairs that the kernelized primitives consume.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

log = logging.getLogger(__name__)

# Diagonal loading applied whenever a covariance fails Cholesky, relative to
# its mean diagonal.  Small absolute fallback guards all-zero covariances.
COV_FLOOR_REL = 1e-6
COV_FLOOR_ABS = 1e-12


@dataclass(frozen=True)
class Demonstration:
    """One demonstration: paired input and output samples."""

    inputs: np.ndarray  # (M, I)
    outputs: np.ndarray  # (M, D)

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError("inputs and outputs must have equal sample counts")
        if inputs.shape[0] < 2:
            raise ValueError("a demonstration needs at least 2 samples")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @property
    def joint(self) -> np.ndarray:
        return np.hstack([self.inputs, self.outputs])


@dataclass(frozen=True)
class GaussianMixture:
    """Gaussian mixture over the joint (input, output) space."""

    priors: np.ndarray  # (C,)
    means: np.ndarray  # (C, J)
    covariances: np.ndarray  # (C, J, J)

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covariances, dtype=float)
        if not np.isclose(priors.sum(), 1.0, atol=1e-9):
            raise ValueError(f"priors must sum to 1, got {priors.sum()}")
        if np.any(priors <= 0):
            raise ValueError("priors must be positive")
        if means.shape[0] != priors.shape[0] or covs.shape[0] != priors.shape[0]:
            raise ValueError("component count mismatch between fields")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    @property
    def component_count(self) -> int:
        return len(self.priors)

    @property
    def joint_dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class ReferenceTrajectoryDistribution:
    """Per-input Gaussians {s_n, mu_n, Sigma_n} summarizing the demonstrations."""

    inputs: np.ndarray  # (N, I)
    means: np.ndarray  # (N, D)
    covariances: np.ndarray  # (N, D, D)

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covariances, dtype=float)
        n = inputs.shape[0]
        if means.shape[0] != n or covs.shape[0] != n:
            raise ValueError("inputs, means and covariances must share length N")
        if covs.shape[1:] != (means.shape[1], means.shape[1]):
            raise ValueError("covariance blocks must be D x D")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class EmOptions:
    max_iter: int = 200
    tol: float = 1e-6  # relative log-likelihood change
    empty_threshold: float = 1e-10  # responsibility mass below which a component is dead


def _floor_covariance(cov: np.ndarray) -> np.ndarray:
    """Add diagonal loading until Cholesky succeeds."""
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    bump = max(COV_FLOOR_REL * float(np.mean(np.diag(cov))), COV_FLOOR_ABS)
    for _ in range(16):
        try:
            np.linalg.cholesky(cov)
            return cov
        except np.linalg.LinAlgError:
            cov = cov + bump * np.eye(cov.shape[0])
            bump *= 10.0
    raise np.linalg.LinAlgError("covariance could not be floored to SPD")


def _log_gauss(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of rows of x under N(mean, cov)."""
    chol = np.linalg.cholesky(cov)
    z = solve_triangular(chol, (x - mean).T, lower=True, check_finite=False)
    quad = np.sum(z**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    d = x.shape[1]
    return -0.5 * (quad + logdet + d * np.log(2.0 * np.pi))


def _log_responsibilities(gmm: GaussianMixture, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point log responsibilities (M, C) and per-point log-likelihoods (M,)."""
    parts = np.stack(
        [
            np.log(gmm.priors[c]) + _log_gauss(x, gmm.means[c], gmm.covariances[c])
            for c in range(gmm.component_count)
        ],
        axis=1,
    )
    norm = logsumexp(parts, axis=1)
    return parts - norm[:, None], norm


def responsibilities(gmm: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for each row of x; rows sum to 1."""
    logr, _ = _log_responsibilities(gmm, np.atleast_2d(np.asarray(x, dtype=float)))
    return np.exp(logr)


def log_likelihood(gmm: GaussianMixture, x: np.ndarray) -> float:
    """Total data log-likelihood under the mixture."""
    _, norm = _log_responsibilities(gmm, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(np.sum(norm))


def _kmeans_pp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: iteratively sample points proportionally to squared distance."""
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min(
            np.sum((x[:, None, :] - np.stack(centers)[None, :, :]) ** 2, axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(n)])
            continue
        centers.append(x[rng.choice(n, p=d2 / total)])
    return np.stack(centers)


def _init_mixture(x: np.ndarray, k: int, rng: np.random.Generator) -> GaussianMixture:
    # Seed with k-means++, assign points to the nearest seed, then take each
    # cluster's moments.  Singleton or empty clusters fall back to global moments.
    seeds = _kmeans_pp_centers(x, k, rng)
    assignment = np.argmin(
        np.sum((x[:, None, :] - seeds[None, :, :]) ** 2, axis=2), axis=1
    )
    global_cov = _floor_covariance(np.cov(x, rowvar=False))
    priors = np.empty(k)
    means = np.empty((k, x.shape[1]))
    covs = np.empty((k, x.shape[1], x.shape[1]))
    for c in range(k):
        members = x[assignment == c]
        priors[c] = max(len(members), 1)
        if len(members) == 0:
            means[c] = seeds[c]
            covs[c] = global_cov
        else:
            means[c] = members.mean(axis=0)
            covs[c] = (
                _floor_covariance(np.cov(members, rowvar=False))
                if len(members) > x.shape[1]
                else global_cov
            )
    priors /= priors.sum()
    return GaussianMixture(priors, means, covs)


def em_fit(
    demos: list[Demonstration],
    n_components: int,
    seed: int,
    opts: EmOptions = EmOptions(),
    return_trace: bool = False,
):
    """Fit a Gaussian mixture to the stacked joint samples of the demonstrations.

    Deterministic under ``seed``.  Components that lose all responsibility mass
    are reinitialized from a random datapoint with the global data covariance.
    """
    if not demos:
        raise ValueError("em_fit needs at least one demonstration")
    x = np.vstack([d.joint for d in demos])
    j = x.shape[1]
    if x.shape[0] < n_components * (j + 1):
        raise ValueError(
            f"too few datapoints ({x.shape[0]}) for {n_components} components in {j}-d space"
        )
    rng = np.random.default_rng(seed)
    gmm = _init_mixture(x, n_components, rng)
    global_cov = _floor_covariance(np.cov(x, rowvar=False))

    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(opts.max_iter):
        logr, norm = _log_responsibilities(gmm, x)
        ll = float(np.sum(norm))
        trace.append(ll)
        r = np.exp(logr)
        mass = r.sum(axis=0)

        priors = np.empty(n_components)
        means = np.empty_like(gmm.means)
        covs = np.empty_like(gmm.covariances)
        for c in range(n_components):
            if mass[c] < opts.empty_threshold:
                means[c] = x[rng.integers(x.shape[0])]
                covs[c] = global_cov
                priors[c] = 1.0 / x.shape[0]
                continue
            w = r[:, c] / mass[c]
            means[c] = w @ x
            dev = x - means[c]
            covs[c] = _floor_covariance((dev * w[:, None]).T @ dev)
            priors[c] = mass[c] / x.shape[0]
        priors /= priors.sum()
        gmm = GaussianMixture(priors, means, covs)

        if np.isfinite(prev_ll) and abs(ll - prev_ll) < opts.tol * abs(prev_ll):
            break
        prev_ll = ll

    if return_trace:
        return gmm, np.asarray(trace)
    return gmm


def _gmr_parts(gmm: GaussianMixture, queries: np.ndarray):
    """Responsibilities and per-component conditionals for a query batch."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    q, i_dim = queries.shape
    d_dim = gmm.joint_dim - i_dim
    if d_dim < 1:
        raise ValueError(
            f"query dimension {i_dim} leaves no output dimensions in a "
            f"{gmm.joint_dim}-d mixture"
        )
    c_count = gmm.component_count

    log_h = np.empty((q, c_count))
    cond_means = np.empty((c_count, q, d_dim))
    cond_covs = np.empty((c_count, d_dim, d_dim))
    for c in range(c_count):
        m_in = gmm.means[c, :i_dim]
        m_out = gmm.means[c, i_dim:]
        s = gmm.covariances[c]
        s_ii = s[:i_dim, :i_dim]
        s_oi = s[i_dim:, :i_dim]
        s_oo = s[i_dim:, i_dim:]
        log_h[:, c] = np.log(gmm.priors[c]) + _log_gauss(queries, m_in, s_ii)
        gain = np.linalg.solve(s_ii, s_oi.T).T  # S_oi S_ii^-1
        cond_means[c] = m_out + (queries - m_in) @ gain.T
        cond_covs[c] = s_oo - gain @ s_oi.T

    norm = logsumexp(log_h, axis=1)
    dead = ~np.isfinite(norm)
    if np.any(dead):
        log.warning(
            "gmr: responsibilities underflowed for %d of %d queries; "
            "falling back to uniform weights",
            int(dead.sum()),
            q,
        )
        log_h[dead] = 0.0
        norm[dead] = np.log(c_count)
    h = np.exp(log_h - norm[:, None])  # (Q, C)
    return h, cond_means, cond_covs


def _gmr_means(gmm: GaussianMixture, queries: np.ndarray) -> np.ndarray:
    """Conditional means only; the cheap path used inside search loops."""
    h, cond_means, _ = _gmr_parts(gmm, queries)
    return np.einsum("qc,cqd->qd", h, cond_means)


def _gmr_batch(gmm: GaussianMixture, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Condition the mixture on a batch of inputs; vectorized over queries."""
    h, cond_means, cond_covs = _gmr_parts(gmm, queries)
    means = np.einsum("qc,cqd->qd", h, cond_means)
    spread = cond_means - means[None, :, :]  # (C, Q, D)
    covs = np.einsum("qc,cde->qde", h, cond_covs)
    covs = covs + np.einsum("qc,cqd,cqe->qde", h, spread, spread)
    covs = np.stack([_floor_covariance(cv) for cv in covs])
    return means, covs


def gmr(gmm: GaussianMixture, s) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance of the outputs given one input."""
    s = np.asarray(s, dtype=float).reshape(1, -1)
    means, covs = _gmr_batch(gmm, s)
    return means[0], covs[0]


def build_reference(gmm: GaussianMixture, query_inputs) -> ReferenceTrajectoryDistribution:
    """Reference trajectory distribution from GMR at each query input."""
    queries = np.atleast_2d(np.asarray(query_inputs, dtype=float))
    if queries.shape[0] < 1:
        raise ValueError("need at least one query input")
    means, covs = _gmr_batch(gmm, queries)
    return ReferenceTrajectoryDistribution(queries, means, covs)


def perturb_component_mean(
    gmm: GaussianMixture, component_index: int, delta
) -> GaussianMixture:
    """Copy of the mixture with ``delta`` added to one component's mean."""
    if not 0 <= component_index < gmm.component_count:
        raise IndexError(f"component index {component_index} out of range")
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (gmm.joint_dim,):
        raise ValueError(f"delta must have shape ({gmm.joint_dim},)")
    means = gmm.means.copy()
    means[component_index] = means[component_index] + delta
    return replace(gmm, means=means)


def demonstrations_csv(demos: list[Demonstration]) -> str:
    """Render demonstrations as CSV with header demo,s0..s{I-1},x0..x{D-1}."""
    i_dim = demos[0].inputs.shape[1]
    d_dim = demos[0].outputs.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["demo"] + [f"s{k}" for k in range(i_dim)] + [f"x{k}" for k in range(d_dim)]
    )
    for idx, demo in enumerate(demos):
        for s_row, x_row in zip(demo.inputs, demo.outputs):
            writer.writerow(
                [idx] + [f"{v:.17g}" for v in s_row] + [f"{v:.17g}" for v in x_row]
            )
    return buf.getvalue()


def save_demonstrations(path, demos: list[Demonstration]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(demonstrations_csv(demos))


def load_demonstrations(path) -> list[Demonstration]:
    """Read demonstrations from the CSV format written by save_demonstrations."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "demo":
            raise ValueError(f"unexpected CSV header: {header}")
        i_dim = sum(1 for name in header if name.startswith("s"))
        d_dim = sum(1 for name in header if name.startswith("x"))
        if 1 + i_dim + d_dim != len(header):
            raise ValueError(f"malformed CSV header: {header}")
        rows = [(int(r[0]), [float(v) for v in r[1:]]) for r in reader]
    demos = []
    for demo_id in sorted({r[0] for r in rows}):
        block = np.asarray([vals for rid, vals in rows if rid == demo_id])
        demos.append(Demonstration(block[:, :i_dim], block[:, i_dim:]))
    return demos
