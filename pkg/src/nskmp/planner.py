"""Finite-horizon replanning: obstacles, costs, and sampler-driven searches.

When an obstacle appears mid-execution, each method searches for a zero-cost
remaining trajectory: the null-space primitive samples secondary targets, the
classical primitive and the ProMP sample via-points near the obstacle (with a
refit or reconditioning per evaluation), and the mixture baseline perturbs
one Gaussian component's mean.  The cost charges 1000 for any collision and
1000 for any consecutive-point gap above a continuity threshold.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import kmp as kmp_mod
from . import promp as promp_mod
from .nullspace import GridNsPredictor, NullSpaceReference
from .refdist import GaussianMixture, _gmr_means, perturb_component_mean
from .sampler import ParamSpace, make_sampler

PENALTY = 1000.0


@dataclass(frozen=True)
class SphereObstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def cont_threshold(self) -> float:
        return self.radius


@dataclass(frozen=True)
class CubeObstacle:
    """Axis-aligned cube given by its center and space diagonal."""

    center: np.ndarray
    space_diagonal: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.shape != (3,):
            raise ValueError("cube obstacles are 3-dimensional")
        if not self.space_diagonal > 0:
            raise ValueError("space diagonal must be positive")
        object.__setattr__(self, "center", center)

    @property
    def half_edge(self) -> float:
        return self.space_diagonal / (2.0 * np.sqrt(3.0))

    @property
    def cont_threshold(self) -> float:
        return self.space_diagonal / 2.0


Obstacle = SphereObstacle | CubeObstacle


@dataclass(frozen=True)
class Trajectory:
    """Ordered (input, output) sequence; the unit the planner scores."""

    inputs: np.ndarray  # (Q, I)
    points: np.ndarray  # (Q, D)

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if inputs.shape[0] != points.shape[0]:
            raise ValueError("inputs and points must have equal length")
        if inputs.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 points")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return self.points.shape[0]


def trajectory_csv(traj: Trajectory) -> bytes:
    """Render a trajectory as CSV (step, s..., x...), deterministically."""
    buf = io.StringIO()
    i_dim = traj.inputs.shape[1]
    d_dim = traj.points.shape[1]
    cols = ["step"] + [f"s{k}" for k in range(i_dim)] + [f"x{k}" for k in range(d_dim)]
    buf.write(",".join(cols) + "\n")
    for step, (s_row, x_row) in enumerate(zip(traj.inputs, traj.points)):
        vals = [str(step)] + [f"{v:.17g}" for v in s_row] + [f"{v:.17g}" for v in x_row]
        buf.write(",".join(vals) + "\n")
    return buf.getvalue().encode()


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of a replanning search; defaults follow the 2D letter task."""

    budget: int = 2000
    sampler_kind: str = "tpe"
    n_refs: int = 1
    xi_bound: float = 1000.0  # secondary targets sampled in [-bound, bound] per dim
    window: float = 0.2  # forward input window width (time tasks)
    via_cov_scale: float = 1e-6
    # Softer observation noise for ProMP conditioning: hard vias make the
    # fixed-basis trajectory ring and break the continuity term.
    promp_via_cov_scale: float = 1e-2
    annulus: tuple[float, float] = (1.0, 2.0)  # multiples of the obstacle radius
    gmm_delta_bound: float = 0.5  # mean perturbation box half-width (output units)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.xi_bound > 0:
            raise ValueError("xi_bound must be positive")
        if self.n_refs < 1:
            raise ValueError("n_refs must be >= 1")


@dataclass
class SearchResult:
    trajectory: Trajectory
    params: list
    cost: float
    evals: int
    wall_time_ms: float
    success: bool


def _points_cost(pts: np.ndarray, obs: Obstacle, cont_threshold: float | None) -> float:
    if isinstance(obs, SphereObstacle):
        hit = np.any(np.sum((pts - obs.center) ** 2, axis=1) < obs.radius**2)
    else:
        hit = np.any(np.all(np.abs(pts - obs.center) < obs.half_edge, axis=1))
    thr = obs.cont_threshold if cont_threshold is None else cont_threshold
    gaps2 = np.sum(np.diff(pts, axis=0) ** 2, axis=1)
    broken = np.any(gaps2 > thr**2)
    return PENALTY * bool(hit) + PENALTY * bool(broken)


def cost(traj: Trajectory, obs: Obstacle, cont_threshold: float | None = None) -> float:
    """Collision plus continuity penalty; each term is 0 or 1000."""
    return _points_cost(traj.points, obs, cont_threshold)


def self_intersection_mask(points: np.ndarray, radius: float, min_gap: int = 10) -> np.ndarray:
    """Mark points that pass within ``radius`` of a temporally distant point."""
    d = cdist(points, points)
    n = len(points)
    idx = np.arange(n)
    near = (d < radius) & (np.abs(idx[:, None] - idx[None, :]) >= min_gap)
    return near.any(axis=1)


def inject_obstacle(
    nominal: Trajectory,
    rng: np.random.Generator,
    *,
    radius: float | None = None,
    space_diagonal: float | None = None,
    centers: np.ndarray | None = None,
    lead_min: int = 10,
    lead_max: int = 20,
    allowed: np.ndarray | None = None,
    max_tries: int = 1000,
) -> tuple[int, Obstacle]:
    """Obstacle blocking the planned path shortly ahead of the robot.

    The center is uniform over the candidate centers (optionally restricted by
    ``allowed``); it appears ``lead_min``..``lead_max`` steps before the robot
    would reach it, which keeps it inside the forward input-sampling window
    while leaving reaction time.  Deterministic under the supplied generator.
    """
    if (radius is None) == (space_diagonal is None):
        raise ValueError("specify exactly one of radius or space_diagonal")
    centers = nominal.points if centers is None else np.asarray(centers, dtype=float)
    q = len(centers)
    allowed = np.ones(q, dtype=bool) if allowed is None else np.asarray(allowed, bool)
    for _ in range(max_tries):
        j = int(rng.integers(lead_min + 1, q))
        if not allowed[j]:
            continue
        gap = int(rng.integers(lead_min, lead_max + 1))
        appear = max(1, j - gap)
        if appear >= q - 1:
            continue
        center = centers[j]
        if radius is not None:
            return appear, SphereObstacle(center, radius)
        return appear, CubeObstacle(center, space_diagonal)
    raise RuntimeError("could not place an obstacle satisfying the constraints")


def _annulus_offset(rng_vals: np.ndarray, obs: Obstacle, lo: float, hi: float, dim: int) -> np.ndarray:
    """Map unit box coordinates to a volume-uniform point in the annulus shell."""
    r_obs = obs.radius if isinstance(obs, SphereObstacle) else obs.space_diagonal / 2.0
    r1, r2 = lo * r_obs, hi * r_obs
    u = rng_vals[-1]
    r = (u * (r2**dim - r1**dim) + r1**dim) ** (1.0 / dim)
    if dim == 2:
        theta = rng_vals[0] * 2.0 * np.pi
        direction = np.array([np.cos(theta), np.sin(theta)])
    else:
        cosphi = rng_vals[0] * 2.0 - 1.0
        theta = rng_vals[1] * 2.0 * np.pi
        sinphi = np.sqrt(max(1.0 - cosphi**2, 0.0))
        direction = np.array([sinphi * np.cos(theta), sinphi * np.sin(theta), cosphi])
    return r * direction


def _search_loop(sampler, rng, budget, evaluate, inputs, first_x=None, first_is_noop=False):
    """Shared ask/evaluate/tell loop; stops at the first zero-cost plan.

    ``evaluate`` maps a candidate to (points, payload, cost) over the fixed
    remaining-horizon ``inputs``.  The first evaluation may be a fixed
    candidate (``first_x``) or the no-op plan (``first_is_noop``); the no-op
    is not reported to the sampler since it lies outside the parameter space.
    """
    t0 = time.perf_counter()
    best = None
    evals = budget
    success = False
    for i in range(budget):
        if i == 0 and first_is_noop:
            x = None
        elif i == 0 and first_x is not None:
            x = first_x
        else:
            x = sampler.ask(rng)
        pts, payload, c = evaluate(x)
        if x is not None:
            sampler.tell(x, c)
        if best is None or c < best[2]:
            best = (pts, payload, c)
        if c == 0.0:
            evals = i + 1
            success = True
            break
    wall = (time.perf_counter() - t0) * 1e3
    return SearchResult(
        Trajectory(inputs, best[0]), best[1], best[2], evals, wall, success
    )


def _input_bounds(cfg, start, time_grid, candidate_count):
    """Bounds for the secondary/via input dimension: a forward time window,
    or an index range into the remaining reference inputs."""
    if time_grid is not None:
        lo = float(time_grid[start])
        hi = min(lo + cfg.window, float(time_grid[-1]))
        if hi <= lo:
            hi = float(time_grid[-1])
        return (lo, hi), False
    return (float(start), float(candidate_count - 1)), True


def search_nskmp(
    predictor: GridNsPredictor,
    start: int,
    obs: Obstacle,
    cfg: SearchConfig,
    rng: np.random.Generator,
    time_grid: np.ndarray | None = None,
) -> SearchResult:
    """Search over secondary targets; the model is never refitted.

    ``time_grid`` selects window sampling of the secondary input; without it,
    inputs are drawn from the model's reference inputs on the remaining horizon.
    """
    model = predictor.model
    d = model.output_dim
    grid = predictor.grid
    anchor = predictor.nominal[start]
    in_bounds, is_index = _input_bounds(cfg, start, time_grid, len(grid))

    bounds, integer = [], []
    for _ in range(cfg.n_refs):
        bounds.append(in_bounds)
        integer.append(is_index)
        bounds.extend([(-cfg.xi_bound, cfg.xi_bound)] * d)
        integer.extend([False] * d)
    space = ParamSpace.from_bounds(bounds, integer)
    sampler = make_sampler(cfg.sampler_kind, space)

    anchor_row = anchor[None, :]

    def decode(x):
        refs = []
        for p in range(cfg.n_refs):
            base = p * (1 + d)
            s_val = x[base]
            s_hat = grid[int(s_val)] if is_index else np.array([s_val])
            refs.append(NullSpaceReference(s_hat, x[base + 1 : base + 1 + d]))
        return refs

    def evaluate(x):
        refs = decode(x)
        pts = np.vstack([anchor_row, predictor.trajectory(refs, start=start + 1)])
        return pts, refs, _points_cost(pts, obs, None)

    first = np.array(
        [v for _ in range(cfg.n_refs) for v in ([in_bounds[0]] + [0.0] * d)]
    )
    return _search_loop(sampler, rng, cfg.budget, evaluate, grid[start:], first_x=first)


def _via_search(
    nominal_pts, grid, start, obs, cfg, rng, apply_vias, n_via
):
    """Common loop for the via-point baselines (classical refit and ProMP)."""
    dim = nominal_pts.shape[1]
    anchor = nominal_pts[start]
    in_bounds, _ = _input_bounds(cfg, start, grid[:, 0], len(grid))

    bounds, integer = [], []
    for _ in range(n_via):
        bounds.append(in_bounds)
        # annulus parameterization: direction coords + radial quantile
        bounds.extend([(0.0, 1.0)] * (dim - 1) + [(0.0, 1.0)])
        integer.extend([False] * (dim + 1))
    space = ParamSpace.from_bounds(bounds, integer)
    sampler = make_sampler(cfg.sampler_kind, space)

    anchor_row = anchor[None, :]

    def decode(x):
        vias = []
        for p in range(n_via):
            base = p * (1 + dim)
            s_bar = np.array([x[base]])
            offset = _annulus_offset(
                x[base + 1 : base + 1 + dim], obs, cfg.annulus[0], cfg.annulus[1], dim
            )
            vias.append((s_bar, obs.center + offset))
        return vias

    def evaluate(x):
        vias = None if x is None else decode(x)
        pts = np.vstack([anchor_row, apply_vias(vias)])
        return pts, vias, _points_cost(pts, obs, None)

    return _search_loop(sampler, rng, cfg.budget, evaluate, grid[start:], first_is_noop=True)


def search_kmp_via(
    model: kmp_mod.KmpModel,
    nominal_pts: np.ndarray,
    grid: np.ndarray,
    start: int,
    obs: Obstacle,
    cfg: SearchConfig,
    rng: np.random.Generator,
    n_via: int = 1,
) -> SearchResult:
    """Via-point search with a full refit per evaluated candidate."""
    d = model.output_dim
    cov = cfg.via_cov_scale * np.eye(d)

    def apply_vias(vias):
        if vias is None:
            return nominal_pts[start + 1 :]
        m = model
        for s_bar, mean in vias:
            m = kmp_mod.adapt_via_point(m, kmp_mod.ViaPoint(s_bar, mean, cov))
        return kmp_mod.predict_many(m, grid[start + 1 :])

    return _via_search(nominal_pts, grid, start, obs, cfg, rng, apply_vias, n_via)


def search_promp_via(
    model: promp_mod.PrompModel,
    nominal_pts: np.ndarray,
    grid: np.ndarray,
    start: int,
    obs: Obstacle,
    cfg: SearchConfig,
    rng: np.random.Generator,
    n_via: int = 1,
) -> SearchResult:
    """Via-point search by Gaussian conditioning of the weight distribution."""
    d = model.output_dim
    cov = cfg.promp_via_cov_scale * np.eye(d)
    # The horizon grid is fixed for the whole search, so its basis activations
    # are computed once; each evaluation only reconditions the weights.
    tail_phi = promp_mod.basis_row(model.centers, model.bandwidth, grid[start + 1 :, 0])

    def apply_vias(vias):
        if vias is None:
            return nominal_pts[start + 1 :]
        m = model
        for s_bar, mean in vias:
            m = promp_mod.condition(m, float(s_bar[0]), mean, cov)
        w = m.mu_w.reshape(d, m.basis_count)
        return tail_phi @ w.T

    return _via_search(nominal_pts, grid, start, obs, cfg, rng, apply_vias, n_via)


def search_gmm_baseline(
    gmm: GaussianMixture,
    query_inputs: np.ndarray,
    nominal_pts: np.ndarray,
    start: int,
    obs: Obstacle,
    cfg: SearchConfig,
    rng: np.random.Generator,
) -> SearchResult:
    """Perturb the mean of one randomly chosen component until cost is zero.

    Only the output block of the component mean is perturbed, so conditioning
    weights stay put and the regression shifts locally.
    """
    i_dim = query_inputs.shape[1]
    d = nominal_pts.shape[1]
    component = int(rng.integers(gmm.component_count))
    anchor = nominal_pts[start]
    tail = query_inputs[start + 1 :]

    space = ParamSpace.from_bounds([(-cfg.gmm_delta_bound, cfg.gmm_delta_bound)] * d)
    sampler = make_sampler(cfg.sampler_kind, space)

    anchor_row = anchor[None, :]

    def evaluate(x):
        delta = np.concatenate([np.zeros(i_dim), x])
        perturbed = perturb_component_mean(gmm, component, delta)
        means = _gmr_means(perturbed, tail)
        pts = np.vstack([anchor_row, means])
        payload = [{"component": component, "delta": x.tolist()}]
        return pts, payload, _points_cost(pts, obs, None)

    return _search_loop(
        sampler, rng, cfg.budget, evaluate, query_inputs[start:], first_x=np.zeros(d)
    )
