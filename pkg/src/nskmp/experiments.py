"""Seeded replanning experiments on the synthetic letter and handover tasks.

Experiment 1: a 2D letter trajectory driven by time; an obstacle appears on
the planned path and the null-space search is compared against via-point
adaptation with the classical primitive and with ProMP.  Experiment 2: a 3D
handover driven by hand position; the comparison is against perturbing one
Gaussian component of the mixture.  All randomness flows from one root seed
through spawned per-trial streams, so reports are reproducible byte for byte;
wall times live in a separate timing structure.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import kmp as kmp_mod
from .datasets import make_handover_demos, make_letter_a_demos, nominal_hand_path
from .kernel import KernelConfig
from .nullspace import GridNsPredictor
from .planner import (
    SearchConfig,
    SphereObstacle,
    Trajectory,
    inject_obstacle,
    search_gmm_baseline,
    search_kmp_via,
    search_nskmp,
    search_promp_via,
    self_intersection_mask,
    trajectory_csv,
)
from .promp import fit_promp, predict_mean_many
from .refdist import build_reference, em_fit

REPORT_SCHEMA = "nskmp-experiment-report/1"
TIMING_SCHEMA = "nskmp-experiment-timing/1"


@dataclass(frozen=True)
class Experiment1Config:
    trials: int = 40
    seed: int = 0
    n_via: int = 1  # 2 restricts obstacles to self-intersection regions
    budget: int = 2000
    sampler_kind: str = "tpe"
    lam: float = 0.1
    length_scale: float = 0.125
    n_components: int = 8
    n_ref: int = 100
    n_basis: int = 20
    obstacle_radius: float = 0.5
    lead_min: int = 10
    lead_max: int = 20
    window: float = 0.2
    xi_bound: float = 1000.0
    jobs: int = 1


@dataclass(frozen=True)
class Experiment2Config:
    trials: int = 20
    seed: int = 0
    budget: int = 2000
    sampler_kind: str = "tpe"
    lam: float = 0.1
    length_scale: float = 0.125
    n_components: int = 8
    n_ref: int = 100
    cube_diagonal: float = 0.1
    lead_min: int = 10
    lead_max: int = 20
    xi_bound: float = 2000.0
    gmm_delta_bound: float | None = None  # default: half the output bounding-box diagonal
    jobs: int = 1


@dataclass
class ExperimentResult:
    report: dict
    timing: dict
    artifacts: dict  # relative path -> bytes


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _params_record(params):
    if params is None:
        return []
    out = []
    for p in params:
        if isinstance(p, dict):
            out.append(_jsonify(p))
        elif isinstance(p, tuple):  # via-point (input, mean)
            out.append({"input": _jsonify(p[0]), "mean": _jsonify(p[1])})
        else:  # NullSpaceReference
            out.append({"input": _jsonify(p.input), "target": _jsonify(p.target)})
    return out


def _method_records(results: dict) -> tuple[dict, dict]:
    report, timing = {}, {}
    for name, res in results.items():
        report[name] = {
            "success": bool(res.success),
            "evals": int(res.evals),
            "final_cost": float(res.cost),
            "params": _params_record(res.params),
        }
        timing[name] = {"wall_time_ms": float(res.wall_time_ms)}
    return report, timing


def _aggregate(trial_reports, trial_timings, methods):
    agg_report, agg_timing = {}, {}
    for m in methods:
        evals = np.array([t["methods"][m]["evals"] for t in trial_reports])
        succ = np.array([t["methods"][m]["success"] for t in trial_reports])
        times = np.array([t["methods"][m]["wall_time_ms"] for t in trial_timings])
        agg_report[m] = {
            "success_rate": float(succ.mean()),
            "evals_mean": float(evals.mean()),
            "evals_std": float(evals.std()),
        }
        agg_timing[m] = {
            "mean_ms": float(times.mean()),
            "std_ms": float(times.std()),
            "median_ms": float(np.median(times)),
        }
    return agg_report, agg_timing


def _obstacle_record(appear, obs):
    if isinstance(obs, SphereObstacle):
        shape = {"shape": "sphere", "center": _jsonify(obs.center), "radius": obs.radius}
    else:
        shape = {
            "shape": "axis_cube",
            "center": _jsonify(obs.center),
            "space_diagonal": obs.space_diagonal,
        }
    return {"appear_step": int(appear), "obstacle": shape}


@dataclass
class _Exp1Setup:
    cfg: Experiment1Config
    grid_t: np.ndarray
    ref_means: np.ndarray
    model: kmp_mod.KmpModel
    predictor: GridNsPredictor
    nominal: np.ndarray
    promp_model: object
    promp_nominal: np.ndarray
    intersections: np.ndarray


def _exp1_setup(cfg: Experiment1Config, data_seed: int, em_seed: int) -> _Exp1Setup:
    demos = make_letter_a_demos(data_seed)
    gmm = em_fit(demos, cfg.n_components, em_seed)
    grid_t = np.linspace(0.0, 1.0, cfg.n_ref)
    ref = build_reference(gmm, grid_t[:, None])
    model = kmp_mod.fit(ref, cfg.lam, KernelConfig(cfg.length_scale, 2))
    predictor = GridNsPredictor(model, ref.inputs)
    promp_model = fit_promp(demos, cfg.n_basis)
    return _Exp1Setup(
        cfg=cfg,
        grid_t=grid_t,
        ref_means=ref.means,
        model=model,
        predictor=predictor,
        nominal=predictor.nominal,
        promp_model=promp_model,
        promp_nominal=predict_mean_many(promp_model, grid_t),
        intersections=self_intersection_mask(ref.means, cfg.obstacle_radius),
    )


def _inject_two_pass(setup: _Exp1Setup, rng: np.random.Generator):
    """Obstacle at a self-intersection, appearing shortly before the first passage."""
    cfg = setup.cfg
    inter_idx = np.flatnonzero(setup.intersections)
    if len(inter_idx) == 0:
        raise RuntimeError("the nominal trajectory has no self-intersection region")
    for _ in range(1000):
        j = int(rng.choice(inter_idx))
        center = setup.ref_means[j]
        passages = np.flatnonzero(
            np.linalg.norm(setup.nominal - center, axis=1) < cfg.obstacle_radius
        )
        if len(passages) == 0:
            continue
        gap = int(rng.integers(cfg.lead_min, cfg.lead_max + 1))
        appear = max(1, int(passages.min()) - gap)
        if appear >= len(setup.nominal) - 1:
            continue
        return appear, SphereObstacle(center, cfg.obstacle_radius)
    raise RuntimeError("could not place a two-passage obstacle")


def _run_trial_exp1(setup: _Exp1Setup, child_ss: np.random.SeedSequence):
    cfg = setup.cfg
    rng_obs, rng_ns, rng_kmp, rng_promp = (
        np.random.default_rng(s) for s in child_ss.spawn(4)
    )
    if cfg.n_via == 1:
        nominal_traj = Trajectory(setup.grid_t[:, None], setup.nominal)
        appear, obs = inject_obstacle(
            nominal_traj,
            rng_obs,
            radius=cfg.obstacle_radius,
            centers=setup.ref_means,
            lead_min=cfg.lead_min,
            lead_max=cfg.lead_max,
            allowed=~setup.intersections,
        )
    else:
        appear, obs = _inject_two_pass(setup, rng_obs)

    # Two via-points must reach both passages, so their input window spans the
    # whole remaining horizon instead of the short forward window.
    window = cfg.window if cfg.n_via == 1 else 1.0
    search_cfg = SearchConfig(
        budget=cfg.budget,
        sampler_kind=cfg.sampler_kind,
        n_refs=cfg.n_via,
        xi_bound=cfg.xi_bound,
        window=window,
    )
    grid = setup.grid_t[:, None]
    results = {
        "nskmp": search_nskmp(
            setup.predictor, appear, obs, search_cfg, rng_ns, time_grid=setup.grid_t
        )
    }
    if cfg.n_via == 1:
        results["kmp"] = search_kmp_via(
            setup.model, setup.nominal, grid, appear, obs, search_cfg, rng_kmp
        )
    results["promp"] = search_promp_via(
        setup.promp_model,
        setup.promp_nominal,
        grid,
        appear,
        obs,
        search_cfg,
        rng_promp,
        n_via=cfg.n_via,
    )
    return appear, obs, results


def _exp1_trial_worker(args):
    setup, trial, child = args
    appear, obs, results = _run_trial_exp1(setup, child)
    method_report, method_timing = _method_records(results)
    record = {"trial": trial, **_obstacle_record(appear, obs), "methods": method_report}
    timing = {"trial": trial, "methods": method_timing}
    artifacts = {
        f"trajectories/trial_{trial:03d}_{name}.csv": trajectory_csv(res.trajectory)
        for name, res in results.items()
    }
    return record, timing, artifacts


def _run_trials(worker, setup, trials, trial_seqs, jobs):
    tasks = [(setup, i, trial_seqs[i]) for i in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(worker, tasks))
    return [worker(t) for t in tasks]


def _assemble(experiment, cfg, methods, rows, nominal_traj) -> ExperimentResult:
    trial_reports = [r[0] for r in rows]
    trial_timings = [r[1] for r in rows]
    # Aggregation reads both structures, so merge timing in temporarily.
    merged = [
        {**rep, "methods": {m: {**rep["methods"][m], **tim["methods"][m]} for m in rep["methods"]}}
        for rep, tim in zip(trial_reports, trial_timings)
    ]
    agg_report, agg_timing = _aggregate(merged, merged, methods)
    report = {
        "schema": REPORT_SCHEMA,
        "experiment": experiment,
        "config": _jsonify(asdict(cfg)),
        "trials": trial_reports,
        "aggregates": agg_report,
    }
    timing = {
        "schema": TIMING_SCHEMA,
        "experiment": experiment,
        "trials": trial_timings,
        "aggregates": agg_timing,
    }
    artifacts = {"trajectories/nominal.csv": trajectory_csv(nominal_traj)}
    for _, _, art in rows:
        artifacts.update(art)
    return ExperimentResult(report, timing, artifacts)


def run_experiment1(cfg: Experiment1Config) -> ExperimentResult:
    root = np.random.SeedSequence(cfg.seed)
    data_ss, em_ss, *trial_seqs = root.spawn(2 + cfg.trials)
    setup = _exp1_setup(
        cfg,
        data_seed=int(data_ss.generate_state(1)[0]),
        em_seed=int(em_ss.generate_state(1)[0]),
    )
    rows = _run_trials(_exp1_trial_worker, setup, cfg.trials, trial_seqs, cfg.jobs)
    methods = ["nskmp", "kmp", "promp"] if cfg.n_via == 1 else ["nskmp", "promp"]
    nominal_traj = Trajectory(setup.grid_t[:, None], setup.nominal)
    return _assemble(1, cfg, methods, rows, nominal_traj)


@dataclass
class _Exp2Setup:
    cfg: Experiment2Config
    grid: np.ndarray
    gmm: object
    ref_means: np.ndarray
    predictor: GridNsPredictor
    nominal: np.ndarray
    delta_bound: float


def _exp2_setup(cfg: Experiment2Config, data_seed: int, em_seed: int) -> _Exp2Setup:
    demos = make_handover_demos(data_seed)
    gmm = em_fit(demos, cfg.n_components, em_seed)
    grid = nominal_hand_path(cfg.n_ref)
    ref = build_reference(gmm, grid)
    model = kmp_mod.fit(ref, cfg.lam, KernelConfig(cfg.length_scale, 3))
    predictor = GridNsPredictor(model, grid)
    if cfg.gmm_delta_bound is not None:
        delta_bound = cfg.gmm_delta_bound
    else:
        delta_bound = 0.5 * float(np.linalg.norm(np.ptp(ref.means, axis=0)))
    return _Exp2Setup(
        cfg=cfg,
        grid=grid,
        gmm=gmm,
        ref_means=ref.means,
        predictor=predictor,
        nominal=predictor.nominal,
        delta_bound=delta_bound,
    )


def _exp2_trial_worker(args):
    setup, trial, child = args
    cfg = setup.cfg
    rng_obs, rng_ns, rng_gmm = (np.random.default_rng(s) for s in child.spawn(3))
    nominal_traj = Trajectory(setup.grid, setup.nominal)
    appear, obs = inject_obstacle(
        nominal_traj,
        rng_obs,
        space_diagonal=cfg.cube_diagonal,
        centers=setup.nominal,
        lead_min=cfg.lead_min,
        lead_max=cfg.lead_max,
    )
    search_cfg = SearchConfig(
        budget=cfg.budget,
        sampler_kind=cfg.sampler_kind,
        n_refs=1,
        xi_bound=cfg.xi_bound,
        gmm_delta_bound=setup.delta_bound,
    )
    results = {
        "nskmp": search_nskmp(setup.predictor, appear, obs, search_cfg, rng_ns),
        "gmm": search_gmm_baseline(
            setup.gmm,
            setup.grid,
            setup.ref_means,
            appear,
            obs,
            search_cfg,
            rng_gmm,
        ),
    }
    method_report, method_timing = _method_records(results)
    record = {"trial": trial, **_obstacle_record(appear, obs), "methods": method_report}
    timing = {"trial": trial, "methods": method_timing}
    artifacts = {
        f"trajectories/trial_{trial:03d}_{name}.csv": trajectory_csv(res.trajectory)
        for name, res in results.items()
    }
    return record, timing, artifacts


def run_experiment2(cfg: Experiment2Config) -> ExperimentResult:
    root = np.random.SeedSequence(cfg.seed)
    data_ss, em_ss, *trial_seqs = root.spawn(2 + cfg.trials)
    setup = _exp2_setup(
        cfg,
        data_seed=int(data_ss.generate_state(1)[0]),
        em_seed=int(em_ss.generate_state(1)[0]),
    )
    rows = _run_trials(_exp2_trial_worker, setup, cfg.trials, trial_seqs, cfg.jobs)
    nominal_traj = Trajectory(setup.grid, setup.nominal)
    return _assemble(2, cfg, ["nskmp", "gmm"], rows, nominal_traj)
