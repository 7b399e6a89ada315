"""Timing benchmark: classical adapt-and-predict against null-space queries.

Times are taken single-threaded by default so the scaling exponents reflect
operation counts rather than BLAS thread ramp-up; pass multithread=True to
measure with the ambient thread pool.
"""

from __future__ import annotations

import time
from contextlib import nullcontext

import numpy as np

from . import kmp as kmp_mod
from .kernel import KernelConfig
from .nullspace import NullSpaceReference, ns_predict
from .refdist import ReferenceTrajectoryDistribution

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def synthetic_reference(n: int, d: int, seed: int = 0) -> ReferenceTrajectoryDistribution:
    """Smooth curve with random SPD covariance blocks, for timing only."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n)
    means = np.stack([np.sin(2 * np.pi * t + 0.7 * k) for k in range(d)], axis=1)
    base = rng.normal(size=(n, d, d)) * 0.2
    covs = base @ base.transpose(0, 2, 1) + 0.05 * np.eye(d)
    return ReferenceTrajectoryDistribution(t[:, None], means, covs)


def _time_call(fn, reps: int, min_block_s: float = 2e-3) -> tuple[float, float]:
    """Per-call mean and std in ms; short calls are looped to fill a block."""
    fn()  # warmup
    start = time.perf_counter()
    fn()
    est = time.perf_counter() - start
    inner = max(1, int(np.ceil(min_block_s / max(est, 1e-9))))
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner * 1e3)
    return float(np.mean(samples)), float(np.std(samples))


def run_bench(
    sizes,
    reps: int = 5,
    output_dim: int = 2,
    lam: float = 0.1,
    length_scale: float = 0.125,
    seed: int = 0,
    multithread: bool = False,
) -> dict:
    """Per-size timings for classical adapt+predict and one null-space query."""
    sizes = list(sizes)
    cfg = KernelConfig(length_scale, output_dim)
    limit = (
        nullcontext()
        if multithread or threadpool_limits is None
        else threadpool_limits(limits=1)
    )
    rows = []
    with limit:
        for n in sizes:
            ref = synthetic_reference(n, output_dim, seed)
            model = kmp_mod.fit(ref, lam, cfg)
            s_star = np.array([0.37])
            vp = kmp_mod.ViaPoint(
                np.array([0.52]),
                np.full(output_dim, 0.5),
                1e-6 * np.eye(output_dim),
            )
            ref_target = NullSpaceReference(np.array([0.52]), np.full(output_dim, 0.5))

            def classical():
                adapted = kmp_mod.adapt_via_point(model, vp)
                return kmp_mod.predict(adapted, s_star)

            def nullspace():
                return ns_predict(model, s_star, [ref_target])

            c_mean, c_std = _time_call(classical, reps)
            n_mean, n_std = _time_call(nullspace, reps)
            rows.append(
                {
                    "n": n,
                    "classical_ms": {"mean": c_mean, "std": c_std},
                    "nullspace_ms": {"mean": n_mean, "std": n_std},
                }
            )

    logn = np.log([r["n"] for r in rows])
    slopes = {
        "classical": float(
            np.polyfit(logn, np.log([r["classical_ms"]["mean"] for r in rows]), 1)[0]
        ),
        "nullspace": float(
            np.polyfit(logn, np.log([r["nullspace_ms"]["mean"] for r in rows]), 1)[0]
        ),
    }
    speedups = {
        str(r["n"]): r["classical_ms"]["mean"] / r["nullspace_ms"]["mean"] for r in rows
    }
    return {
        "schema": "nskmp-bench/1",
        "output_dim": output_dim,
        "reps": reps,
        "single_threaded": not multithread and threadpool_limits is not None,
        "sizes": rows,
        "slopes": slopes,
        "speedup_classical_over_nullspace": speedups,
    }
