"""Command-line interface.

Subcommands: gen-data, train, adapt, bench, experiment.  Reports go to stdout
as JSON; errors go to stderr as JSON with a machine-parsable code.  Exit
codes: 0 ok, 2 configuration error, 3 numerical failure, 4 budget exhausted
(experiment level; partial results are still written).  The NSKMP_OUT
environment variable supplies the default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import kmp as kmp_mod
from . import promp as promp_mod
from . import serialize
from .bench import run_bench
from .datasets import make_handover_demos, make_letter_a_demos
from .experiments import (
    Experiment1Config,
    Experiment2Config,
    run_experiment1,
    run_experiment2,
)
from .kernel import KernelConfig
from .kmp import FactorizationError
from .nullspace import GridNsPredictor, NullSpaceReference
from .planner import Trajectory, trajectory_csv
from .refdist import (
    build_reference,
    demonstrations_csv,
    em_fit,
    load_demonstrations,
    log_likelihood,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET = 4


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


def _out_dir() -> Path:
    return Path(os.environ.get("NSKMP_OUT", "."))


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _fail(code: str, message: str, exit_code: int) -> int:
    json.dump({"error": code, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    return exit_code


def _write_or_check(path: Path, blob: bytes, check: bool) -> None:
    if check:
        if not path.exists():
            raise CheckFailed(f"{path}: missing")
        if path.read_bytes() != blob:
            raise CheckFailed(f"{path}: contents differ")
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)


def cmd_gen_data(args) -> int:
    if args.kind == "letterA":
        demos = make_letter_a_demos(args.seed)
    else:
        demos = make_handover_demos(args.seed)
    out = Path(args.out) if args.out else _out_dir() / f"{args.kind}_demos.csv"
    _write_or_check(out, demonstrations_csv(demos).encode(), args.check)
    _emit({"written": str(out), "demos": len(demos), "checked": args.check})
    return EXIT_OK


def cmd_train(args) -> int:
    demos = load_demonstrations(args.data)
    i_dim = demos[0].inputs.shape[1]
    d_dim = demos[0].outputs.shape[1]
    summary = {"method": args.method, "demos": len(demos), "input_dim": i_dim, "output_dim": d_dim}

    if args.method == "promp":
        model = promp_mod.fit_promp(demos, args.basis)
        t = np.concatenate([d.inputs[:, 0] for d in demos])
        x = np.vstack([d.outputs for d in demos])
        pred = promp_mod.predict_mean_many(model, t)
        summary["rms_residual"] = float(np.sqrt(np.mean((pred - x) ** 2)))
        blob = serialize.dumps_promp(model)
    else:
        gmm = em_fit(demos, args.components, args.seed)
        joint = np.vstack([d.joint for d in demos])
        summary["log_likelihood"] = log_likelihood(gmm, joint)
        if args.method == "gmm":
            blob = serialize.dumps_gmm(gmm, i_dim)
        else:
            if i_dim == 1:
                queries = np.linspace(0.0, 1.0, args.ref_points)[:, None]
            else:
                lo = np.vstack([d.inputs for d in demos]).min(axis=0)
                hi = np.vstack([d.inputs for d in demos]).max(axis=0)
                queries = lo + (hi - lo) * np.linspace(0, 1, args.ref_points)[:, None]
            ref = build_reference(gmm, queries)
            model = kmp_mod.fit(ref, args.lam, KernelConfig(args.length_scale, d_dim))
            pred = kmp_mod.predict_many(model, ref.inputs)
            summary["rms_residual"] = float(np.sqrt(np.mean((pred - ref.means) ** 2)))
            summary["ref_points"] = args.ref_points
            blob = serialize.dumps_kmp(model)

    out = Path(args.out) if args.out else _out_dir() / f"{args.method}.model"
    _write_or_check(out, blob, args.check)
    summary["written"] = str(out)
    summary["checked"] = args.check
    _emit(summary)
    return EXIT_OK


def _parse_pair(text: str, what: str):
    parts = text.split(":")
    if len(parts) < 2:
        raise ConfigError(f"malformed {what} {text!r}; expected 'input:values[:scale]'")
    s = np.array([float(v) for v in parts[0].split(",")])
    vals = np.array([float(v) for v in parts[1].split(",")])
    scale = float(parts[2]) if len(parts) > 2 else 1e-6
    return s, vals, scale


def cmd_adapt(args) -> int:
    kind, model = serialize.load(args.model)
    if kind == "gmm":
        raise ConfigError("adapt requires a kmp or promp model")

    if args.inputs:
        demos = load_demonstrations(args.inputs)
        queries = np.vstack([d.inputs for d in demos])
    else:
        queries = np.linspace(0.0, 1.0, args.grid)[:, None]

    timing: dict[str, float] = {}
    if kind == "promp":
        if queries.shape[1] != 1:
            raise ConfigError("promp models take one-dimensional time inputs")
        m = model
        t0 = time.perf_counter()
        for spec_text in args.via or []:
            s, mean, scale = _parse_pair(spec_text, "via-point")
            m = promp_mod.condition(m, float(s[0]), mean, scale * np.eye(m.output_dim))
        points = promp_mod.predict_mean_many(m, queries[:, 0])
        timing["condition_and_predict_ms"] = (time.perf_counter() - t0) * 1e3
        if args.ns:
            raise ConfigError("null-space references apply to kmp models only")
    else:
        if args.via:
            m = model
            t0 = time.perf_counter()
            for spec_text in args.via:
                s, mean, scale = _parse_pair(spec_text, "via-point")
                m = kmp_mod.adapt_via_point(
                    m, kmp_mod.ViaPoint(s, mean, scale * np.eye(m.output_dim))
                )
            points = kmp_mod.predict_many(m, queries)
            timing["refit_and_predict_ms"] = (time.perf_counter() - t0) * 1e3
        else:
            t0 = time.perf_counter()
            predictor = GridNsPredictor(model, queries)
            timing["setup_ms"] = (time.perf_counter() - t0) * 1e3
            refs = [
                NullSpaceReference(*_parse_pair(spec_text, "reference")[:2])
                for spec_text in (args.ns or [])
            ]
            t0 = time.perf_counter()
            points = predictor.trajectory(refs)
            timing["ns_prediction_ms"] = (time.perf_counter() - t0) * 1e3

    traj = Trajectory(queries, points)
    out = Path(args.out) if args.out else _out_dir() / "trajectory.csv"
    _write_or_check(out, trajectory_csv(traj), args.check)
    _emit({"written": str(out), "queries": len(traj), "timing_ms": timing})
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    result = run_bench(
        sizes,
        reps=args.reps,
        output_dim=args.output_dim,
        lam=args.lam,
        length_scale=args.length_scale,
        seed=args.seed,
        multithread=args.multithread,
    )
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _emit(result)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.which == 1:
        cfg = Experiment1Config(
            trials=args.trials,
            seed=args.seed,
            n_via=args.n_via,
            budget=args.budget,
            sampler_kind=args.sampler,
            xi_bound=args.xi_range,
            jobs=args.jobs,
        )
        result = run_experiment1(cfg)
    else:
        cfg = Experiment2Config(
            trials=args.trials,
            seed=args.seed,
            budget=args.budget,
            sampler_kind=args.sampler,
            xi_bound=args.xi_range,
            jobs=args.jobs,
        )
        result = run_experiment2(cfg)

    out_dir = Path(args.out) if args.out else _out_dir() / f"experiment{args.which}"
    report_blob = (json.dumps(result.report, indent=2, sort_keys=True) + "\n").encode()
    _write_or_check(out_dir / "report.json", report_blob, args.check)
    for rel, blob in sorted(result.artifacts.items()):
        _write_or_check(out_dir / rel, blob, args.check)
    if not args.check:  # timing is run-specific, never part of --check
        (out_dir / "timing.json").write_text(
            json.dumps(result.timing, indent=2, sort_keys=True) + "\n"
        )

    _emit(
        {
            "written": str(out_dir),
            "checked": args.check,
            "aggregates": result.report["aggregates"],
            "timing_aggregates": result.timing["aggregates"],
        }
    )
    failed = [
        t["trial"]
        for t in result.report["trials"]
        if not all(m["success"] for m in t["methods"].values())
    ]
    if failed:
        return _fail(
            "budget_exhausted",
            f"{len(failed)} trial(s) exhausted the budget: {failed}",
            EXIT_BUDGET,
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nskmp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic demonstration CSVs")
    p.add_argument("--kind", choices=["letterA", "handover"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--check", action="store_true", help="verify existing output instead of writing")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="fit a model from a demonstration CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["kmp", "promp", "gmm"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--length-scale", type=float, default=0.125)
    p.add_argument("--components", type=int, default=8)
    p.add_argument("--basis", type=int, default=20)
    p.add_argument("--ref-points", type=int, default=100)
    p.add_argument("--out")
    p.add_argument("--check", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("adapt", help="predict or adapt a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=int, default=100, help="time grid size for 1-d inputs")
    p.add_argument("--inputs", help="CSV of query inputs (demo CSV format)")
    p.add_argument("--ns", action="append", help="null-space reference 'input:target'")
    p.add_argument("--via", action="append", help="via-point 'input:mean[:cov_scale]'")
    p.add_argument("--out")
    p.add_argument("--check", action="store_true")
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("bench", help="timing benchmark over model sizes")
    p.add_argument("--sizes", default="50,100,200,400,800")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--output-dim", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--length-scale", type=float, default=0.125)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multithread", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("experiment", help="run a replanning experiment")
    p.add_argument("--which", type=int, choices=[1, 2], required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--sampler", choices=["tpe", "random"], default="tpe")
    p.add_argument("--n-via", type=int, choices=[1, 2], default=1)
    p.add_argument("--xi-range", type=float, default=None, help="symmetric secondary-target bound")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--check", action="store_true")
    p.set_defaults(fn=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "experiment":
        if args.trials is None:
            args.trials = 40 if args.which == 1 else 20
        if args.xi_range is None:
            args.xi_range = 1000.0 if args.which == 1 else 2000.0
    try:
        return args.fn(args)
    except CheckFailed as exc:
        return _fail("check_failed", str(exc), 1)
    except (ConfigError, ValueError, FileNotFoundError, IndexError) as exc:
        return _fail("config_error", str(exc), EXIT_CONFIG)
    except (FactorizationError, np.linalg.LinAlgError) as exc:
        return _fail("numerical_failure", str(exc), EXIT_NUMERICAL)


if __name__ == "__main__":
    sys.exit(main())
