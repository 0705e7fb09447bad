"""Command-line entry points: gen-data, solve, bench, sketch-check.

The PWSGD_SEED environment variable, when set, overrides every seed coming
from flags or spec files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .bench import ExperimentSpec, run_experiment
from .datasets import DatasetRecipe, generate, load_csv_dataset
from .matio import write_csv_matrix
from .preconditioning import Preconditioner, compute_R, conditioning_bound
from .problems import L1Ball, RegressionProblem
from .leverage import approx_scores_l1, approx_scores_l2, default_l2_probe_cols, exact_scores
from .sketching import SketchSpec, default_sketch_rows, distortion_estimate
from .solvers import SolverConfig, pwsgd_solve


def _env_seed(default: int) -> int:
    val = os.environ.get("PWSGD_SEED")
    return int(val) if val else default


def cmd_gen_data(args) -> int:
    recipe = DatasetRecipe.from_json(Path(args.recipe).read_text())
    recipe = replace(recipe, seed=_env_seed(recipe.seed))
    A, b, x_true = generate(recipe)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv_matrix(out / "A.csv", A)
    write_csv_matrix(out / "b.csv", b[:, None])
    if x_true is not None:
        write_csv_matrix(out / "x_true.csv", x_true[:, None])
    (out / "meta.json").write_text(recipe.to_json())
    print(json.dumps({"rows": int(A.shape[0]), "cols": int(A.shape[1]), "dir": str(out)}))
    return 0


def _load_problem(args) -> RegressionProblem:
    if args.data_dir:
        d = Path(args.data_dir)
        from .matio import read_csv_matrix

        A = read_csv_matrix(d / "A.csv")
        b = read_csv_matrix(d / "b.csv").ravel()
    else:
        A, b = load_csv_dataset(args.csv, args.response_column)
    constraint = L1Ball(args.l1_radius) if args.l1_radius else None
    return RegressionProblem(A=A, b=b, p=args.p, constraint=constraint)


def cmd_solve(args) -> int:
    problem = _load_problem(args)
    seed = _env_seed(args.seed)
    kind = args.sketch
    rows = args.sketch_rows or default_sketch_rows(kind, problem.d)
    spec = SketchSpec(kind, rows, seed=seed)
    R, _ = compute_R(problem.A, spec)
    precond = Preconditioner(R=R, f_mode=args.f_mode)
    if args.scores == "exact":
        dist = exact_scores(problem.A, R, problem.p)
    elif problem.p == 2:
        dist = approx_scores_l2(problem.A, R, default_l2_probe_cols(problem.n), seed)
    else:
        dist = approx_scores_l1(problem.A, R, seed=seed)
    config = SolverConfig(
        p=problem.p,
        step_size=args.eta,
        max_iters=args.iters,
        f_mode=args.f_mode,
        batch_size=args.batch,
        seed=seed,
        sampling=args.sampling,
    )
    trace = pwsgd_solve(problem, precond, dist, config)
    result = {
        "objective": trace.final.objective,
        "iterations": trace.final.iteration,
        "elapsed_sec": trace.final.elapsed_sec,
        "aborted": trace.aborted,
        "estimate": [float(v) for v in trace.final_estimate],
    }
    if args.trace:
        trace.to_csv(args.trace)
        result["trace"] = args.trace
    print(json.dumps(result))
    return 0 if not trace.aborted else 1


def cmd_bench(args) -> int:
    spec = ExperimentSpec.from_json(Path(args.spec).read_text())
    if os.environ.get("PWSGD_SEED"):
        spec = replace(spec, seed=_env_seed(spec.seed))
    if args.jobs:
        spec = replace(spec, jobs=args.jobs)
    if args.output:
        spec = replace(spec, output_dir=args.output)
    summary = run_experiment(spec)
    summary.pop("_traces", None)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sketch_check(args) -> int:
    if args.data_dir:
        from .matio import read_csv_matrix

        A = read_csv_matrix(Path(args.data_dir) / "A.csv")
    else:
        A, _ = load_csv_dataset(args.csv, args.response_column)
    seed = _env_seed(args.seed)
    rows = args.sketch_rows or default_sketch_rows(args.sketch, A.shape[1])
    spec = SketchSpec(args.sketch, rows, seed=seed)
    sigma, kappa = distortion_estimate(spec, A, args.dirs, seed + 1)
    p = spec.target_norm
    report = {
        "kind": spec.kind,
        "sketch_rows": rows,
        "target_norm": p,
        "sigma_S": sigma,
        "kappa_S": kappa,
        "conditioning_bound": conditioning_bound(p, kappa, A.shape[1], rows),
    }
    print(json.dumps(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwsgd", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="materialize a dataset recipe to CSV files")
    g.add_argument("recipe", help="DatasetRecipe JSON file")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("solve", help="run one preconditioned weighted SGD solve")
    s.add_argument("--data-dir", default="")
    s.add_argument("--csv", default="")
    s.add_argument("--response-column", type=int, default=0)
    s.add_argument("--p", type=int, default=2, choices=(1, 2))
    s.add_argument("--f-mode", default="full", choices=("full", "diag", "noco"))
    s.add_argument("--scores", default="exact", choices=("exact", "approx"))
    s.add_argument("--sketch", default="gaussian")
    s.add_argument("--sketch-rows", type=int, default=0)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--iters", type=int, required=True)
    s.add_argument("--batch", type=int, default=1)
    s.add_argument("--sampling", default="iid", choices=("iid", "epoch"))
    s.add_argument("--l1-radius", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", default="", help="write the checkpoint trace CSV here")
    s.set_defaults(fn=cmd_solve)

    b = sub.add_parser("bench", help="run an ExperimentSpec JSON")
    b.add_argument("spec")
    b.add_argument("-o", "--output", default="")
    b.add_argument("--jobs", type=int, default=0, help="max parallel trials")
    b.set_defaults(fn=cmd_bench)

    c = sub.add_parser("sketch-check", help="empirical sketch distortion report")
    c.add_argument("--data-dir", default="")
    c.add_argument("--csv", default="")
    c.add_argument("--response-column", type=int, default=0)
    c.add_argument("--sketch", default="gaussian")
    c.add_argument("--sketch-rows", type=int, default=0)
    c.add_argument("--dirs", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_sketch_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
