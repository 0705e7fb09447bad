"""Experiment engine: builds solvers from declarative recipes, runs the
epoch/trial protocol, tunes step sizes, and emits time-accuracy traces.

Trials run the stochastic phase with independent seeds over shared immutable
data; with ``jobs > 1`` the (solver, trial) grid is distributed over worker
processes.  Outputs are CSV traces (per trial and aggregated) plus a JSON
summary with iterations-to-target and time-to-target per solver.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datasets import DatasetRecipe, generate
from .errors import GridExhaustedError
from .leverage import (
    SamplingDistribution,
    approx_scores_l1,
    approx_scores_l2,
    default_l2_probe_cols,
    exact_scores,
    row_norm_distribution,
    uniform_distribution,
)
from .preconditioning import Preconditioner, compute_R, identity_preconditioner
from .problems import L1Ball, RegressionProblem
from .rla import constrained_ls_solve, direct_ls_solve, irls_l1_solve
from .sketching import SketchSpec, default_sketch_rows
from .solvers import SolverConfig, SolverTrace, pwsgd_solve
from .theory import theory_stepsize_l1, theory_stepsize_l2

METHODS = ("pwsgd", "weighted_rk", "vanilla_sgd")


@dataclass(frozen=True)
class SolverRecipe:
    """One solver entry of an experiment: method, preconditioner and tuning.

    ``step_size`` is a float, "theory" (step from the convergence analysis at
    the experiment's target accuracy) or "grid" (log-grid search, tuned once
    on the first trial's preconditioner and reused).
    """

    name: str
    method: str = "pwsgd"
    f_mode: str = "full"
    scores: str = "exact"  # exact | approx
    sketch_kind: str = "gaussian"
    sketch_rows: int = 0  # 0 -> default for the kind
    step_size: float | str = "theory"
    batch_size: int = 1
    max_epochs: int = 200
    grid: tuple[float, ...] = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if isinstance(self.step_size, str) and self.step_size not in ("theory", "grid"):
            raise ValueError("step_size must be a float, 'theory' or 'grid'")


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetRecipe
    solvers: tuple[SolverRecipe, ...]
    p: int = 2
    trials: int = 20
    time_budget_sec: float = 30.0
    target_eps: float = 0.1
    output_dir: str = ""  # empty: keep results in memory only
    seed: int = 0
    sampling: str = "epoch"
    constraint_radius: float = 0.0  # 0: unconstrained
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.solvers:
            raise ValueError("at least one solver is required")
        object.__setattr__(self, "solvers", tuple(self.solvers))

    def to_json(self) -> str:
        obj = asdict(self)
        obj["dataset"] = json.loads(self.dataset.to_json())
        obj["solvers"] = [asdict(s) for s in self.solvers]
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, s: str) -> "ExperimentSpec":
        obj = json.loads(s)
        obj["dataset"] = DatasetRecipe(**obj["dataset"])
        obj["solvers"] = tuple(
            SolverRecipe(**{**r, "grid": tuple(r.get("grid", ()))}) for r in obj["solvers"]
        )
        return cls(**obj)


def _derive_seed(base: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=base, spawn_key=tuple(key))
    return int(ss.generate_state(1)[0])


def reference_solution(problem: RegressionProblem) -> tuple[np.ndarray, float]:
    """High-precision optimum used for relative-error reporting."""
    if problem.p == 2:
        if problem.constraint is None:
            x = direct_ls_solve(problem.dense_A(), problem.b)
        else:
            x = constrained_ls_solve(problem.dense_A(), problem.b, problem.constraint)
    else:
        x = irls_l1_solve(
            problem.dense_A(), problem.b, tol=1e-10, constraint=problem.constraint
        )
    return x, problem.objective(x)


def build_solver_inputs(
    problem: RegressionProblem,
    recipe: SolverRecipe,
    trial_seed: int,
) -> tuple[Preconditioner, SamplingDistribution, float]:
    """Preconditioner and sampling distribution per the recipe; returns setup seconds."""
    t0 = time.perf_counter()
    if recipe.method == "pwsgd":
        rows = recipe.sketch_rows or default_sketch_rows(recipe.sketch_kind, problem.d)
        spec = SketchSpec(recipe.sketch_kind, rows, seed=_derive_seed(trial_seed, 1))
        R, _ = compute_R(problem.A, spec)
        precond = Preconditioner(R=R, f_mode=recipe.f_mode)
        if recipe.scores == "exact":
            dist = exact_scores(problem.A, R, problem.p)
        elif problem.p == 2:
            dist = approx_scores_l2(
                problem.A, R, default_l2_probe_cols(problem.n), _derive_seed(trial_seed, 2)
            )
        else:
            dist = approx_scores_l1(problem.A, R, seed=_derive_seed(trial_seed, 2))
    elif recipe.method == "weighted_rk":
        if problem.p != 2:
            raise ValueError("weighted_rk requires p=2")
        precond = identity_preconditioner(problem.d)
        dist = row_norm_distribution(problem.A, p=2)
    else:  # vanilla_sgd
        precond = identity_preconditioner(problem.d)
        dist = uniform_distribution(problem.n)
    return precond, dist, time.perf_counter() - t0


def _resolve_step(
    problem: RegressionProblem,
    precond: Preconditioner,
    dist: SamplingDistribution,
    recipe: SolverRecipe,
    target_eps: float,
    x_ref: np.ndarray,
    cap_iters: int,
) -> tuple[float, int]:
    """(eta, max_iters) for one run; theory mode derives both from the target."""
    if isinstance(recipe.step_size, float):
        return recipe.step_size, cap_iters
    if recipe.step_size != "theory":
        raise ValueError("grid step sizes are resolved by run_experiment")
    if problem.p == 2:
        eta, t_theory = theory_stepsize_l2(
            problem.dense_A(), problem.b, precond, dist, target_eps, x_ref
        )
        return eta, min(t_theory, cap_iters)
    eta = theory_stepsize_l1(
        problem.dense_A(), problem.b, precond, dist, None, x_ref, cap_iters
    )
    return eta, cap_iters


def default_step_grid(center: float, decades: float = 6.0, num: int = 20) -> np.ndarray:
    """Logarithmic grid of ``num`` candidates spanning ``decades`` around center."""
    lo = math.log10(center) - decades / 2.0
    return np.logspace(lo, lo + decades, num)


def grid_search_stepsize(
    run_candidate: Callable[[float, float], SolverTrace],
    grid: Sequence[float],
    time_budget_sec: float,
) -> tuple[float, dict[float, float]]:
    """Run each candidate step with the given per-candidate budget.

    Returns the argmin of the final relative objective error (falling back to
    the raw objective when no reference is attached), with ties broken toward
    the smaller step.  Diverged candidates are excluded; if every candidate
    diverged a :class:`GridExhaustedError` is raised.
    """
    if len(grid) == 0:
        raise ValueError("empty step-size grid")
    errors: dict[float, float] = {}
    for eta in grid:
        trace = run_candidate(float(eta), time_budget_sec)
        if trace.aborted:
            errors[float(eta)] = float("inf")
            continue
        final = trace.final
        err = final.rel_obj_err if np.isfinite(final.rel_obj_err) else final.objective
        errors[float(eta)] = err if np.isfinite(err) else float("inf")
    valid = [(e, eta) for eta, e in errors.items() if np.isfinite(e)]
    if not valid:
        raise GridExhaustedError("every step-size candidate diverged")
    _, best = min(valid)
    return best, errors


def _run_single_trial(args) -> tuple[int, int, SolverTrace]:
    (problem, recipe, spec, x_ref, f_ref, si, trial, eta_override) = args
    trial_seed = _derive_seed(spec.seed, si, trial)
    precond, dist, setup = build_solver_inputs(problem, recipe, trial_seed)
    epoch_len = max(1, math.ceil(problem.n / 10))
    cap = recipe.max_epochs * epoch_len
    if eta_override is not None:
        eta, max_iters = eta_override, cap
    else:
        eta, max_iters = _resolve_step(
            problem, precond, dist, recipe, spec.target_eps, x_ref, cap
        )
    config = SolverConfig(
        p=spec.p,
        step_size=eta,
        max_iters=max_iters,
        f_mode=recipe.f_mode,
        batch_size=recipe.batch_size,
        seed=_derive_seed(trial_seed, 3),
        sampling=spec.sampling,
    )
    trace = pwsgd_solve(
        problem,
        precond,
        dist,
        config,
        reference=(x_ref, f_ref),
        time_budget_sec=spec.time_budget_sec,
        setup_time_sec=setup,
    )
    return si, trial, trace


def _aligned_checkpoints(traces: list[SolverTrace]) -> list[list]:
    """Checkpoint tuples shared by every trace (same iteration grid)."""
    if not traces:
        return []
    rows = []
    for cps in zip(*(t.checkpoints for t in traces)):
        iters = {c.iteration for c in cps}
        if len(iters) > 1:
            break
        rows.append(list(cps))
    return rows


def mean_trace_rows(traces: list[SolverTrace]) -> list[dict]:
    """Per-checkpoint mean/stderr of the relative objective error and time."""
    rows = []
    for cps in _aligned_checkpoints(traces):
        errs = np.array([c.rel_obj_err for c in cps], dtype=float)
        times = np.array([c.elapsed_sec for c in cps], dtype=float)
        k = len(cps)
        stderr = float(np.std(errs, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
        rows.append(
            {
                "iter": cps[0].iteration,
                "mean_elapsed_sec": float(times.mean()),
                "mean_rel_obj_err": float(errs.mean()),
                "stderr_rel_obj_err": stderr,
            }
        )
    return rows


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run every solver for every trial; aggregate and optionally write files.

    Reproducible: identical spec (and seed) produces identical traces and
    CSVs up to the wall-clock columns.  Aborted (diverged) trials are
    excluded from aggregates and flagged in the summary.
    """
    A, b, _ = generate(spec.dataset)
    constraint = L1Ball(spec.constraint_radius) if spec.constraint_radius else None
    problem = RegressionProblem(A=A, b=b, p=spec.p, constraint=constraint)
    x_ref, f_ref = reference_solution(problem)

    # resolve "grid" step sizes once per solver, on the first trial's inputs
    eta_overrides: dict[int, float | None] = {}
    for si, recipe in enumerate(spec.solvers):
        if recipe.step_size == "grid":
            trial_seed = _derive_seed(spec.seed, si, 0)
            precond, dist, _ = build_solver_inputs(problem, recipe, trial_seed)
            epoch_len = max(1, math.ceil(problem.n / 10))
            cap = recipe.max_epochs * epoch_len
            grid = (
                np.asarray(recipe.grid, dtype=float)
                if recipe.grid
                else default_step_grid(1.0 / max(problem.n, 1))
            )

            def run_candidate(eta: float, budget: float, _p=precond, _d=dist) -> SolverTrace:
                cfg = SolverConfig(
                    p=spec.p,
                    step_size=eta,
                    max_iters=cap,
                    f_mode=recipe.f_mode,
                    batch_size=recipe.batch_size,
                    seed=_derive_seed(spec.seed, si, 999),
                    sampling=spec.sampling,
                )
                return pwsgd_solve(
                    problem, _p, _d, cfg, reference=(x_ref, f_ref), time_budget_sec=budget
                )

            best, _ = grid_search_stepsize(
                run_candidate, grid, spec.time_budget_sec / max(len(grid), 1)
            )
            eta_overrides[si] = best
        else:
            eta_overrides[si] = None

    tasks = [
        (problem, recipe, spec, x_ref, f_ref, si, trial, eta_overrides[si])
        for si, recipe in enumerate(spec.solvers)
        for trial in range(spec.trials)
    ]
    results: dict[int, dict[int, SolverTrace]] = {si: {} for si in range(len(spec.solvers))}
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for si, trial, trace in pool.map(_run_single_trial, tasks):
                results[si][trial] = trace
    else:
        for task in tasks:
            si, trial, trace = _run_single_trial(task)
            results[si][trial] = trace

    out = Path(spec.output_dir) if spec.output_dir else None
    summary: dict = {
        "target_eps": spec.target_eps,
        "p": spec.p,
        "n": problem.n,
        "d": problem.d,
        "f_ref": f_ref,
        "solvers": {},
    }
    traces_by_name: dict[str, list[SolverTrace]] = {}
    for si, recipe in enumerate(spec.solvers):
        traces = [results[si][t] for t in sorted(results[si])]
        ok = [t for t in traces if not t.aborted]
        iters_hit = [t.iterations_to(spec.target_eps) for t in ok]
        times_hit = [t.time_to(spec.target_eps) for t in ok]
        entry = {
            "trials": len(traces),
            "aborted_trials": sum(t.aborted for t in traces),
            "step_size": eta_overrides[si],
            "iterations_to_target": iters_hit,
            "time_to_target": times_hit,
            "median_iterations_to_target": float(np.median(iters_hit)) if iters_hit else None,
            "median_time_to_target": float(np.median(times_hit)) if times_hit else None,
            "final_rel_obj_err": [
                t.final.rel_obj_err for t in ok
            ],
        }
        summary["solvers"][recipe.name] = entry
        traces_by_name[recipe.name] = traces
        if out is not None:
            sdir = out / recipe.name
            sdir.mkdir(parents=True, exist_ok=True)
            for trial, trace in enumerate(traces):
                trace.to_csv(sdir / f"trial{trial:03d}.csv")
            with open(sdir / "mean.csv", "w", encoding="utf-8") as fh:
                fh.write("iter,mean_elapsed_sec,mean_rel_obj_err,stderr_rel_obj_err\n")
                for row in mean_trace_rows(ok):
                    fh.write(
                        f"{row['iter']},{row['mean_elapsed_sec']!r},"
                        f"{row['mean_rel_obj_err']!r},{row['stderr_rel_obj_err']!r}\n"
                    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
    summary["_traces"] = traces_by_name
    return summary


def run_condition_sweep(
    base: DatasetRecipe,
    kappa_bar_sq_grid: Sequence[float],
    solvers: Sequence[SolverRecipe],
    *,
    trials: int = 20,
    target_eps: float = 0.1,
    seed: int = 0,
    sampling: str = "iid",
    time_budget_sec: float = 120.0,
) -> dict[str, list[tuple[float, float]]]:
    """Iterations-to-target per solver across a conditioning sweep.

    Returns, per solver name, a list of (kappa_bar_sq^2, median iterations)
    pairs, one per sweep point: the x axis is the squared target so it matches
    the fourth-power scaling the sweep is designed around.
    """
    curves: dict[str, list[tuple[float, float]]] = {s.name: [] for s in solvers}
    for kap in kappa_bar_sq_grid:
        recipe = replace(base, kappa_bar_sq=float(kap))
        spec = ExperimentSpec(
            dataset=recipe,
            solvers=tuple(solvers),
            p=2,
            trials=trials,
            target_eps=target_eps,
            seed=seed,
            sampling=sampling,
            time_budget_sec=time_budget_sec,
        )
        summary = run_experiment(spec)
        for s in solvers:
            med = summary["solvers"][s.name]["median_iterations_to_target"]
            curves[s.name].append((float(kap) ** 2, float(med)))
    return curves


def emit_plot_data(
    data,
    mode: str,
    path=None,
) -> tuple[list[tuple], list[str]]:
    """Long-format plotting rows (solver, x_value, mean_y, stderr_y).

    ``mode`` selects the x axis: "iter_accuracy" and "time_accuracy" consume
    a dict of solver name -> list of traces; "cond_sweep" consumes the output
    of :func:`run_condition_sweep`.  Nonpositive y values are kept but
    reported in the returned warning list (they would vanish on a log axis).
    """
    rows: list[tuple] = []
    warnings: list[str] = []
    if mode in ("iter_accuracy", "time_accuracy"):
        if not data:
            raise ValueError("empty trace set")
        for name, traces in data.items():
            ok = [t for t in traces if not t.aborted]
            for cps in _aligned_checkpoints(ok):
                ys = np.array([c.rel_obj_err for c in cps], dtype=float)
                k = len(cps)
                stderr = float(np.std(ys, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
                if mode == "iter_accuracy":
                    x = float(cps[0].iteration)
                else:
                    x = float(np.mean([c.elapsed_sec for c in cps]))
                y = float(ys.mean())
                if y <= 0:
                    warnings.append(f"{name}: nonpositive mean y={y} at x={x}")
                rows.append((name, x, y, stderr))
    elif mode == "cond_sweep":
        if not data:
            raise ValueError("empty sweep set")
        for name, pairs in data.items():
            for x, y in pairs:
                if not np.isfinite(y) or y <= 0:
                    warnings.append(f"{name}: unplottable iterations {y} at x={x}")
                rows.append((name, float(x), float(y), 0.0))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("solver,x_value,mean_y,stderr_y\n")
            for name, x, y, se in rows:
                fh.write(f"{name},{x!r},{y!r},{se!r}\n")
    return rows, warnings
