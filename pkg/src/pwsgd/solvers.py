"""The preconditioned weighted SGD iteration for p in {1, 2}, constrained and
unconstrained, plus the weighted randomized Kaczmarz and vanilla SGD baselines.

One solve is sequential; independent solves (trials, grid candidates) can run
concurrently because problems, preconditioners and sampling distributions are
immutable and every solve owns its RNG stream.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .leverage import (
    SamplingDistribution,
    row_norm_distribution,
    sample_epoch,
    sample_indices,
    uniform_distribution,
)
from .preconditioning import Preconditioner, identity_preconditioner
from .problems import L1Ball, RegressionProblem
from .projections import (
    project_l1_ball,
    project_l1_ball_weighted,
    prox_quadratic_l1_ball,
)

AVERAGING = ("mean_iterate", "last_iterate")
SAMPLING = ("iid", "epoch")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of one SGD solve.

    ``step_size`` is a positive float (a grid of candidates is handled by the
    benchmark harness, see :func:`pwsgd.bench.grid_search_stepsize`).
    ``averaging`` defaults per norm: the mean iterate is returned for p=1 and
    the last iterate for p=2.  ``checkpoint_every`` defaults to ceil(n/10),
    one epoch.  ``sampling`` selects i.i.d. draws (matching the convergence
    analysis) or the epoch protocol that redraws ceil(n/10) distinct indices
    without replacement at every epoch boundary.
    """

    p: int
    step_size: float
    max_iters: int
    f_mode: str = "full"
    batch_size: int = 1
    averaging: str = ""  # "" means "default for p"
    constraint: L1Ball | None = None
    seed: int = 0
    checkpoint_every: int = 0  # 0 means ceil(n/10)
    sampling: str = "iid"

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sampling not in SAMPLING:
            raise ValueError(f"sampling must be one of {SAMPLING}")
        if self.sampling == "epoch" and self.batch_size != 1:
            raise ValueError("epoch sampling supports batch_size=1 only")
        if self.averaging == "":
            object.__setattr__(
                self, "averaging", "mean_iterate" if self.p == 1 else "last_iterate"
            )
        if self.averaging not in AVERAGING:
            raise ValueError(f"averaging must be one of {AVERAGING}")

    def to_json(self) -> str:
        obj = {
            "p": self.p,
            "step_size": self.step_size,
            "max_iters": self.max_iters,
            "f_mode": self.f_mode,
            "batch_size": self.batch_size,
            "averaging": self.averaging,
            "constraint": (
                None if self.constraint is None else {"l1_ball": self.constraint.radius}
            ),
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "sampling": self.sampling,
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, s: str) -> "SolverConfig":
        obj = json.loads(s)
        cons = obj.get("constraint")
        constraint = None if cons is None else L1Ball(radius=float(cons["l1_ball"]))
        return cls(
            p=int(obj["p"]),
            step_size=float(obj["step_size"]),
            max_iters=int(obj["max_iters"]),
            f_mode=obj.get("f_mode", "full"),
            batch_size=int(obj.get("batch_size", 1)),
            averaging=obj.get("averaging", ""),
            constraint=constraint,
            seed=int(obj.get("seed", 0)),
            checkpoint_every=int(obj.get("checkpoint_every", 0)),
            sampling=obj.get("sampling", "iid"),
        )


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    elapsed_sec: float
    objective: float
    rel_obj_err: float = float("nan")
    rel_sol_l2: float = float("nan")
    rel_sol_pred: float = float("nan")


CSV_HEADER = "iter,elapsed_sec,obj,rel_obj_err,rel_sol_l2,rel_sol_pred"


@dataclass
class SolverTrace:
    """Per-checkpoint records of one solve plus the returned estimate.

    Relative solution errors are squared ratios ||x - x*||^2 / ||x*||^2 (l2)
    and ||A(x - x*)||^2 / ||A x*||^2 (prediction norm); the objective column
    is the unsquared ||Ax - b||_p.
    """

    checkpoints: list[Checkpoint] = field(default_factory=list)
    final_estimate: np.ndarray | None = None
    aborted: bool = False
    abort_reason: str = ""

    def __post_init__(self):
        iters = [c.iteration for c in self.checkpoints]
        if any(b <= a for a, b in zip(iters, iters[1:])):
            raise ValueError("checkpoint iterations must be strictly increasing")

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    def iterations_to(self, eps: float) -> float:
        """First checkpoint iteration with rel_obj_err <= eps (inf if never)."""
        for c in self.checkpoints:
            if np.isfinite(c.rel_obj_err) and c.rel_obj_err <= eps:
                return float(c.iteration)
        return float("inf")

    def time_to(self, eps: float) -> float:
        for c in self.checkpoints:
            if np.isfinite(c.rel_obj_err) and c.rel_obj_err <= eps:
                return float(c.elapsed_sec)
        return float("inf")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for c in self.checkpoints:
                fh.write(
                    f"{c.iteration},{c.elapsed_sec!r},{c.objective!r},"
                    f"{c.rel_obj_err!r},{c.rel_sol_l2!r},{c.rel_sol_pred!r}\n"
                )


def minibatch_gradient(
    x: np.ndarray,
    indices: np.ndarray,
    dist: SamplingDistribution,
    problem: RegressionProblem,
) -> np.ndarray:
    """Average of the per-row scaled (sub)gradients over the sampled rows.

    With one index this is the single-sample rule c_t A_row; averaging m rows
    keeps the estimator unbiased while shrinking its variance.
    """
    indices = np.atleast_1d(np.asarray(indices, dtype=int))
    A = problem.dense_A()
    rows = A[indices]
    r = rows @ x - problem.b[indices]
    pr = dist.probs[indices]
    if problem.p == 1:
        coef = np.sign(r) / pr
    else:
        coef = 2.0 * r / pr
    return (coef @ rows) / indices.size


def _prox_step(
    x: np.ndarray,
    g: np.ndarray,
    eta: float,
    precond: Preconditioner,
    constraint: L1Ball | None,
) -> np.ndarray:
    """argmin_{x' in Z} eta g . x' + 1/2 ||x - x'||_H^2."""
    z = x - eta * precond.apply_H_inv(g)
    if constraint is None:
        return z
    if precond.f_mode == "noco":
        return project_l1_ball(z, constraint.radius)
    if precond.f_mode == "diag":
        return project_l1_ball_weighted(z, precond.h_diag(), constraint.radius)
    return prox_quadratic_l1_ball(
        z,
        precond.apply_H,
        precond.h_spectral_norm(),
        constraint.radius,
        x_start=x,
    )


def constrained_step(
    x_t: np.ndarray,
    c_t: float,
    row: np.ndarray,
    eta: float,
    precond: Preconditioner,
    constraint: L1Ball | None,
) -> np.ndarray:
    """One (possibly constrained) update from the scaled sample gradient c_t row.

    Exact minimizer for the unconstrained case and for the l1 ball under an
    identity or diagonal metric; under a full metric the minimizer is computed
    by accelerated projected gradient to a 1e-10 duality gap.
    """
    return _prox_step(np.asarray(x_t, dtype=float), c_t * np.asarray(row), eta, precond, constraint)


def _resolve_constraint(
    problem: RegressionProblem, config: SolverConfig
) -> L1Ball | None:
    if config.constraint is not None and problem.constraint is not None:
        if config.constraint != problem.constraint:
            raise ValueError("problem and config disagree on the constraint set")
    return config.constraint or problem.constraint


class _IndexStream:
    """Feeds row indices either i.i.d. or per-epoch without replacement."""

    def __init__(self, dist, rng, mode: str, epoch_len: int, block: int = 4096):
        self.dist, self.rng, self.mode = dist, rng, mode
        self.epoch_len = epoch_len
        self.block = block
        self._buf = np.empty(0, dtype=int)
        self._pos = 0

    def take(self, k: int = 1) -> np.ndarray:
        while self._pos + k > self._buf.size:
            if self.mode == "iid":
                fresh = sample_indices(self.dist, self.block, self.rng)
            else:
                fresh = sample_epoch(self.dist, self.epoch_len, self.rng)
            self._buf = np.concatenate([self._buf[self._pos :], fresh])
            self._pos = 0
        out = self._buf[self._pos : self._pos + k]
        self._pos += k
        return out


def pwsgd_solve(
    problem: RegressionProblem,
    precond: Preconditioner,
    dist: SamplingDistribution,
    config: SolverConfig,
    *,
    x0: np.ndarray | None = None,
    reference: tuple[np.ndarray, float] | None = None,
    time_budget_sec: float | None = None,
    setup_time_sec: float = 0.0,
    on_iterate=None,
) -> SolverTrace:
    """Run the weighted, preconditioned SGD iteration.

    Each step samples a row index xi ~ p, forms the scaled residual
    coefficient c_t (sign(r)/p_xi for p=1, 2r/p_xi for p=2) and moves against
    c_t A_xi in the metric H = (F F^T)^-1; with a full preconditioner the
    unconstrained update costs two triangular solves.  Returns the mean
    iterate for p=1 and the last iterate for p=2 (per ``config.averaging``).

    ``reference`` is an optional (x*, f(x*)) pair enabling the relative-error
    columns of the trace.  A non-finite iterate aborts the solve and the
    trace is flagged (used by the step-size grid search to drop divergent
    candidates).  ``setup_time_sec`` is added to the elapsed column so that a
    preconditioning phase can be accounted at iteration 0.  ``on_iterate``,
    when given, is called as on_iterate(t, x_t) after every update
    (instrumentation for coupled-sequence checks).
    """
    A = problem.dense_A()
    n, d = A.shape
    if dist.n != n:
        raise ValueError("distribution size does not match the row count")
    if precond.dim != d:
        raise ValueError("preconditioner dimension does not match the column count")
    constraint = _resolve_constraint(problem, config)
    b = problem.b
    probs = dist.probs
    eta = float(config.step_size)
    T = int(config.max_iters)
    m = config.batch_size
    epoch_len = config.checkpoint_every or max(1, math.ceil(n / 10))

    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    if constraint is not None and not constraint.contains(x):
        raise ValueError("x0 violates the constraint set")

    if reference is not None:
        x_ref = np.asarray(reference[0], dtype=float)
        f_ref = float(reference[1])
        ax_ref = A @ x_ref
        ref_sol_sq = float(x_ref @ x_ref)
        ref_pred_sq = float(ax_ref @ ax_ref)
    rng = np.random.default_rng(config.seed)
    stream = _IndexStream(dist, rng, config.sampling, epoch_len)

    mean_mode = config.averaging == "mean_iterate"
    x_sum = np.zeros(d)
    t_done = 0  # completed updates accumulated into x_sum
    trace = SolverTrace()
    start = time.perf_counter()

    def estimate() -> np.ndarray:
        if mean_mode and t_done > 0:
            return x_sum / t_done
        return x

    def record(t: int) -> Checkpoint:
        est = estimate()
        obj = problem.objective(est)
        if reference is None:
            cp = Checkpoint(t, setup_time_sec + time.perf_counter() - start, obj)
        else:
            diff = est - x_ref
            pred = A @ est - ax_ref
            cp = Checkpoint(
                t,
                setup_time_sec + time.perf_counter() - start,
                obj,
                rel_obj_err=(obj - f_ref) / f_ref if f_ref > 0 else float("nan"),
                rel_sol_l2=float(diff @ diff) / ref_sol_sq if ref_sol_sq > 0 else float("nan"),
                rel_sol_pred=float(pred @ pred) / ref_pred_sq if ref_pred_sq > 0 else float("nan"),
            )
        trace.checkpoints.append(cp)
        return cp

    record(0)
    single = m == 1
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, T + 1):
            if single:
                idx = int(stream.take(1)[0])
                a = A[idx]
                r = float(a @ x) - b[idx]
                if not np.isfinite(r):
                    trace.aborted = True
                    trace.abort_reason = f"non-finite residual at iteration {t}"
                    break
                if problem.p == 1:
                    c = float(np.sign(r)) / probs[idx]
                else:
                    c = 2.0 * r / probs[idx]
                g = c * a
            else:
                idxs = stream.take(m)
                g = minibatch_gradient(x, idxs, dist, problem)
                if not np.all(np.isfinite(g)):
                    trace.aborted = True
                    trace.abort_reason = f"non-finite gradient at iteration {t}"
                    break
            x = _prox_step(x, g, eta, precond, constraint)
            if mean_mode:
                x_sum += x
            t_done = t
            if on_iterate is not None:
                on_iterate(t, x)
            if t % epoch_len == 0 or t == T:
                cp = record(t)
                if not np.isfinite(cp.objective):
                    trace.aborted = True
                    trace.abort_reason = f"non-finite objective at iteration {t}"
                    break
                if (
                    time_budget_sec is not None
                    and cp.elapsed_sec - setup_time_sec >= time_budget_sec
                ):
                    break

    trace.final_estimate = estimate()
    return trace


def vanilla_sgd_solve(
    problem: RegressionProblem,
    config: SolverConfig,
    *,
    x0: np.ndarray | None = None,
    reference=None,
    time_budget_sec: float | None = None,
) -> SolverTrace:
    """Uniform-sampling SGD without preconditioning (F = R = I)."""
    cfg = replace(config, f_mode="noco")
    return pwsgd_solve(
        problem,
        identity_preconditioner(problem.d),
        uniform_distribution(problem.n),
        cfg,
        x0=x0,
        reference=reference,
        time_budget_sec=time_budget_sec,
    )


def weighted_rk_solve(
    problem: RegressionProblem,
    config: SolverConfig,
    *,
    x0: np.ndarray | None = None,
    reference=None,
    time_budget_sec: float | None = None,
) -> SolverTrace:
    """Weighted randomized Kaczmarz for least squares.

    Identical, iterate for iterate, to the preconditioner-free SGD iteration
    with row-norm sampling p_i = ||A_i||_2^2 / ||A||_F^2 (that is what the
    method is), so it is implemented exactly that way.
    """
    if config.p != 2:
        raise ValueError("weighted randomized Kaczmarz applies to p=2 only")
    cfg = replace(config, f_mode="noco")
    return pwsgd_solve(
        problem,
        identity_preconditioner(problem.d),
        row_norm_distribution(problem.A, p=2),
        cfg,
        x0=x0,
        reference=reference,
        time_budget_sec=time_budget_sec,
    )
