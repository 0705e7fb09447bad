"""Sample-and-solve (RLA) baseline: subsample rows by leverage probabilities
of the augmented system [A b], rescale, and solve the small subproblem
exactly.  Also hosts the exact solvers used for reference optima."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import GridExhaustedError  # noqa: F401  (re-exported for harness users)
from .errors import InnerSolveError, RankDeficiencyError, SketchFailureError
from .leverage import SamplingDistribution, exact_scores, sample_indices
from .linalg import qr_factorize
from .preconditioning import compute_R
from .problems import L1Ball, RegressionProblem
from .projections import project_l1_ball
from .sketching import SketchSpec, default_sketch_rows


def direct_ls_solve(A, b) -> np.ndarray:
    """Least-squares minimizer via the thin QR factorization."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    Q, R = qr_factorize(A)
    return scipy.linalg.solve_triangular(R, Q.T @ b, lower=False)


def _constrained_wls(
    A: np.ndarray,
    b: np.ndarray,
    radius: float,
    x0: np.ndarray | None = None,
    *,
    gap_tol: float = 1e-12,
    max_iters: int = 50_000,
) -> np.ndarray:
    """min ||Ax - b||_2^2 over the l1 ball, by accelerated projected gradient."""
    n, d = A.shape
    x = project_l1_ball(np.zeros(d) if x0 is None else np.asarray(x0, float), radius)
    y = x.copy()
    t = 1.0
    lip = 2.0 * float(np.linalg.norm(A, 2) ** 2)
    step = 1.0 / lip
    scale = max(1.0, float(b @ b))
    for _ in range(max_iters):
        g = 2.0 * (A.T @ (A @ x - b))
        gap = float(g @ x) + radius * float(np.abs(g).max())
        if gap <= gap_tol * scale:
            return x
        gy = 2.0 * (A.T @ (A @ y - b))
        x_new = project_l1_ball(y - step * gy, radius)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
    raise InnerSolveError("constrained least-squares inner solve did not converge")


def constrained_ls_solve(A, b, constraint: L1Ball) -> np.ndarray:
    """Exact (to tight tolerance) l1-ball constrained least squares."""
    return _constrained_wls(np.asarray(A, float), np.asarray(b, float).ravel(), constraint.radius)


def irls_l1_solve(
    A,
    b,
    tol: float = 1e-10,
    max_iters: int = 200,
    constraint: L1Ball | None = None,
) -> np.ndarray:
    """min ||Ax - b||_1 by iteratively reweighted least squares.

    Weights 1/max(|r_i|, delta_k) with the smoothing delta_k decreasing
    geometrically to 1e-10; each reweighted subproblem is a (possibly
    l1-ball constrained) least-squares solve.  Raises on non-convergence.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()

    def wls(w_sqrt: np.ndarray, x_prev: np.ndarray | None) -> np.ndarray:
        Aw = w_sqrt[:, None] * A
        bw = w_sqrt * b
        if constraint is None:
            return direct_ls_solve(Aw, bw)
        return _constrained_wls(Aw, bw, constraint.radius, x0=x_prev)

    x = wls(np.ones(A.shape[0]), None)
    obj = float(np.abs(A @ x - b).sum())
    delta = max(1e-2, 0.1 * obj / max(1, A.shape[0]))
    for _ in range(max_iters):
        delta = max(1e-10, 0.3 * delta)
        r = A @ x - b
        w_sqrt = 1.0 / np.sqrt(np.maximum(np.abs(r), delta))
        x_new = wls(w_sqrt, x)
        obj_new = float(np.abs(A @ x_new - b).sum())
        stalled = abs(obj_new - obj) <= tol * max(1.0, obj)
        if obj_new < obj:
            x, obj = x_new, obj_new
        if delta <= 1e-10 and stalled:
            return x
    raise InnerSolveError(f"IRLS did not converge in {max_iters} iterations")


def augmented_leverage_distribution(
    problem: RegressionProblem,
    sketch: SketchSpec | None = None,
    seed: int = 0,
) -> SamplingDistribution:
    """Exact lp leverage scores of the augmented matrix [A b].

    For p=2 the basis defaults to a thin QR of the augmented matrix itself
    (an orthonormal basis, the best conditioned one); for p=1 a sketch-based
    triangular factor is used (reciprocal-exponential by default).
    """
    aug = problem.augmented()
    if problem.p == 2 and sketch is None:
        _, R = qr_factorize(aug)
    else:
        if sketch is None:
            kind = "recip_exp"
            sketch = SketchSpec(
                kind, default_sketch_rows(kind, aug.shape[1]), seed=seed
            )
        R, _ = compute_R(aug, sketch)
    return exact_scores(aug, R, problem.p)


def rla_sampling_solve(
    problem: RegressionProblem,
    dist: SamplingDistribution,
    s: int,
    seed: int,
    *,
    max_retries: int = 3,
    indices: np.ndarray | None = None,
) -> np.ndarray:
    """Leverage-subsample s rows, rescale, and solve the subproblem exactly.

    ``dist`` must be built over the rows of the augmented matrix [A b].  Each
    sampled row is scaled by (1/(s p_i))^(1/p), which makes the subproblem
    cost an unbiased estimator of the full cost at every fixed x (the 1/s
    normalization does not change the argmin).  Subproblems are solved by a
    direct solve (p=2) or IRLS (p=1), honoring the problem's constraint.
    A rank-deficient sample triggers a retry with seed+1, up to
    ``max_retries`` times.  ``indices`` overrides the sampling (test hook;
    e.g. every row once with a uniform distribution recovers the original
    problem up to scaling).
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if dist.n != problem.n:
        raise ValueError("distribution must cover the problem rows")
    A = problem.dense_A()
    b = problem.b
    p = problem.p
    last: Exception | None = None
    for attempt in range(max_retries + 1):
        if indices is not None:
            idx = np.asarray(indices, dtype=int)
        else:
            rng = np.random.default_rng(seed + attempt)
            idx = sample_indices(dist, s, rng)
        scale = (1.0 / (len(idx) * dist.probs[idx])) ** (1.0 / p)
        As = A[idx] * scale[:, None]
        bs = b[idx] * scale
        try:
            if p == 2:
                if problem.constraint is None:
                    return direct_ls_solve(As, bs)
                return _constrained_wls(As, bs, problem.constraint.radius)
            return irls_l1_solve(As, bs, constraint=problem.constraint)
        except (RankDeficiencyError, InnerSolveError) as e:
            last = e
            if indices is not None:
                raise
    raise SketchFailureError(
        f"sampled subproblem unsolvable after {max_retries} retries: {last}"
    )


def sampling_size_bound(
    p: int, alpha: float, beta: float, gamma: float, eps: float, delta: float, d: int
) -> int:
    """Sample size sufficient for a (1+eps)/(1-eps) objective approximation.

    s = ceil[ (1+gamma)/(1-gamma) (32 alpha beta)^p / (p^2 eps^2)
              ((d+1) ln(12/eps) + ln(2/delta)) ]  (natural logarithms).
    """
    if not (0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 1/2) for the guarantee to apply")
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    c1 = (1.0 + gamma) / (1.0 - gamma)
    val = (
        c1
        * (32.0 * alpha * beta) ** p
        / (p**2 * eps**2)
        * ((d + 1) * math.log(12.0 / eps) + math.log(2.0 / delta))
    )
    return int(math.ceil(val))
