"""Sensitivity bounds and coreset construction for lp regression costs.

The cost functions are f_i(x) = |M_i x|^p for the rows M_i of the augmented
matrix [A b], evaluated over the slice { x : x_last = -1 } (where they equal
|A_i y - b_i|^p).  Sensitivities bound each row's worst-case share of the
total cost and drive the importance-sampling construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np

from .linalg import qr_factorize
from .preconditioning import compute_R, conditioning_bound
from .leverage import exact_scores
from .linalg import l2_conditioning
from .sketching import SketchSpec, default_sketch_rows, distortion_estimate
import scipy.linalg


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-row sensitivity upper bounds m(f_i) and their total M(F)."""

    per_row_bound: np.ndarray
    total: float
    beta: float
    p: int

    def __post_init__(self):
        bounds = np.asarray(self.per_row_bound, dtype=float)
        if np.any(bounds < 1.0 - 1e-12):
            raise ValueError("sensitivity bounds must be >= 1 (floor-plus-one form)")
        if abs(self.total - bounds.sum()) > 1e-9 * max(1.0, abs(self.total)):
            raise ValueError("total must equal the sum of per-row bounds")
        object.__setattr__(self, "per_row_bound", bounds)

    @property
    def probs(self) -> np.ndarray:
        return self.per_row_bound / self.total


def lp_cost(M: np.ndarray, x: np.ndarray, p: int) -> float:
    """sum_i |M_i x|^p."""
    v = np.abs(np.asarray(M) @ np.asarray(x, dtype=float))
    return float((v**p).sum())


def weighted_lp_cost(
    M: np.ndarray, indices: np.ndarray, weights: np.ndarray, x: np.ndarray, p: int
) -> float:
    """sum over the coreset of w_j |M_{i_j} x|^p."""
    v = np.abs(M[np.asarray(indices, dtype=int)] @ np.asarray(x, dtype=float))
    return float((np.asarray(weights, dtype=float) * v**p).sum())


def sensitivity_upper_bounds(
    M: np.ndarray,
    p: int,
    *,
    sketch: SketchSpec | None = None,
    probe_dirs: int = 200,
    seed: int = 0,
) -> SensitivityProfile:
    """Per-row bounds n beta^p lambda_i + 1 and total sum, from a conditioned basis.

    For p=2 the basis is the thin QR of M itself (beta computed exactly from
    it); for p=1 the basis comes from an l1 sketch and beta is replaced by the
    conditioning bound of the sketch (a conservative certified value, since
    the exact l1 constant is intractable).
    """
    M = np.asarray(M, dtype=float)
    n, k = M.shape
    if p == 2:
        if sketch is None:
            _, R = qr_factorize(M)
        else:
            R, _ = compute_R(M, sketch)
        dist = exact_scores(M, R, 2)
        U = scipy.linalg.solve_triangular(R, M.T, trans="T", lower=False).T
        beta = l2_conditioning(U).beta
    elif p == 1:
        if sketch is None:
            sketch = SketchSpec("recip_exp", default_sketch_rows("recip_exp", k), seed=seed)
        R, _ = compute_R(M, sketch)
        dist = exact_scores(M, R, 1)
        _, kappa_s = distortion_estimate(sketch, M, probe_dirs, seed)
        beta = conditioning_bound(1, kappa_s, k, sketch.sketch_rows)
    else:
        raise ValueError("p must be 1 or 2")
    bounds = n * beta**p * dist.lam + 1.0
    return SensitivityProfile(
        per_row_bound=bounds, total=float(bounds.sum()), beta=float(beta), p=p
    )


def sensitivity_lower_bounds(
    M: np.ndarray, p: int, num_dirs: int = 10_000, seed: int = 0
) -> np.ndarray:
    """Certified lower bounds n * max_x f_i(x) / cost(x) by direction sampling.

    Directions are random sphere points plus, for each row, the direction
    aligned with its pseudo-inverse image (which maximizes the row's share
    for p=2).  The ratio is scale invariant, so sphere samples stand in for
    the x_last = -1 slice; directions with a vanishing last coordinate are
    dropped as they leave the slice's closure.
    """
    M = np.asarray(M, dtype=float)
    n, k = M.shape
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((k, num_dirs))
    W = np.linalg.solve(M.T @ M, M.T).T  # row i of W maximizes row i's p=2 share
    X = np.concatenate([X, W.T], axis=1)
    X = X[:, np.abs(X[-1]) > 1e-12]
    X /= np.linalg.norm(X, axis=0)
    V = np.abs(M @ X) ** p
    denom = V.sum(axis=0)
    keep = denom > 0
    ratios = V[:, keep] / denom[keep]
    return n * ratios.max(axis=1)


def coreset_construct(
    profile: SensitivityProfile, s: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sample s row indices with p(f) = m(f)/M(F) and weights 1/(s p(f)).

    Sampling is with replacement; the weighted cost of the returned subset is
    an unbiased estimator of the full cost at every fixed point.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    rng = np.random.default_rng(seed)
    probs = profile.probs
    idx = rng.choice(probs.size, size=s, replace=True, p=probs)
    weights = 1.0 / (s * probs[idx])
    return idx, weights


def coreset_to_csv(path, indices: np.ndarray, weights: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row_index,weight\n")
        for i, w in zip(indices, weights):
            fh.write(f"{int(i)},{float(w)!r}\n")


def coreset_size_bound(total_sensitivity: float, dim: int, eps: float, delta: float) -> int:
    """s >= M(F)/eps^2 (dim + log(1/delta)), with the leading constant at 1.

    ``dim`` is d+1 for the lp cost class (its range-space dimension bound).
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    import math

    return int(np.ceil(total_sensitivity / eps**2 * (dim + math.log(1.0 / delta))))


def hinge_sensitivity_construction(
    d: int,
) -> tuple[np.ndarray, list[list[Fraction]], list[Fraction]]:
    """Rows and witnesses showing hinge costs have ~2^d total sensitivity.

    Emits all C(d, d/2) binary rows with exactly d/2 ones.  For row i the
    witness x has entries 2/d on the row's support and -d elsewhere, giving
    f_i(x) = (x . a_i)^+ = 1 exactly while every other row's hinge value is 0;
    hence each sensitivity is at least 1 and the total is at least C(d, d/2).
    All arithmetic is exact (Fractions).
    """
    if d % 2 != 0:
        raise ValueError("d must be even")
    if not (2 <= d <= 12):
        raise ValueError("d must lie in [2, 12] (combinatorial size)")
    supports = list(combinations(range(d), d // 2))
    rows = np.zeros((len(supports), d), dtype=int)
    witnesses: list[list[Fraction]] = []
    for i, sup in enumerate(supports):
        rows[i, list(sup)] = 1
        on = Fraction(2, d)
        off = Fraction(-d, 1)
        witnesses.append([on if j in sup else off for j in range(d)])
    lower = [Fraction(1, 1)] * len(supports)
    assert len(supports) == comb(d, d // 2)
    return rows, witnesses, lower
