"""Exact and fast approximate lp leverage scores and the induced row-sampling
distribution p_i = lambda_i / sum_j lambda_j."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import RankDeficiencyError


@dataclass(frozen=True)
class SamplingDistribution:
    """Leverage estimates, normalized probabilities and the inverse-CDF table.

    ``gamma`` is the promised estimation factor: (1-gamma)||U_i||_p^p <=
    lambda_i <= (1+gamma)||U_i||_p^p.  Exact scores carry gamma = 0.
    Rows with lambda_i = 0 get p_i = 0 and are never sampled.
    """

    lam: np.ndarray
    gamma: float = 0.0
    probs: np.ndarray = field(init=False)
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        if lam.size == 0:
            raise ValueError("empty score vector")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("leverage estimates must be finite and nonnegative")
        if not (0 <= self.gamma < 1):
            raise ValueError("gamma must lie in [0, 1)")
        total = lam.sum()
        if total <= 0:
            raise ValueError("all leverage estimates are zero")
        probs = lam / total
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "cumulative", np.cumsum(probs))

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,lambda,prob\n")
            for i, (l, p) in enumerate(zip(self.lam, self.probs)):
                fh.write(f"{i},{float(l)!r},{float(p)!r}\n")


def _solve_rows(A, R: np.ndarray) -> np.ndarray:
    """U = A R^-1 by batched row-wise triangular solves (R^T u_i = a_i)."""
    Ad = np.asarray(A.todense()) if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        return scipy.linalg.solve_triangular(R, Ad.T, trans="T", lower=False).T
    except scipy.linalg.LinAlgError as e:  # pragma: no cover - scipy raises generic
        raise RankDeficiencyError(str(e)) from e


def exact_scores(A, R: np.ndarray, p: int) -> SamplingDistribution:
    """lambda_i = ||(A R^-1)_i||_p^p computed exactly (gamma = 0)."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if np.any(np.abs(np.diagonal(R)) < 1e-14 * max(np.abs(R).max(), 1e-300)):
        raise RankDeficiencyError("R is numerically singular")
    U = _solve_rows(A, R)
    lam = np.abs(U).sum(axis=1) if p == 1 else (U * U).sum(axis=1)
    return SamplingDistribution(lam=lam, gamma=0.0)


def approx_scores_l2(
    A,
    R: np.ndarray,
    num_probe_cols: int,
    seed: int,
    *,
    gamma: float = 0.5,
    probe: np.ndarray | None = None,
) -> SamplingDistribution:
    """Euclidean leverage estimates from a d x k random projection probe.

    lambda_i = ||(A R^-1 G)_i||_2^2, computed without forming A R^-1 row by
    row: W = R^-1 G is one d x k solve and the product A W costs nnz(A) k.

    For k >= d the Gaussian probe is orthonormalized (G G^T = I), so the
    estimates are exact; a raw k-column Gaussian probe has chi-square
    fluctuation (relative spread ~ 1/sqrt(k) per row) that violates a
    gamma = 0.5 promise on some row of a large matrix almost surely.  For
    k < d the probe is a 1/sqrt(k)-scaled Gaussian (Johnson-Lindenstrauss
    estimate).  ``probe`` injects a fixed G for tests.

    Default width: ceil(8 ln n) columns.
    """
    if num_probe_cols < 1:
        raise ValueError("num_probe_cols must be >= 1")
    d = R.shape[0]
    if probe is None:
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((d, num_probe_cols))
        if num_probe_cols >= d:
            # row-orthonormalize: G G^T = I exactly
            Q, _ = np.linalg.qr(G.T, mode="reduced")
            G = Q.T
        else:
            G = G / np.sqrt(num_probe_cols)
    else:
        G = np.asarray(probe, dtype=float)
    W = scipy.linalg.solve_triangular(R, G, lower=False)
    V = A @ W
    V = np.asarray(V.todense()) if sp.issparse(V) else np.asarray(V)
    lam = (V * V).sum(axis=1)
    return SamplingDistribution(lam=lam, gamma=gamma)


def default_l2_probe_cols(n: int) -> int:
    return int(np.ceil(8 * np.log(n)))


def approx_scores_l1(
    A,
    R: np.ndarray,
    num_probe_cols: int = 21,
    seed: int = 0,
    *,
    gamma: float = 0.5,
) -> SamplingDistribution:
    """l1 leverage estimates via the median-of-Cauchy row-norm estimator.

    With C a d x k standard Cauchy probe, (A R^-1 C)_ij is Cauchy with scale
    ||U_i||_1, so the median of |.| over j estimates ||U_i||_1 (the median of
    a standard |Cauchy| is exactly 1, so no rescaling is applied).  Absolute
    values are estimator-dependent; only the normalized probabilities matter.
    An odd k keeps the sample median unbiased.  Default k = 21.
    """
    if num_probe_cols < 1:
        raise ValueError("num_probe_cols must be >= 1")
    rng = np.random.default_rng(seed)
    d = R.shape[0]
    C = np.tan(np.pi * (rng.random((d, num_probe_cols)) - 0.5))
    W = scipy.linalg.solve_triangular(R, C, lower=False)
    V = A @ W
    V = np.asarray(V.todense()) if sp.issparse(V) else np.asarray(V)
    lam = np.median(np.abs(V), axis=1)
    return SamplingDistribution(lam=lam, gamma=gamma)


def row_norm_distribution(A, p: int = 2) -> SamplingDistribution:
    """p_i ~ ||A_i||_2^2 (p=2, randomized-Kaczmarz weighting) or ||A_i||_1 (p=1)."""
    Ad = np.asarray(A.todense()) if sp.issparse(A) else np.asarray(A, dtype=float)
    lam = (Ad * Ad).sum(axis=1) if p == 2 else np.abs(Ad).sum(axis=1)
    return SamplingDistribution(lam=lam, gamma=0.0)


def uniform_distribution(n: int) -> SamplingDistribution:
    return SamplingDistribution(lam=np.ones(n), gamma=0.0)


def sample_index(dist: SamplingDistribution, rng: np.random.Generator) -> int:
    """Draw one row index with probability p_i (binary search on the CDF).

    Zero-probability rows are never returned; the caller owns the RNG state.
    """
    u = rng.random()
    idx = int(np.searchsorted(dist.cumulative, u, side="right"))
    if idx >= dist.n:  # u landed beyond the last cumulative due to rounding
        idx = dist.n - 1
    while dist.probs[idx] == 0.0:  # guard against floating-point plateaus
        idx -= 1
    return idx


def sample_indices(
    dist: SamplingDistribution, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized i.i.d. sampling; equivalent to repeated sample_index calls."""
    u = rng.random(size)
    idx = np.searchsorted(dist.cumulative, u, side="right")
    idx = np.minimum(idx, dist.n - 1)
    bad = dist.probs[idx] == 0.0
    while np.any(bad):
        idx[bad] -= 1
        bad = dist.probs[idx] == 0.0
    return idx


def sample_epoch(
    dist: SamplingDistribution, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Distinct indices drawn without replacement according to the distribution.

    Used by the experiment protocol that refreshes a block of row samples at
    the start of every epoch; requires at least ``size`` rows with p_i > 0.
    """
    support = int(np.count_nonzero(dist.probs))
    if size > support:
        raise ValueError(f"epoch of {size} draws exceeds support size {support}")
    return rng.choice(dist.n, size=size, replace=False, p=dist.probs)
