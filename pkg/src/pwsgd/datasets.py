"""Synthetic dataset generators and file ingestion for the benchmark harness."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import qr_factorize
from .matio import read_csv_matrix


def gen_synthetic1(
    n: int,
    d: int,
    num_spikes: int = 5,
    seed: int = 0,
    *,
    noise_sigma: float = 0.1,
    spike_scale: float = 20.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian design with a few rows dominating both row norms and leverage.

    Each spike row is axis aligned in its own column: row i (i < num_spikes)
    is spike_scale * sqrt(d) * e_{d - num_spikes + i} on an otherwise standard
    Gaussian matrix, which makes its row norm spike_scale times the Gaussian
    baseline and its leverage close to 1.  The response is b = A x_true +
    N(0, noise_sigma^2) with a standard Gaussian x_true.  num_spikes = 0
    degenerates to an i.i.d. Gaussian design.
    """
    if not (0 <= num_spikes < n):
        raise ValueError("need 0 <= num_spikes < n")
    if num_spikes > d:
        raise ValueError("spikes need dedicated columns: num_spikes <= d")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    mag = spike_scale * np.sqrt(d)
    for i in range(num_spikes):
        A[i] = 0.0
        A[i, d - num_spikes + i] = mag
    x_true = rng.standard_normal(d)
    b = A @ x_true + noise_sigma * rng.standard_normal(n)
    return A, b, x_true


def sigma_slope(d: int, kappa_bar_sq: float) -> float:
    """Positive q with sum_i (1 + (i-1) q)^2 = kappa_bar_sq.

    Expanding gives S2 q^2 + 2 S1 q + (d - kappa_bar_sq) = 0 with
    S1 = sum (i-1) and S2 = sum (i-1)^2; the positive root exists iff
    kappa_bar_sq >= d.
    """
    if kappa_bar_sq < d:
        raise ValueError(f"kappa_bar_sq must be >= d = {d}")
    if d == 1:
        return 0.0
    s1 = d * (d - 1) / 2.0
    s2 = (d - 1) * d * (2 * d - 1) / 6.0
    return float((-s1 + np.sqrt(s1**2 + s2 * (kappa_bar_sq - d))) / s2)


def gen_synthetic2(
    n: int,
    d: int,
    kappa_bar_sq: float,
    shared_seed: int = 0,
    noise_sigma: float = 0.1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A = U diag(1 + (i-1) q) V^T with conditioning controlled exactly.

    U (n x d) and V (d x d) are random orthonormal factors drawn from
    ``shared_seed`` only, so sweeping kappa_bar_sq with a fixed shared_seed
    varies nothing but the spectrum (leverage scores and coherence included).
    q is the positive root matching sum sigma_i^2 = kappa_bar_sq.
    """
    ss = np.random.SeedSequence(shared_seed)
    child_uv, child_xb = ss.spawn(2)
    rng_uv = np.random.default_rng(child_uv)
    U, _ = qr_factorize(rng_uv.standard_normal((n, d)))
    V, _ = qr_factorize(rng_uv.standard_normal((d, d)))
    q = sigma_slope(d, kappa_bar_sq)
    sigmas = 1.0 + q * np.arange(d)
    A = (U * sigmas[None, :]) @ V.T
    rng_xb = np.random.default_rng(child_xb)
    x_true = rng_xb.standard_normal(d)
    b = A @ x_true + noise_sigma * rng_xb.standard_normal(n)
    return A, b, x_true


def gen_sparse_instance(
    n: int, d: int, nnz: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sparse-signal least-squares instance: Gaussian A, nnz-sparse x_true,
    unit-variance Gaussian noise."""
    if not (1 <= nnz <= d):
        raise ValueError("need 1 <= nnz <= d")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    x_true = np.zeros(d)
    support = rng.choice(d, size=nnz, replace=False)
    x_true[support] = rng.standard_normal(nnz)
    b = A @ x_true + rng.standard_normal(n)
    return A, b, x_true


def load_csv_dataset(path, response_column: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Dense design matrix and response vector from a plain CSV file."""
    M = read_csv_matrix(path)
    ncols = M.shape[1]
    if not (-ncols <= response_column < ncols):
        raise ValueError(
            f"response column {response_column} out of range for {ncols} columns"
        )
    b = M[:, response_column]
    A = np.delete(M, response_column % ncols, axis=1)
    return A, b


@dataclass(frozen=True)
class DatasetRecipe:
    """Declarative dataset source: a generator with parameters, or a file."""

    kind: str  # synthetic1 | synthetic2 | sparse | csv
    n: int = 0
    d: int = 0
    num_spikes: int = 5
    kappa_bar_sq: float = 0.0
    noise_sigma: float = 0.1
    nnz: int = 0
    seed: int = 0
    path: str = ""
    response_column: int = 0
    spike_scale: float = 20.0

    def __post_init__(self):
        if self.kind not in ("synthetic1", "synthetic2", "sparse", "csv"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind != "csv":
            if not (self.n > self.d >= 1):
                raise ValueError("need n > d >= 1")
        if self.kind == "synthetic2" and self.kappa_bar_sq < self.d:
            raise ValueError("kappa_bar_sq must be >= d")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, s: str) -> "DatasetRecipe":
        return cls(**json.loads(s))


def generate(recipe: DatasetRecipe) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Materialize (A, b, x_true); x_true is None for file-backed datasets."""
    if recipe.kind == "synthetic1":
        return gen_synthetic1(
            recipe.n,
            recipe.d,
            recipe.num_spikes,
            recipe.seed,
            noise_sigma=recipe.noise_sigma,
            spike_scale=recipe.spike_scale,
        )
    if recipe.kind == "synthetic2":
        return gen_synthetic2(
            recipe.n, recipe.d, recipe.kappa_bar_sq, recipe.seed, recipe.noise_sigma
        )
    if recipe.kind == "sparse":
        return gen_sparse_instance(recipe.n, recipe.d, recipe.nnz, recipe.seed)
    A, b = load_csv_dataset(recipe.path, recipe.response_column)
    return A, b, None
