"""Randomized sketch transforms S with ``||SAx||_p ~ ||Ax||_p`` for all x.

Supported kinds and their target norms:

==============  ====  =========================================================
kind            p     construction
==============  ====  =========================================================
gaussian        2     i.i.d. N(0, 1/s) dense matrix
srht            2     subsampled randomized Hadamard transform (zero padded)
sparse_l2       2     count sketch: one +-1 entry per input row
dense_cauchy    1     i.i.d. standard Cauchy dense matrix
sparse_cauchy   1     count-sketch structure with Cauchy values
recip_exp       1     one entry per input row with value +-1/u, u ~ Exp(1)
==============  ====  =========================================================

The Gaussian kind is scaled by 1/sqrt(s) so that E||SAx||_2^2 = ||Ax||_2^2;
the Cauchy kinds are left unscaled (any fixed scale cancels in the QR step
they feed).  All randomness is derived from the spec seed, so identical
(spec, A) pairs give bitwise-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

L1_KINDS = frozenset({"dense_cauchy", "sparse_cauchy", "recip_exp"})
L2_KINDS = frozenset({"gaussian", "srht", "sparse_l2"})
KINDS = L1_KINDS | L2_KINDS


def default_sketch_rows(kind: str, d: int) -> int:
    """Default sketch sizes: max(8d, 50) for l2 kinds, max(8d, 100) for l1 kinds."""
    if kind in L2_KINDS:
        return max(8 * d, 50)
    if kind in L1_KINDS:
        return max(8 * d, 100)
    raise ValueError(f"unknown sketch kind {kind!r}")


@dataclass(frozen=True)
class SketchSpec:
    kind: str
    sketch_rows: int
    seed: int = 0
    target_norm: int = 0  # 0 means "derive from kind"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}")
        if self.sketch_rows < 1:
            raise ValueError("sketch_rows must be >= 1")
        derived = 1 if self.kind in L1_KINDS else 2
        if self.target_norm == 0:
            object.__setattr__(self, "target_norm", derived)
        elif self.target_norm != derived:
            raise ValueError(
                f"kind {self.kind!r} targets p={derived}, not p={self.target_norm}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "sketch_rows": self.sketch_rows, "seed": self.seed}
        )

    @classmethod
    def from_json(cls, s: str) -> "SketchSpec":
        obj = json.loads(s)
        return cls(kind=obj["kind"], sketch_rows=int(obj["sketch_rows"]), seed=int(obj["seed"]))

    def with_seed(self, seed: int) -> "SketchSpec":
        return SketchSpec(self.kind, self.sketch_rows, seed)


def _rng(spec: SketchSpec) -> np.random.Generator:
    return np.random.default_rng(spec.seed)


def _cauchy(rng: np.random.Generator, shape) -> np.ndarray:
    # tan(pi (u - 1/2)) with u uniform is standard Cauchy
    return np.tan(np.pi * (rng.random(shape) - 0.5))


def _one_per_column_params(spec: SketchSpec, n: int):
    """Bucket index and value of the single nonzero in each column of S."""
    rng = _rng(spec)
    buckets = rng.integers(0, spec.sketch_rows, size=n)
    if spec.kind == "sparse_l2":
        values = rng.integers(0, 2, size=n) * 2.0 - 1.0
    elif spec.kind == "sparse_cauchy":
        values = _cauchy(rng, n)
    elif spec.kind == "recip_exp":
        signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
        values = signs / rng.exponential(1.0, size=n)
    else:
        raise ValueError(spec.kind)
    return buckets, values


def _srht_params(spec: SketchSpec, n: int):
    """Row signs, padded length and the sampled row subset of the SRHT."""
    n_pad = 1 << max(0, (n - 1).bit_length())
    if spec.sketch_rows > n_pad:
        raise ValueError(
            f"srht with sketch_rows={spec.sketch_rows} exceeds padded length {n_pad}"
        )
    rng = _rng(spec)
    signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
    rows = rng.choice(n_pad, size=spec.sketch_rows, replace=False)
    return signs, n_pad, rows


def fwht(X: np.ndarray) -> np.ndarray:
    """Fast Walsh-Hadamard transform along axis 0 (length must be a power of two).

    Returns H X for the unnormalized Hadamard matrix H in natural order.
    """
    X = np.array(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    n, k = X.shape
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    h = 1
    while h < n:
        X = X.reshape(n // (2 * h), 2, h, k)
        top = X[:, 0] + X[:, 1]
        bot = X[:, 0] - X[:, 1]
        X = np.stack((top, bot), axis=1).reshape(n, k)
        h *= 2
    return X[:, 0] if squeeze else X


def apply_sketch(spec: SketchSpec, A) -> np.ndarray:
    """Compute SA (s x d) without materializing S for the structured kinds.

    Cost is proportional to nnz(A) for sparse_l2 / sparse_cauchy / recip_exp
    when A is sparse.  The SRHT densifies sparse input (padding requires it).
    """
    n = A.shape[0]
    s = spec.sketch_rows
    if spec.kind in ("gaussian", "dense_cauchy"):
        rng = _rng(spec)
        if spec.kind == "gaussian":
            S = rng.standard_normal((s, n)) / np.sqrt(s)
        else:
            S = _cauchy(rng, (s, n))
        out = S @ A
        return np.asarray(out.todense()) if sp.issparse(out) else np.asarray(out)
    if spec.kind in ("sparse_l2", "sparse_cauchy", "recip_exp"):
        buckets, values = _one_per_column_params(spec, n)
        S = sp.csr_array((values, (buckets, np.arange(n))), shape=(s, n))
        out = S @ A
        return np.asarray(out.todense()) if sp.issparse(out) else np.asarray(out)
    if spec.kind == "srht":
        signs, n_pad, rows = _srht_params(spec, n)
        Ad = np.asarray(A.todense()) if sp.issparse(A) else np.asarray(A, dtype=float)
        if Ad.ndim == 1:
            Ad = Ad[:, None]
        X = np.zeros((n_pad, Ad.shape[1]))
        X[:n] = signs[:, None] * Ad
        H = fwht(X) / np.sqrt(n_pad)
        return np.sqrt(n_pad / s) * H[rows]
    raise ValueError(spec.kind)


def materialize_sketch(spec: SketchSpec, n: int):
    """Explicit S with apply_sketch(spec, A) == S @ A (test/oracle support).

    Returns a CSR array for the one-nonzero-per-column kinds and a dense
    ndarray otherwise.
    """
    s = spec.sketch_rows
    if spec.kind == "gaussian":
        return _rng(spec).standard_normal((s, n)) / np.sqrt(s)
    if spec.kind == "dense_cauchy":
        return _cauchy(_rng(spec), (s, n))
    if spec.kind in ("sparse_l2", "sparse_cauchy", "recip_exp"):
        buckets, values = _one_per_column_params(spec, n)
        return sp.csr_array((values, (buckets, np.arange(n))), shape=(s, n))
    if spec.kind == "srht":
        signs, n_pad, rows = _srht_params(spec, n)
        H = fwht(np.eye(n_pad)) / np.sqrt(n_pad)
        S = np.sqrt(n_pad / s) * H[rows][:, :n]
        return S * signs[None, :]
    raise ValueError(spec.kind)


def distortion_estimate(
    spec: SketchSpec, A, num_dirs: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo (sigma_S, kappa_S) of the sketch on range(A).

    sigma_S is the smallest sampled ratio ||SAx||_p / ||Ax||_p and kappa_S the
    largest sampled ratio divided by sigma_S, with directions drawn from the
    unit sphere using ``seed``.  kappa_S from a finite sample underestimates
    the true distortion; it is an empirical diagnostic, not a certificate.
    """
    SA = apply_sketch(spec, A)
    rng = np.random.default_rng(seed)
    d = A.shape[1]
    X = rng.standard_normal((d, num_dirs))
    X /= np.linalg.norm(X, axis=0)
    AX = A @ X
    SAX = SA @ X
    if spec.target_norm == 1:
        den = np.abs(AX).sum(axis=0)
        num = np.abs(SAX).sum(axis=0)
    else:
        den = np.linalg.norm(AX, axis=0)
        num = np.linalg.norm(SAX, axis=0)
    keep = den > 0
    if not np.any(keep):
        raise ValueError("A maps every sampled direction to zero")
    ratios = num[keep] / den[keep]
    sigma = float(ratios.min())
    if sigma <= 0:
        raise ValueError("sketch annihilated a sampled direction")
    return sigma, float(ratios.max()) / sigma
