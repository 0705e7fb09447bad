"""Dense/sparse matrix helpers, factorizations, norms and conditioning diagnostics.

Dense matrices are plain 2-d ``numpy.ndarray``; sparse matrices are
``scipy.sparse`` CSR arrays.  Sparse inputs support matvec and row extraction
only; every factorization densifies first, which is fine at the problem sizes
this package targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import RankDeficiencyError

# |R_ii| below RANK_TOL * max|M| is treated as a zero pivot.
RANK_TOL = 1e-12


def as_dense(M) -> np.ndarray:
    """Return ``M`` as a float 2-d ndarray, densifying sparse input."""
    if sp.issparse(M):
        return np.asarray(M.todense(), dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got ndim={M.ndim}")
    return M


def validate_dense(M: np.ndarray) -> np.ndarray:
    """Check the dense-matrix invariants (2-d, finite entries)."""
    M = as_dense(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    return M


def validate_sparse(M) -> sp.csr_array:
    """Check the sparse-matrix invariants (indices in range, no duplicates, finite)."""
    M = sp.csr_array(M)
    M.sum_duplicates()
    if M.nnz != len(M.data):
        raise ValueError("inconsistent nnz")
    if M.nnz and not np.all(np.isfinite(M.data)):
        raise ValueError("sparse matrix contains non-finite entries")
    coo = M.tocoo()
    if coo.nnz:
        if coo.row.min() < 0 or coo.row.max() >= M.shape[0]:
            raise ValueError("row index out of range")
        if coo.col.min() < 0 or coo.col.max() >= M.shape[1]:
            raise ValueError("column index out of range")
    return M


@dataclass(frozen=True)
class ConditioningReport:
    """Conditioning diagnostics of a basis or of a sketching step.

    ``alpha``/``beta`` are the element-wise-norm / smallest-gain constants whose
    product ``kappa_bar`` is the scaled condition number of the basis;
    ``kappa`` is the usual spectral condition number.  ``kappa_hat`` is the
    element-wise-1-norm condition number |M|_1 |M^-1|_1 (square inputs only).
    ``sketch_distortion``/``sketch_rows`` describe the sketch that produced the
    basis, when one was involved.  Fields that do not apply are NaN / 0.
    """

    alpha: float = float("nan")
    beta: float = float("nan")
    kappa_bar: float = float("nan")
    kappa: float = float("nan")
    kappa_hat: float = float("nan")
    sketch_distortion: float = float("nan")
    sketch_rows: int = 0

    def __post_init__(self):
        for name in ("kappa", "kappa_bar", "kappa_hat", "sketch_distortion"):
            v = getattr(self, name)
            if np.isfinite(v) and v < 1.0 - 1e-9:
                raise ValueError(f"{name}={v} must be >= 1")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if np.isfinite(v) and v <= 0:
                raise ValueError(f"{name}={v} must be > 0")


def qr_factorize(M) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization with a positive-diagonal R.

    Householder QR (LAPACK) followed by a diagonal sign flip so that R has a
    strictly positive diagonal; this makes the factorization unique and
    reproducible.  Raises :class:`RankDeficiencyError` when a diagonal entry of
    R falls below ``RANK_TOL * max|M|``.
    """
    M = as_dense(M)
    n, d = M.shape
    if n < d:
        raise ValueError(f"need rows >= cols, got {n}x{d}")
    Q, R = np.linalg.qr(M, mode="reduced")
    diag = np.diagonal(R).copy()
    scale = np.abs(M).max()
    if scale == 0 or np.any(np.abs(diag) < RANK_TOL * scale):
        raise RankDeficiencyError("matrix is numerically rank deficient")
    signs = np.where(diag < 0, -1.0, 1.0)
    return Q * signs, signs[:, None] * R


def elementwise_p_norm(M, p: float) -> float:
    """Element-wise p-norm ``(sum |M_ij|^p)^(1/p)``; equals Frobenius for p=2."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    M = as_dense(M)
    if M.size == 0:
        return 0.0
    a = np.abs(M)
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.linalg.norm(M, "fro"))
    m = a.max()
    if m == 0:
        return 0.0
    # factor out the max to avoid overflow for large p
    return float(m * (np.power(a / m, p).sum()) ** (1.0 / p))


def kappa_hat(M) -> float:
    """Element-wise-1-norm condition number |M|_1 |M^-1|_1 of a square matrix."""
    M = as_dense(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("kappa_hat requires a square matrix")
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as e:
        raise RankDeficiencyError(str(e)) from e
    return elementwise_p_norm(M, 1) * elementwise_p_norm(Minv, 1)


def l2_conditioning(U) -> ConditioningReport:
    """Conditioning constants of a basis U in the Euclidean setting.

    alpha is the Frobenius norm, beta = sqrt(||(U^T U)^-1||_2) and
    kappa = sigma_max / sigma_min, computed from the Gram matrix spectrum
    (tests cross-check against an SVD of U itself).
    """
    U = as_dense(U)
    n, d = U.shape
    if n < d:
        raise ValueError("need rows >= cols")
    alpha = float(np.linalg.norm(U, "fro"))
    evals = np.linalg.eigvalsh(U.T @ U)
    lam_min, lam_max = float(evals[0]), float(evals[-1])
    if lam_min <= RANK_TOL * max(lam_max, 1.0):
        raise RankDeficiencyError("U^T U is numerically singular")
    beta = 1.0 / np.sqrt(lam_min)
    kh = kappa_hat(U) if n == d else float("nan")
    return ConditioningReport(
        alpha=alpha,
        beta=beta,
        kappa_bar=alpha * beta,
        kappa=float(np.sqrt(lam_max / lam_min)),
        kappa_hat=kh,
    )


def l1_distortion_probe(
    A, B, num_dirs: int, seed: int
) -> tuple[float, float]:
    """Empirical range of ||Bx||_1 / ||Ax||_1 over random unit directions.

    A and B must share a column count.  Directions are Gaussian vectors
    normalized to the unit sphere; directions with ||Ax||_1 = 0 are skipped
    (but counted toward ``num_dirs``).  Deterministic given ``seed``.
    """
    A = as_dense(A) if not sp.issparse(A) else A
    B = as_dense(B) if not sp.issparse(B) else B
    if A.shape[1] != B.shape[1]:
        raise ValueError("A and B must have the same number of columns")
    rng = np.random.default_rng(seed)
    d = A.shape[1]
    X = rng.standard_normal((d, num_dirs))
    X /= np.linalg.norm(X, axis=0)
    den = np.abs(A @ X).sum(axis=0)
    num = np.abs(B @ X).sum(axis=0)
    keep = den > 0
    if not np.any(keep):
        raise ValueError("every sampled direction lies in the null space of A")
    ratios = num[keep] / den[keep]
    return float(ratios.min()), float(ratios.max())
