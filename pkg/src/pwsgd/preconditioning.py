"""Preconditioner construction: R from a sketch, the choice F in {R^-1, D, I},
and applications of the metric H = (F F^T)^-1 used by the solver update."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import RankDeficiencyError, SketchFailureError
from .linalg import ConditioningReport, l2_conditioning, qr_factorize
from .sketching import SketchSpec, apply_sketch, distortion_estimate

F_MODES = ("full", "diag", "noco")

# explicit triangular inverses are allowed only for small systems
_DENSE_INVERSE_MAX_DIM = 64


@dataclass(frozen=True)
class Preconditioner:
    """Upper-triangular factor R plus the preconditioner choice F.

    full: F = R^-1 (applied through triangular solves, H = R^T R)
    diag: F = D with D_jj = 1 / ||R e_j||_2 (H = D^-2)
    noco: F = I (H = I)
    """

    R: np.ndarray
    f_mode: str
    d_scale: np.ndarray | None = field(default=None)

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("R must be square")
        if not np.allclose(R, np.triu(R)):
            raise ValueError("R must be upper triangular")
        if np.any(np.abs(np.diagonal(R)) < 1e-14 * max(np.abs(R).max(), 1e-300)):
            raise RankDeficiencyError("R is numerically singular")
        object.__setattr__(self, "R", R)
        if self.f_mode not in F_MODES:
            raise ValueError(f"f_mode must be one of {F_MODES}")
        if self.f_mode == "diag":
            col_norms = np.linalg.norm(R, axis=0)
            if np.any(col_norms == 0):
                raise RankDeficiencyError("R has a zero column")
            object.__setattr__(self, "d_scale", 1.0 / col_norms)
        else:
            object.__setattr__(self, "d_scale", None)
        # Small systems cache dense F, H and H^-1 so the per-iteration metric
        # applications are single matvecs; above the cutoff everything goes
        # through triangular solves and R^-1 is never formed.
        if self.f_mode == "full" and R.shape[0] <= _DENSE_INVERSE_MAX_DIM:
            F = scipy.linalg.solve_triangular(R, np.eye(R.shape[0]), lower=False)
            object.__setattr__(self, "_F_cache", F)
            object.__setattr__(self, "_Hinv_cache", F @ F.T)
            object.__setattr__(self, "_H_cache", R.T @ R)
        else:
            object.__setattr__(self, "_F_cache", None)
            object.__setattr__(self, "_Hinv_cache", None)
            object.__setattr__(self, "_H_cache", None)
        object.__setattr__(self, "_h_lip_cache", None)

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    # -- applications of F, F^-1 and the metric -----------------------------

    def apply_F(self, v: np.ndarray) -> np.ndarray:
        """F v (solving R x = v in full mode; never forms R^-1 for large d)."""
        if self.f_mode == "full":
            if self._F_cache is not None:
                return self._F_cache @ v
            return scipy.linalg.solve_triangular(self.R, v, lower=False, check_finite=False)
        if self.f_mode == "diag":
            return self.d_scale * np.asarray(v, dtype=float)
        return np.asarray(v, dtype=float)

    def apply_F_inv(self, v: np.ndarray) -> np.ndarray:
        """F^-1 v."""
        if self.f_mode == "full":
            return self.R @ v
        if self.f_mode == "diag":
            return np.asarray(v, dtype=float) / self.d_scale
        return np.asarray(v, dtype=float)

    def apply_H_inv(self, v: np.ndarray) -> np.ndarray:
        """H^-1 v = F F^T v; two triangular solves in full mode."""
        if self.f_mode == "full":
            if self._Hinv_cache is not None:
                return self._Hinv_cache @ v
            w = scipy.linalg.solve_triangular(
                self.R, v, trans="T", lower=False, check_finite=False
            )
            return scipy.linalg.solve_triangular(self.R, w, lower=False, check_finite=False)
        if self.f_mode == "diag":
            return self.d_scale**2 * np.asarray(v, dtype=float)
        return np.asarray(v, dtype=float)

    def apply_H(self, v: np.ndarray) -> np.ndarray:
        """H v = (F F^T)^-1 v; H = R^T R in full mode."""
        if self.f_mode == "full":
            if self._H_cache is not None:
                return self._H_cache @ v
            return self.R.T @ (self.R @ v)
        if self.f_mode == "diag":
            return np.asarray(v, dtype=float) / self.d_scale**2
        return np.asarray(v, dtype=float)

    def h_norm_sq(self, v: np.ndarray) -> float:
        """||v||_H^2; equals ||R v||_2^2 in full mode."""
        if self.f_mode == "full":
            return float(np.linalg.norm(self.R @ v) ** 2)
        if self.f_mode == "diag":
            return float(np.linalg.norm(np.asarray(v) / self.d_scale) ** 2)
        return float(np.linalg.norm(v) ** 2)

    def h_diag(self) -> np.ndarray | None:
        """Diagonal of H when H is diagonal (diag/noco modes), else None."""
        if self.f_mode == "diag":
            return 1.0 / self.d_scale**2
        if self.f_mode == "noco":
            return np.ones(self.dim)
        return None

    def h_spectral_norm(self) -> float:
        """lambda_max(H), the Lipschitz constant of x -> Hx (cached)."""
        if self._h_lip_cache is None:
            if self.f_mode == "full":
                lip = float(np.linalg.norm(self.R, 2) ** 2)
            else:
                lip = float(self.h_diag().max())
            object.__setattr__(self, "_h_lip_cache", lip)
        return self._h_lip_cache

    # -- dense views (small d / tests / theory constants) -------------------

    def F_matrix(self) -> np.ndarray:
        """Dense F, for diagnostics and small-d tests only.

        Solver paths never form R^-1 explicitly; refuse to do so for large d.
        """
        if self.f_mode == "full":
            if self.dim > _DENSE_INVERSE_MAX_DIM:
                raise ValueError(
                    f"refusing to form R^-1 densely for d={self.dim}; use apply_F"
                )
            return scipy.linalg.solve_triangular(self.R, np.eye(self.dim), lower=False)
        if self.f_mode == "diag":
            return np.diag(self.d_scale)
        return np.eye(self.dim)

    def rf_matrix(self) -> np.ndarray:
        """R F: identity (full), column-scaled R (diag) or R itself (noco)."""
        if self.f_mode == "full":
            return np.eye(self.dim)
        if self.f_mode == "diag":
            return self.R * self.d_scale[None, :]
        return self.R.copy()

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"f_mode": self.f_mode, "R": self.R.tolist()})

    @classmethod
    def from_json(cls, s: str) -> "Preconditioner":
        obj = json.loads(s)
        return cls(R=np.asarray(obj["R"], dtype=float), f_mode=obj["f_mode"])


def make_preconditioner(R: np.ndarray, f_mode: str) -> Preconditioner:
    """Wrap a triangular factor with the chosen preconditioner mode."""
    return Preconditioner(R=R, f_mode=f_mode)


def identity_preconditioner(d: int) -> Preconditioner:
    """R = I, noco mode: the plain (unpreconditioned) geometry."""
    return Preconditioner(R=np.eye(d), f_mode="noco")


def compute_R(
    A,
    spec: SketchSpec,
    *,
    max_retries: int = 3,
    probe_dirs: int = 0,
    probe_seed: int = 0,
    conditioning: bool = False,
) -> tuple[np.ndarray, ConditioningReport]:
    """Triangular factor R of the sketch SA, with optional diagnostics.

    Retries with seed+1 (up to ``max_retries`` times) when the sketch produces
    a rank-deficient SA.  With ``probe_dirs`` > 0 the report carries an
    empirical (sigma_S excluded) distortion estimate; with ``conditioning``
    the report carries the l2 conditioning of A R^-1 (forms U explicitly).
    """
    if spec.sketch_rows < A.shape[1]:
        raise ValueError("sketch_rows must be at least the column count")
    last_err: Exception | None = None
    cur = spec
    for _ in range(max_retries + 1):
        SA = apply_sketch(cur, A)
        try:
            _, R = qr_factorize(SA)
        except RankDeficiencyError as e:
            last_err = e
            cur = cur.with_seed(cur.seed + 1)
            continue
        kappa_s = float("nan")
        if probe_dirs > 0:
            _, kappa_s = distortion_estimate(cur, A, probe_dirs, probe_seed)
        if conditioning:
            U = scipy.linalg.solve_triangular(R, _dense(A).T, trans="T", lower=False).T
            base = l2_conditioning(U)
            report = ConditioningReport(
                alpha=base.alpha,
                beta=base.beta,
                kappa_bar=base.kappa_bar,
                kappa=base.kappa,
                kappa_hat=base.kappa_hat,
                sketch_distortion=kappa_s,
                sketch_rows=cur.sketch_rows,
            )
        else:
            report = ConditioningReport(
                sketch_distortion=kappa_s, sketch_rows=cur.sketch_rows
            )
        return R, report
    raise SketchFailureError(
        f"sketch produced rank-deficient SA after {max_retries} retries "
        f"(try a new seed or more rows): {last_err}"
    )


def _dense(A) -> np.ndarray:
    import scipy.sparse as sp

    return np.asarray(A.todense()) if sp.issparse(A) else np.asarray(A, dtype=float)


def conditioning_bound(p: int, kappa_s: float, d: int, s: int) -> float:
    """Scaled-condition-number bound kappa_S d^max(1/2,1/p) s^|1/p - 1/2|."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if kappa_s <= 0 or d <= 0 or s <= 0:
        raise ValueError("all inputs must be positive")
    return float(kappa_s * d ** max(0.5, 1.0 / p) * s ** abs(1.0 / p - 0.5))
