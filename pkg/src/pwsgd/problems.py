"""Problem containers shared by the solvers, baselines and the harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class L1Ball:
    """Constraint set { x : ||x||_1 <= radius }."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("l1 ball radius must be positive")

    def contains(self, x, tol: float = 1e-12) -> bool:
        return float(np.abs(x).sum()) <= self.radius * (1 + tol)


@dataclass(frozen=True)
class RegressionProblem:
    """Overdetermined ``min_{x in Z} ||Ax - b||_p`` with p in {1, 2}.

    ``constraint`` is None for unconstrained problems or an :class:`L1Ball`.
    """

    A: object  # dense ndarray or scipy.sparse matrix
    b: np.ndarray
    p: int = 2
    constraint: L1Ball | None = None

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        b = np.asarray(self.b, dtype=float).ravel()
        object.__setattr__(self, "b", b)
        if not sp.issparse(self.A):
            object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        if self.A.shape[0] != b.shape[0]:
            raise ValueError(
                f"A has {self.A.shape[0]} rows but b has {b.shape[0]} entries"
            )
        if self.A.shape[0] < self.A.shape[1]:
            raise ValueError("problem must be overdetermined (rows >= cols)")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def dense_A(self) -> np.ndarray:
        return np.asarray(self.A.todense()) if sp.issparse(self.A) else self.A

    def objective(self, x) -> float:
        """f(x) = ||Ax - b||_p (unsquared, also for p=2; used for reporting)."""
        r = self.A @ x - self.b
        return float(np.abs(r).sum()) if self.p == 1 else float(np.linalg.norm(r))

    def augmented(self) -> np.ndarray:
        """[A b] as a dense matrix (used for RLA / sensitivity computations)."""
        return np.column_stack([self.dense_A(), self.b])
