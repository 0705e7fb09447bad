"""Step-size and iteration-count calculators derived from the convergence
analysis, plus the non-asymptotic error bounds they come from.

All quantities are computed exactly from the problem at hand (which requires
a reference solution from a direct solve); nothing here is asymptotic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .leverage import SamplingDistribution
from .linalg import elementwise_p_norm, l2_conditioning
from .preconditioning import Preconditioner
from .problems import RegressionProblem


@dataclass(frozen=True)
class TheoryConstants:
    """Constants entering the convergence statements.

    c1 = (1+gamma)/(1-gamma) accounts for leverage-score estimation error;
    c2 = ||x*-x0||_H^2 / ||x*||_H^2 measures the start; c3 relates ||Ax*||_p
    to the optimal objective.  mu, sup_L and sigma_sq are the strong-convexity
    modulus, the largest per-sample gradient Lipschitz constant and the
    gradient noise at the optimum of the preconditioned least-squares problem
    (p=2 only; NaN for p=1).  The remaining fields carry the basis/metric
    norms the bounds are expressed in.
    """

    c1: float
    c2: float
    c3: float
    mu: float
    sup_L: float
    sigma_sq: float
    alpha: float
    beta: float
    kappa_bar_sq: float
    rf_el1: float
    rf_inv_el1: float
    rf_spec: float
    rf_inv_spec: float
    x0_gap_h: float
    h_opt: float

    def __post_init__(self):
        if self.c1 < 1.0:
            raise ValueError("c1 must be >= 1")
        for name in ("c2", "c3", "mu", "sup_L", "sigma_sq", "x0_gap_h", "h_opt"):
            v = getattr(self, name)
            if np.isfinite(v) and v < 0:
                raise ValueError(f"{name} must be nonnegative")


def _af_matrix(problem: RegressionProblem, precond: Preconditioner) -> np.ndarray:
    """AF as a dense n x d matrix (equals the basis U when F = R^-1)."""
    A = problem.dense_A()
    if precond.f_mode == "full":
        return scipy.linalg.solve_triangular(precond.R, A.T, trans="T", lower=False).T
    if precond.f_mode == "diag":
        return A * precond.d_scale[None, :]
    return A.copy()


def _basis_u(problem: RegressionProblem, precond: Preconditioner) -> np.ndarray:
    A = problem.dense_A()
    return scipy.linalg.solve_triangular(precond.R, A.T, trans="T", lower=False).T


def compute_theory_constants(
    problem: RegressionProblem,
    precond: Preconditioner,
    dist: SamplingDistribution,
    x_ref: np.ndarray,
    x0: np.ndarray | None = None,
) -> TheoryConstants:
    """Evaluate every constant of the convergence statements on this instance."""
    p = problem.p
    d = problem.d
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    U = _basis_u(problem, precond)
    RF = precond.rf_matrix()
    RF_inv = np.linalg.inv(RF)

    gamma = dist.gamma
    c1 = (1.0 + gamma) / (1.0 - gamma)
    ref_h = precond.h_norm_sq(x_ref)
    gap_h = precond.h_norm_sq(x_ref - x0)
    c2 = gap_h / ref_h if ref_h > 0 else float("inf")

    r = problem.dense_A() @ x_ref - problem.b
    ax = problem.dense_A() @ x_ref
    if p == 1:
        f_opt = float(np.abs(r).sum())
        c3 = float(np.abs(ax).sum()) / f_opt if f_opt > 0 else float("inf")
        h_opt = f_opt
        alpha = elementwise_p_norm(U, 1)
        beta = float("nan")
        kappa_bar_sq = float("nan")
        mu = sup_l = sigma_sq = float("nan")
    else:
        f_opt = float(np.linalg.norm(r))
        c3 = float(ax @ ax) / f_opt**2 if f_opt > 0 else float("inf")
        h_opt = f_opt**2
        rep = l2_conditioning(U)
        alpha, beta = rep.alpha, rep.beta
        kappa_bar_sq = rep.kappa_bar**2
        AF = _af_matrix(problem, precond)
        mu = 2.0 * float(np.linalg.svd(AF, compute_uv=False)[-1]) ** 2
        row_sq = (AF * AF).sum(axis=1)
        pos = dist.probs > 0
        sup_l = float((2.0 * row_sq[pos] / dist.probs[pos]).max())
        sigma_sq = float(4.0 * ((r[pos] ** 2) * row_sq[pos] / dist.probs[pos]).sum())

    return TheoryConstants(
        c1=c1,
        c2=c2,
        c3=c3,
        mu=mu,
        sup_L=sup_l,
        sigma_sq=sigma_sq,
        alpha=alpha,
        beta=beta,
        kappa_bar_sq=kappa_bar_sq,
        rf_el1=elementwise_p_norm(RF, 1),
        rf_inv_el1=elementwise_p_norm(RF_inv, 1),
        rf_spec=float(np.linalg.norm(RF, 2)),
        rf_inv_spec=float(np.linalg.norm(RF_inv, 2)),
        x0_gap_h=gap_h,
        h_opt=h_opt,
    )


def theory_stepsize_l1(
    A,
    b,
    precond: Preconditioner,
    dist: SamplingDistribution,
    x0: np.ndarray | None,
    x_ref: np.ndarray,
    T: int,
) -> float:
    """Optimal constant step for the T-step mean-iterate l1 solve.

    eta = ||y* - y0||_2 / (alpha |RF|_1 sqrt(T+1)) * (1-gamma)/(1+gamma) with
    y = F^-1 x and alpha = |A R^-1|_1 computed exactly (element-wise norm).
    """
    if x_ref is None:
        raise ValueError("theory step size requires a reference solution")
    x_ref = np.asarray(x_ref, dtype=float)
    x0 = np.zeros_like(x_ref) if x0 is None else np.asarray(x0, dtype=float)
    U = scipy.linalg.solve_triangular(
        precond.R, (np.asarray(A, dtype=float)).T, trans="T", lower=False
    ).T
    alpha = elementwise_p_norm(U, 1)
    rf_el1 = elementwise_p_norm(precond.rf_matrix(), 1)
    y_gap = float(np.linalg.norm(precond.apply_F_inv(x_ref - x0)))
    gamma = dist.gamma
    return (
        y_gap / (alpha * rf_el1 * math.sqrt(T + 1.0)) * (1.0 - gamma) / (1.0 + gamma)
    )


def theory_iterations_l1(
    kappa_bar_1: float,
    kappa_hat_rf: float,
    c1: float,
    c2: float,
    c3: float,
    d: int,
    eps: float,
) -> int:
    """Iteration count T = d kappa_bar_1^2 kappa_hat(RF)^2 c1^2 c2 c3^2 / eps^2."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = d * kappa_bar_1**2 * kappa_hat_rf**2 * c1**2 * c2 * c3**2 / eps**2
    return max(1, int(math.ceil(t)))


def estimate_l1_conditioning(
    U: np.ndarray, num_dirs: int = 2000, seed: int = 0
) -> tuple[float, float, float]:
    """(alpha, beta_hat, alpha*beta_hat) for the l1 norm.

    alpha = |U|_1 is exact; beta (the smallest-gain constant against the
    sup norm) is not computable in polynomial time, so beta_hat is a
    Monte-Carlo lower estimate max_x ||x||_inf / ||Ux||_1 over random unit
    directions plus the coordinate directions.
    """
    U = np.asarray(U, dtype=float)
    d = U.shape[1]
    rng = np.random.default_rng(seed)
    X = np.concatenate([np.eye(d), rng.standard_normal((d, num_dirs))], axis=1)
    X /= np.linalg.norm(X, axis=0)
    num = np.abs(X).max(axis=0)
    den = np.abs(U @ X).sum(axis=0)
    keep = den > 0
    beta_hat = float((num[keep] / den[keep]).max())
    alpha = elementwise_p_norm(U, 1)
    return alpha, beta_hat, alpha * beta_hat


def theory_stepsize_l2(
    A,
    b,
    precond: Preconditioner,
    dist: SamplingDistribution,
    eps: float,
    x_ref: np.ndarray,
    x0: np.ndarray | None = None,
) -> tuple[float, int]:
    """(eta, T) achieving E ||A(x_T - x*)||^2 <= eps ||A x*||^2.

    Exact constants of the preconditioned least-squares problem: strong
    convexity mu = 2 sigma_min(AF)^2, per-sample Lipschitz sup_i 2||A_i F||^2
    / p_i and gradient noise at the optimum sigma^2 = 4 sum_i r_i^2
    ||A_i F||^2 / p_i.  The prediction-norm target eps maps to the y-space
    target eps~ = eps ||A x*||^2 / ||AF||_2^2; then eta = eps~ mu / (2 sigma^2
    + 2 eps~ mu sup_L) and T = log(2||y0 - y*||^2 / eps~) (sigma^2/(eps~ mu^2)
    + sup_L/mu).  A consistent system (sigma^2 = 0) caps eta at 1/(2 sup_L)
    and leaves only the log(1/eps) growth in T.
    """
    if x_ref is None:
        raise ValueError("theory step size requires a reference solution")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    x_ref = np.asarray(x_ref, dtype=float)
    x0 = np.zeros_like(x_ref) if x0 is None else np.asarray(x0, dtype=float)

    prob = RegressionProblem(A=A, b=b, p=2)
    AF = _af_matrix(prob, precond)
    sv = np.linalg.svd(AF, compute_uv=False)
    mu = 2.0 * float(sv[-1]) ** 2
    af_spec_sq = float(sv[0]) ** 2
    row_sq = (AF * AF).sum(axis=1)
    pos = dist.probs > 0
    sup_l = float((2.0 * row_sq[pos] / dist.probs[pos]).max())
    r = A @ x_ref - b
    sigma_sq = float(4.0 * ((r[pos] ** 2) * row_sq[pos] / dist.probs[pos]).sum())

    ax_sq = float(np.linalg.norm(A @ x_ref) ** 2)
    if ax_sq == 0:
        raise ValueError("reference solution maps to zero; target is degenerate")
    eps_y = eps * ax_sq / af_spec_sq
    eta = eps_y * mu / (2.0 * sigma_sq + 2.0 * eps_y * mu * sup_l)
    y_gap_sq = float(np.linalg.norm(precond.apply_F_inv(x_ref - x0)) ** 2)
    log_term = math.log(max(2.0 * y_gap_sq / eps_y, math.e))
    t = log_term * (sigma_sq / (eps_y * mu**2) + sup_l / mu)
    return eta, max(1, int(math.ceil(t)))


def predicted_bound_l1(
    constants: TheoryConstants, precond: Preconditioner, T: int, eta: float
) -> float:
    """Upper bound on E f(x_bar) - f(x*) after T mean-averaged l1 steps.

    bound = ||x* - x0||_H^2 / (2 eta T) + (eta/2) (c1 alpha |RF|_1)^2.
    """
    if eta <= 0 or T <= 0:
        return float("inf")
    return constants.x0_gap_h / (2.0 * eta * T) + 0.5 * eta * (
        constants.c1 * constants.alpha * constants.rf_el1
    ) ** 2


def predicted_bound_l2(
    constants: TheoryConstants,
    precond: Preconditioner,
    T: int,
    eta: float,
    x0_err: float,
) -> float:
    """Upper bound on E ||x_T - x*||_H^2 for the constant-step l2 iteration.

    Geometric contraction at rate 1 - 4 eta (1 - 2 eta c1 alpha^2 ||RF||^2) /
    (beta^2 ||(RF)^-1||^2) down to the noise floor 2 c1 eta kappa_bar^2
    kappa(RF)^2 h(y*) / (1 - 2 c1 eta alpha^2 ||RF||^2).  Steps at or above
    1/(2 c1 alpha^2 ||RF||^2) flip the contraction's sign and are rejected.
    """
    guard = 2.0 * constants.c1 * eta * constants.alpha**2 * constants.rf_spec**2
    if guard >= 1.0:
        raise ValueError(
            f"step size {eta} too large: 2 c1 eta alpha^2 ||RF||^2 = {guard:.3f} >= 1"
        )
    rate = 1.0 - 4.0 * eta * (1.0 - guard) / (
        constants.beta**2 * constants.rf_inv_spec**2
    )
    rate = min(max(rate, 0.0), 1.0)
    kappa_rf_sq = (constants.rf_spec * constants.rf_inv_spec) ** 2
    floor = (
        2.0
        * constants.c1
        * eta
        * constants.kappa_bar_sq
        * kappa_rf_sq
        * constants.h_opt
        / (1.0 - guard)
    )
    return rate**T * x0_err + floor
