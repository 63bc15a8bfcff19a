"""Precision-matrix estimation: ridge-stabilized inversion and graphical lasso."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .datagen import Dataset

logger = logging.getLogger(__name__)

METHODS = ("graphical_lasso", "inverse_covariance")


class IllConditionedCovarianceError(np.linalg.LinAlgError):
    """Covariance is not positive definite even after the ridge."""


class GlassoFailedError(RuntimeError):
    """Graphical lasso did not produce an acceptable estimate."""

    def __init__(self, message: str, duality_gap: float = float("nan"), iterations: int = 0):
        super().__init__(f"glasso failed: {message} (last duality gap {duality_gap:.3e})")
        self.reason = message
        self.duality_gap = duality_gap
        self.iterations = iterations


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for precision estimation.

    ``tol`` and ``ridge_eps`` default to ``1e-4 * mean(|diag S|)`` and
    ``1e-8 * trace(S) / p`` when left as None.
    """

    method: str = "graphical_lasso"
    alpha: float = 0.1
    max_iter: int = 100
    tol: Optional[float] = None
    ridge_eps: Optional[float] = None
    escalation: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown estimator method {self.method!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(eq=False)
class PrecisionEstimate:
    theta: np.ndarray
    method: str
    alpha_used: float = 0.0
    condition_number: float = float("nan")
    iterations: int = 0
    #: dual objective ``log det W`` after each sweep (graphical lasso only)
    objective_trace: List[float] = field(default_factory=list)
    duality_gap: float = float("nan")
    #: escalation history: (method, alpha, outcome)
    attempts: List[Tuple[str, float, str]] = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "method": self.method,
            "alpha_used": self.alpha_used,
            "condition_number": self.condition_number,
            "iterations": self.iterations,
            "attempts": [list(a) for a in self.attempts],
        }


def sample_covariance(data) -> np.ndarray:
    """Unbiased column covariance, ``(m-1)`` denominator."""
    X = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two rows to estimate a covariance")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / (X.shape[0] - 1)
    return 0.5 * (S + S.T)


def default_ridge(sigma: np.ndarray) -> float:
    return 1e-8 * float(np.trace(sigma)) / sigma.shape[0]


def invert_covariance(sigma: np.ndarray, ridge_eps: float = 0.0) -> PrecisionEstimate:
    """``(sigma + ridge_eps I)^{-1}`` through a Cholesky factorization."""
    sigma = np.asarray(sigma, dtype=float)
    M = sigma + ridge_eps * np.eye(sigma.shape[0])
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise IllConditionedCovarianceError(
            f"ill-conditioned covariance: not positive definite with ridge {ridge_eps:.3e}"
        ) from None
    Linv = np.linalg.inv(L)
    theta = Linv.T @ Linv
    if not np.all(np.isfinite(theta)):
        raise IllConditionedCovarianceError("ill-conditioned covariance: non-finite inverse")
    eig = np.linalg.eigvalsh(M)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
    return PrecisionEstimate(0.5 * (theta + theta.T), "inverse_covariance", 0.0, cond)


def glasso_objective(theta: np.ndarray, S: np.ndarray, alpha: float) -> float:
    """Penalized log-likelihood ``log det T - tr(S T) - alpha |T|_1,off``."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(logdet - np.sum(S * theta) - alpha * off)


def _theta_from_w(W: np.ndarray, B: np.ndarray) -> np.ndarray:
    p = W.shape[0]
    theta = np.zeros((p, p))
    for j in range(p):
        rest = np.arange(p) != j
        beta = B[j, rest]
        t_jj = 1.0 / (W[j, j] - W[j, rest] @ beta)
        theta[j, j] = t_jj
        theta[rest, j] = -beta * t_jj
    return 0.5 * (theta + theta.T)


def _duality_gap(theta: np.ndarray, S: np.ndarray, alpha: float, W: np.ndarray) -> float:
    # dual objective -log det W - p; gap = dual - primal
    sign, logdet_w = np.linalg.slogdet(W)
    if sign <= 0:
        return float("inf")
    return float(-logdet_w - W.shape[0] - glasso_objective(theta, S, alpha))


def graphical_lasso(sigma: np.ndarray, config: EstimatorConfig = EstimatorConfig(), backend=None) -> PrecisionEstimate:
    """L1-penalized Gaussian maximum likelihood by block coordinate descent.

    Works on the covariance estimate ``W`` one column at a time, each column
    a lasso problem solved exactly by an active-set (feature-sign) search. The diagonal is not
    penalized. Stops once no entry of ``W`` moves by more than ``tol`` in a
    sweep. ``objective_trace`` records ``log det W`` per sweep, which is the
    dual of the penalized likelihood and never decreases.

    Raises ``GlassoFailedError`` on non-convergence, loss of positive
    definiteness or non-finite values.
    """
    S = np.ascontiguousarray(sigma, dtype=float)
    p = S.shape[0]
    if S.shape != (p, p) or not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise ValueError("sigma must be a symmetric square matrix")
    if not config.alpha > 0:
        raise ValueError("graphical lasso needs alpha > 0")
    kern = kernels.get_backend(backend)
    alpha = float(config.alpha)
    diag = np.diag(S).copy()
    tol = config.tol if config.tol is not None else 1e-4 * float(np.mean(np.abs(diag)))
    tol = tol if tol > 0 else 1e-12

    # start from a dual-feasible, positive-definite point: off-diagonals
    # shrunk toward zero by strictly less than alpha
    off_max = np.abs(S - np.diag(diag)).max() if p > 1 else 0.0
    shrink = min(0.05, 0.999 * alpha / off_max) if off_max > 0 else 0.0
    W = S * (1.0 - shrink)
    W[np.diag_indices(p)] = diag
    W = np.ascontiguousarray(W)
    B = np.zeros((p, p))
    trace: List[float] = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        change = kern.glasso_sweep(W, S, B, alpha)
        if not np.all(np.isfinite(W)):
            raise GlassoFailedError("non-finite values in working covariance", iterations=it)
        sign, logdet = np.linalg.slogdet(W)
        if sign <= 0:
            raise GlassoFailedError("working covariance lost positive definiteness", iterations=it)
        trace.append(float(logdet))
        if change < tol:
            converged = True
            break

    theta = _theta_from_w(W, B)
    gap = _duality_gap(theta, S, alpha, W)
    if not converged:
        raise GlassoFailedError(f"no convergence after {config.max_iter} sweeps", gap, it)
    if not np.all(np.isfinite(theta)):
        raise GlassoFailedError("non-finite precision estimate", gap, it)
    eig = np.linalg.eigvalsh(theta)
    if not eig[0] > 0:
        raise GlassoFailedError("precision estimate not positive definite", gap, it)
    return PrecisionEstimate(
        theta,
        "graphical_lasso",
        alpha,
        float(eig[-1] / eig[0]),
        it,
        trace,
        gap,
    )


def estimate_with_escalation(data, config: EstimatorConfig = EstimatorConfig()) -> PrecisionEstimate:
    """Estimate the precision of ``data`` with the escalation policy.

    Graphical lasso is tried at ``alpha``, ``10 alpha`` and ``100 alpha``;
    after the third failure the ridge-stabilized inverse covariance is
    returned with ``method='fallback'``. Without escalation a single
    failure raises. ``method='inverse_covariance'`` skips the lasso.
    """
    S = sample_covariance(data)
    ridge = config.ridge_eps if config.ridge_eps is not None else default_ridge(S)
    if config.method == "inverse_covariance":
        est = invert_covariance(S, ridge)
        est.attempts.append(("inverse_covariance", 0.0, "ok"))
        return est

    attempts: List[Tuple[str, float, str]] = []
    alphas = [config.alpha * 10 ** k for k in range(3)] if config.escalation else [config.alpha]
    for a in alphas:
        try:
            est = graphical_lasso(S, replace(config, alpha=a))
        except GlassoFailedError as exc:
            logger.info("graphical lasso failed at alpha=%g: %s", a, exc.reason)
            attempts.append(("graphical_lasso", a, exc.reason))
            if not config.escalation:
                raise
            continue
        attempts.append(("graphical_lasso", a, "ok"))
        est.attempts = attempts
        return est

    logger.warning("graphical lasso failed at all alphas; falling back to inverse covariance")
    est = invert_covariance(S, ridge)
    attempts.append(("inverse_covariance", 0.0, "ok"))
    est.method = "fallback"
    est.attempts = attempts
    return est
