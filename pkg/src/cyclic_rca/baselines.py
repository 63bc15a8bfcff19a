"""Competitor root-cause methods: marginal Z-score, Cholesky permutation search,
and regularized direct solves of ``Sigma xi = x``."""
from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .precision_est import default_ridge, sample_covariance
from .rca import _values, _z_sq_columns, rank_scores

logger = logging.getLogger(__name__)

DEFAULT_EXTREME_TAU = 9.0
PERMUTATION_CAP = 10 ** 6
_CHUNK = 8192


@dataclass(eq=False)
class BaselineResult:
    scores: np.ndarray
    ranks: np.ndarray
    method: str
    permutation_found: Optional[Tuple[int, ...]] = None
    wall_time: float = float("nan")
    #: True when the Cholesky search ran out of budget without a success
    fallback: bool = False
    permutations_tried: int = 0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "scores": [float(s) for s in self.scores],
            "ranks": [int(r) for r in self.ranks],
            "permutation_found": None if self.permutation_found is None else list(self.permutation_found),
            "fallback": self.fallback,
            "wall_time": self.wall_time,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _inputs(data, x_tilde):
    X = _values(data)
    x = _values(x_tilde).reshape(-1)
    if X.ndim != 2 or X.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: data has {X.shape[-1]} columns, sample has {x.size}")
    if X.shape[0] < 2:
        raise ValueError("need at least two normal rows")
    return X, x


def zscore_baseline(data, x_tilde) -> BaselineResult:
    """Rank nodes by the squared marginal Z-score of the outlier."""
    t0 = time.perf_counter()
    X, x = _inputs(data, x_tilde)
    scores = _z_sq_columns(x[None, :], X)[0]
    return BaselineResult(scores, rank_scores(scores), "zscore", wall_time=time.perf_counter() - t0)


def _lexicographic_chunks(p: int, total: int):
    it = itertools.permutations(range(p))
    done = 0
    while done < total:
        block = np.array(list(itertools.islice(it, min(_CHUNK, total - done))), dtype=np.int64)
        if block.size == 0:
            return
        done += len(block)
        yield block


def _random_chunks(p: int, total: int, seed: int):
    rng = np.random.default_rng(seed)
    done = 0
    while done < total:
        n = min(_CHUNK, total - done)
        block = rng.permuted(np.tile(np.arange(p, dtype=np.int64), (n, 1)), axis=1)
        done += n
        yield np.ascontiguousarray(block)


def _whiten(S: np.ndarray, d: np.ndarray, perm: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(S[np.ix_(perm, perm)])
    v = np.linalg.solve(L, d[perm])
    out = np.empty_like(v)
    out[perm] = v
    return out


def cholesky_rca(
    data,
    x_tilde,
    extreme_tau: float = DEFAULT_EXTREME_TAU,
    max_permutations: Optional[int] = None,
    seed: int = 0,
    backend: Optional[str] = None,
) -> BaselineResult:
    """Search variable orders for a Cholesky whitening with one extreme entry.

    For a permutation ``pi`` the permuted sample covariance is factored as
    ``L L'`` and ``v = L^{-1}(x - mu)[pi]``. Because the normal rows whiten
    to unit variance under the same map, ``v_i**2`` is the squared Z-score
    of entry ``i``. The first order with exactly one ``v_i**2 > extreme_tau``
    wins and its extreme node ranks first.

    Orders are enumerated lexicographically when ``p!`` fits the budget
    (default ``min(p!, 10**6)``), otherwise drawn at random from ``seed``.
    Without a success the ranking comes from the best order seen (fewest
    extreme entries, then largest), or the identity order, and ``fallback``
    is set.
    """
    t0 = time.perf_counter()
    X, x = _inputs(data, x_tilde)
    p = x.size
    S = sample_covariance(X)
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        S = S + default_ridge(S) * np.eye(p)
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError("Cholesky factorization failed even with ridge") from None
    S = np.ascontiguousarray(S)
    d = np.ascontiguousarray(x - X.mean(axis=0))

    n_all = math.factorial(p)
    budget = min(n_all, PERMUTATION_CAP) if max_permutations is None else min(n_all, int(max_permutations))
    if budget < 1:
        raise ValueError("max_permutations must be positive")
    if n_all <= PERMUTATION_CAP:
        chunks = _lexicographic_chunks(p, budget)
    else:
        chunks = _random_chunks(p, budget, seed)

    kern = kernels.get_backend(backend)
    tried = 0
    found = None
    best_perm, best_key = None, None
    for block in chunks:
        first, best, best_count, best_max = kern.cholesky_search(S, d, block, float(extreme_tau))
        if first >= 0:
            tried += first + 1
            found = block[first]
            break
        tried += len(block)
        if best >= 0:
            key = (best_count, -best_max)
            if best_key is None or key < best_key:
                best_key, best_perm = key, block[best].copy()

    if found is not None:
        scores = _whiten(S, d, found) ** 2
        perm = tuple(int(i) for i in found)
        fallback = False
    else:
        chosen = best_perm if best_perm is not None else np.arange(p)
        scores = _whiten(S, d, chosen) ** 2
        perm = None
        fallback = True
        logger.info("cholesky search found no single-extreme order in %d permutations", tried)
    return BaselineResult(
        scores,
        rank_scores(scores),
        "cholesky",
        permutation_found=perm,
        wall_time=time.perf_counter() - t0,
        fallback=fallback,
        permutations_tried=tried,
    )


def lasso_duality_gap(G: np.ndarray, c: np.ndarray, yy: float, n: int, alpha: float, b: np.ndarray) -> float:
    """Gap of ``|y - Xb|^2/(2n) + alpha|b|_1`` from Gram data, in units of ``n``.

    ``G = X'X/n``, ``c = X'y/n`` and ``yy = y'y``.
    """
    Gb = G @ b
    rr = yy - 2 * n * (b @ c) + n * (b @ Gb)
    xtr = n * np.abs(c - Gb).max()
    const = min(1.0, alpha * n / xtr) if xtr > 0 else 1.0
    ry = yy - n * (b @ c)
    gap = 0.5 * rr * (1 + const ** 2) + alpha * n * np.abs(b).sum() - const * ry
    return float(gap)


def _lasso(S: np.ndarray, x: np.ndarray, reg: float, max_iter: int, tol: float) -> np.ndarray:
    # homotopy solver: exact on the ill-conditioned designs where
    # coordinate descent stalls
    from sklearn.linear_model import LassoLars

    n = x.size
    b = LassoLars(alpha=reg, fit_intercept=False, max_iter=max_iter).fit(S, x).coef_
    G, c, yy = S.T @ S / n, S.T @ x / n, float(x @ x)
    gap = lasso_duality_gap(G, c, yy, n, reg, b)
    if not gap <= tol * max(yy, np.finfo(float).tiny):
        raise RuntimeError(f"lasso solve did not converge (duality gap {gap:.3e})")
    return b


def direct_solve_baseline(
    data,
    x_tilde,
    variant: str = "ridge",
    reg: float = 1e-4,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> BaselineResult:
    """Scores ``|xi|`` from a regularized solve of ``Sigma_hat xi = x``.

    ``ridge`` uses ``(S'S + reg I)^{-1} S'x``. ``lasso`` minimizes
    ``|x - S xi|^2 / (2p) + reg |xi|_1`` along the exact homotopy path and
    checks the duality gap against ``tol * |x|^2``. No baseline standardization is
    applied.
    """
    t0 = time.perf_counter()
    X, x = _inputs(data, x_tilde)
    p = x.size
    S = sample_covariance(X)
    if variant == "ridge":
        xi = np.linalg.solve(S.T @ S + reg * np.eye(p), S.T @ x)
    elif variant == "lasso":
        xi = _lasso(S, x, float(reg), max_iter, tol)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if not np.all(np.isfinite(xi)):
        raise RuntimeError("non-finite solution in direct solve")
    scores = np.abs(xi)
    return BaselineResult(scores, rank_scores(scores), variant, wall_time=time.perf_counter() - t0)
