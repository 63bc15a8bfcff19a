"""Root-cause scoring by the precision transform, with e-value FDR selection."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .datagen import AnomalousSample, Dataset
from .precision_est import EstimatorConfig, PrecisionEstimate, estimate_with_escalation

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.25
DEFAULT_FDR_ALPHA = 0.1


@dataclass(eq=False)
class ScoreVector:
    xi: np.ndarray
    baseline: np.ndarray
    z_sq: np.ndarray
    gate: np.ndarray


@dataclass(eq=False)
class RcaReport:
    """Scores, e-values, ranks and the FDR-selected candidates for one outlier.

    ``ranks[i]`` is the 1-based rank of node ``i`` (descending score, ties by
    lower index). ``selected`` lists node indices in descending e-value order.
    """

    scores: np.ndarray
    e_values: np.ndarray
    ranks: np.ndarray
    selected: Tuple[int, ...]
    tau: float
    alpha_fdr: float
    estimator: dict = field(default_factory=dict)
    method: str = "cyclic"
    labels: Optional[Tuple[str, ...]] = None
    gate: Optional[np.ndarray] = None
    wall_time: float = float("nan")

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "scores": [float(s) for s in self.scores],
            "e_values": [float(e) for e in self.e_values],
            "ranks": [int(r) for r in self.ranks],
            "selected": [int(s) for s in self.selected],
            "tau": float(self.tau),
            "alpha": float(self.alpha_fdr),
            "estimator": self.estimator,
        }
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _theta_array(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, PrecisionEstimate) else np.asarray(theta, dtype=float)


def transform(theta, x) -> np.ndarray:
    """``Theta @ x`` for a vector, or row-wise for a matrix of samples."""
    T = _theta_array(theta)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != T.shape[0]:
        raise ValueError(f"dimension mismatch: theta is {T.shape[0]}x{T.shape[1]}, sample has {x.shape[-1]}")
    return x @ T.T if x.ndim == 2 else T @ x


def z_score_sq(value: float, reference) -> float:
    """Squared standardized deviation of ``value`` from ``reference``.

    Uses the reference mean and ``(m-1)``-denominator standard deviation. A
    constant reference gives ``inf`` unless ``value`` equals it (then 0).
    """
    ref = np.asarray(reference, dtype=float)
    if ref.size < 2:
        raise ValueError("reference needs at least two values")
    mu = ref.mean()
    sd = ref.std(ddof=1)
    dev = value - mu
    if sd == 0.0:
        return 0.0 if dev == 0.0 else math.inf
    return float((dev / sd) ** 2)


def _z_sq_columns(values: np.ndarray, reference: np.ndarray) -> np.ndarray:
    # column-wise z_score_sq with the same zero-variance convention
    mu = reference.mean(axis=0)
    sd = reference.std(axis=0, ddof=1)
    dev = values - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (dev / sd) ** 2
    return np.where(sd > 0, z, np.where(dev == 0.0, 0.0, np.inf))


def e_values(xi, theta) -> np.ndarray:
    """``xi_i**2 / Theta_ii``; ``xi`` must come from a centered sample."""
    T = _theta_array(theta)
    d = np.diag(T)
    if np.any(d <= 0):
        raise ValueError("precision diagonal must be strictly positive")
    xi = np.asarray(xi, dtype=float)
    return xi ** 2 / d


def bh_evalue_select(e, alpha: float, n_hypotheses: Optional[int] = None) -> Tuple[int, ...]:
    """Benjamini-Hochberg for e-values.

    Sort descending; ``k*`` is the largest ``k`` with
    ``k * e_[k] >= n_hypotheses / alpha``, where ``n_hypotheses`` defaults
    to ``len(e)``. That default bounds the FDR by ``alpha`` for arbitrarily
    dependent e-values. ``n_hypotheses=1`` gives the more liberal rule
    ``k * e_[k] >= 1/alpha``, whose FDR bound is only ``alpha`` times the
    number of nulls.

    Returns the nodes of the top ``k*`` e-values (ties by lower index).
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    e = np.asarray(e, dtype=float)
    n = e.size if n_hypotheses is None else int(n_hypotheses)
    if n < 1:
        raise ValueError("n_hypotheses must be positive")
    order = np.lexsort((np.arange(e.size), -e))
    ks = np.arange(1, e.size + 1)
    ok = ks * e[order] >= n / alpha
    if not ok.any():
        return ()
    k_star = int(ks[ok].max())
    return tuple(int(i) for i in order[:k_star])


def rank_scores(scores) -> np.ndarray:
    """1-based rank of each node by descending score, ties to the lower index."""
    s = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(s.size), -s))
    ranks = np.empty(s.size, dtype=int)
    ranks[order] = np.arange(1, s.size + 1)
    return ranks


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, (Dataset, AnomalousSample)) else np.asarray(x, dtype=float)


def score_vector(theta, X: np.ndarray, x_tilde: np.ndarray) -> ScoreVector:
    xi = transform(theta, x_tilde)
    baseline = transform(theta, X)
    z_sq = _z_sq_columns(xi[None, :], baseline)[0]
    gate = _z_sq_columns(x_tilde[None, :], X)[0]
    return ScoreVector(xi, baseline, z_sq, gate)


def run_algorithm1(
    data,
    x_tilde,
    tau: float = DEFAULT_TAU,
    estimator: EstimatorConfig = EstimatorConfig(),
    fdr_alpha: float = DEFAULT_FDR_ALPHA,
    theta: Optional[Union[PrecisionEstimate, np.ndarray]] = None,
) -> RcaReport:
    """Score every node of one outlier against the normal data.

    The precision ``theta`` is estimated from ``data`` unless given. Scores
    are squared Z-scores of ``theta @ x_tilde`` against ``theta`` applied to
    the normal rows; a node whose own marginal squared Z-score is below
    ``tau`` gets score 0. E-values are computed from the mean-centered
    outlier, and the FDR selection runs on the gated e-values.
    """
    t0 = time.perf_counter()
    X = _values(data)
    x = _values(x_tilde).reshape(-1)
    if X.ndim != 2 or X.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: data has {X.shape[-1]} columns, sample has {x.size}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(x))):
        raise ValueError("data and sample must be finite")
    m, p = X.shape
    if m < p:
        logger.warning("fewer normal samples (%d) than variables (%d)", m, p)
    if theta is None:
        theta = estimate_with_escalation(X, estimator)
    T = _theta_array(theta)

    sv = score_vector(T, X, x)
    passed = sv.gate >= tau
    scores = np.where(passed, sv.z_sq, 0.0)
    xi_c = transform(T, x - X.mean(axis=0))
    e = e_values(xi_c, T)
    selected = bh_evalue_select(np.where(passed, e, 0.0), fdr_alpha)
    diag = theta.diagnostics() if isinstance(theta, PrecisionEstimate) else {"method": "given"}
    labels = data.column_labels if isinstance(data, Dataset) else None
    return RcaReport(
        scores=scores,
        e_values=e,
        ranks=rank_scores(scores),
        selected=selected,
        tau=tau,
        alpha_fdr=fdr_alpha,
        estimator=diag,
        labels=labels,
        gate=passed,
        wall_time=time.perf_counter() - t0,
    )


def propagation_route(
    data,
    x_tilde,
    root: int,
    tau: float = DEFAULT_TAU,
    estimator: EstimatorConfig = EstimatorConfig(),
    fdr_alpha: float = DEFAULT_FDR_ALPHA,
    max_depth: Optional[int] = None,
) -> List[Tuple[int, ...]]:
    """Trace where an identified root cause's anomaly went next.

    Repeatedly deletes the currently identified node from the data and the
    outlier, reruns the scoring, and records the FDR-selected set as the
    candidates of the next hop; the top-scoring candidate becomes the next
    identified node. Stops when nothing is selected, fewer than two columns
    remain, or after ``max_depth`` hops (default: number of columns).
    Candidate sets use the original column indices.
    """
    X = _values(data)
    x = _values(x_tilde).reshape(-1)
    p = X.shape[1]
    if not 0 <= root < p:
        raise ValueError(f"root index {root} out of range")
    max_depth = p if max_depth is None else max_depth
    alive = list(range(p))
    current = root
    route: List[Tuple[int, ...]] = []
    while len(route) < max_depth:
        pos = alive.index(current)
        alive.pop(pos)
        if len(alive) < 2:
            break
        report = run_algorithm1(X[:, alive], x[alive], tau, estimator, fdr_alpha)
        if not report.selected:
            break
        hop = tuple(alive[k] for k in report.selected)
        route.append(hop)
        best = max(report.selected, key=lambda k: (report.scores[k], -k))
        current = alive[best]
    return route
