"""Loading metric CSVs and preparing them for root-cause scoring.

The pipeline removes unusable columns, standardizes with statistics from
the normal period only, and merges near-collinear column groups into
whitened principal components.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import connected_components

from .datagen import Dataset

logger = logging.getLogger(__name__)

MetricFilter = Union[None, str, Sequence[str], Callable[[str], bool]]


@dataclass(frozen=True)
class PreprocessConfig:
    """Preprocessing settings.

    ``metric_filter`` keeps only matching columns: a regular expression, an
    explicit list of labels, or a predicate on the label.
    """

    nan_col_threshold: float = 0.2
    variance_explained: float = 0.9
    robust_standardize: bool = True
    corr_threshold: float = 0.98
    metric_filter: MetricFilter = None

    def __post_init__(self):
        for name in ("nan_col_threshold", "variance_explained", "corr_threshold"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")


@dataclass
class MergedGroup:
    component: str
    sources: Tuple[str, ...]
    #: loadings[k][s]: weight of source s in the k-th retained component
    loadings: List[List[float]]
    components: Tuple[str, ...]
    variance_retained: float


@dataclass
class PreprocessReport:
    input_labels: Tuple[str, ...] = ()
    dropped_filtered: Tuple[str, ...] = ()
    dropped_constant: Tuple[str, ...] = ()
    dropped_duplicate: Tuple[str, ...] = ()
    dropped_nan: Tuple[str, ...] = ()
    dropped_rows_normal: int = 0
    dropped_rows_anomalous: int = 0
    center: Dict[str, float] = field(default_factory=dict)
    scale: Dict[str, float] = field(default_factory=dict)
    merged_groups: List[MergedGroup] = field(default_factory=list)
    #: label of each output column, and the source labels behind it
    output_labels: Tuple[str, ...] = ()
    output_sources: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    final_dim: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def load_csv(path) -> Dataset:
    """Read a CSV with a header row; non-numeric cells become NaN."""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path}: empty file") from None
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if frame.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    frame = frame.apply(pd.to_numeric, errors="coerce")
    if frame.isna().all(axis=0).all():
        raise ValueError(f"{path}: no numeric columns")
    return Dataset(frame.to_numpy(dtype=float), tuple(str(c) for c in frame.columns))


def _select(labels: Sequence[str], flt: MetricFilter) -> List[bool]:
    if flt is None:
        return [True] * len(labels)
    if isinstance(flt, str):
        pat = re.compile(flt)
        return [bool(pat.search(c)) for c in labels]
    if callable(flt):
        return [bool(flt(c)) for c in labels]
    wanted = set(flt)
    return [c in wanted for c in labels]


def _whitened_pca(block: np.ndarray, target: float):
    """Per-cluster PCA on centered normal rows; returns (V_k, sqrt eigenvalues, retained share)."""
    m = block.shape[0]
    _, s, Vt = np.linalg.svd(block, full_matrices=False)
    var = s ** 2 / (m - 1)
    share = np.cumsum(var) / var.sum()
    k = int(np.searchsorted(share, target - 1e-12) + 1)
    k = min(k, len(var))
    V = Vt[:k].T
    # sign convention: largest-magnitude loading positive
    flip = np.sign(V[np.abs(V).argmax(axis=0), np.arange(k)])
    return V * flip, np.sqrt(var[:k]), float(share[k - 1])


def preprocess(normal: Dataset, anomalous: Dataset, config: PreprocessConfig = PreprocessConfig()):
    """Clean, standardize and merge collinear columns of both periods.

    Steps, in order: metric filter; drop columns constant in the normal
    period; drop exact duplicates of an earlier column; drop columns whose
    missing fraction over both periods exceeds ``nan_col_threshold``; drop
    rows with any remaining NaN; standardize by normal-period mean and
    standard deviation; group columns connected by ``|corr| >
    corr_threshold`` in the normal period and replace each group of two or
    more by its leading principal components, enough to explain
    ``variance_explained`` of the group variance. Component scores are
    divided by their normal-period standard deviation, so running the
    pipeline on its own output changes nothing.

    Returns ``(normal_out, anomalous_out, report)``.
    """
    if tuple(normal.column_labels) != tuple(anomalous.column_labels):
        raise ValueError("normal and anomalous data must have the same columns")
    labels = list(normal.column_labels)
    N = pd.DataFrame(normal.values, columns=labels)
    An = pd.DataFrame(anomalous.values, columns=labels)
    rep = PreprocessReport(input_labels=tuple(labels))

    keep = _select(labels, config.metric_filter)
    rep.dropped_filtered = tuple(c for c, k in zip(labels, keep) if not k)
    cols = [c for c, k in zip(labels, keep) if k]

    const = [c for c in cols if N[c].nunique(dropna=True) <= 1]
    rep.dropped_constant = tuple(const)
    cols = [c for c in cols if c not in set(const)]

    dup = []
    seen = []
    for c in cols:
        col = N[c].to_numpy()
        if any(np.array_equal(col, N[s].to_numpy(), equal_nan=True) for s in seen):
            dup.append(c)
        else:
            seen.append(c)
    rep.dropped_duplicate = tuple(dup)
    cols = seen

    both = pd.concat([N[cols], An[cols]], axis=0)
    frac = both.isna().mean(axis=0)
    nan_cols = [c for c in cols if frac[c] > config.nan_col_threshold]
    rep.dropped_nan = tuple(nan_cols)
    cols = [c for c in cols if c not in set(nan_cols)]
    if not cols:
        raise ValueError("empty after preprocessing: every column was dropped")

    N, An = N[cols], An[cols]
    n_ok, a_ok = N.notna().all(axis=1), An.notna().all(axis=1)
    rep.dropped_rows_normal = int((~n_ok).sum())
    rep.dropped_rows_anomalous = int((~a_ok).sum())
    Xn, Xa = N[n_ok].to_numpy(dtype=float), An[a_ok].to_numpy(dtype=float)
    if Xn.shape[0] < 2 or Xa.shape[0] < 1:
        raise ValueError("empty after preprocessing: too few complete rows")

    if config.robust_standardize:
        mu = Xn.mean(axis=0)
        sd = Xn.std(axis=0, ddof=1)
        sd[sd == 0] = 1.0  # only after row removal made a column constant
        Xn = (Xn - mu) / sd
        Xa = (Xa - mu) / sd
    else:
        mu, sd = np.zeros(len(cols)), np.ones(len(cols))
    rep.center = {c: float(v) for c, v in zip(cols, mu)}
    rep.scale = {c: float(v) for c, v in zip(cols, sd)}

    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.corrcoef(Xn, rowvar=False) if len(cols) > 1 else np.ones((1, 1))
    R = np.nan_to_num(np.atleast_2d(R))
    adj = np.abs(R) > config.corr_threshold
    np.fill_diagonal(adj, False)
    n_groups, group_of = connected_components(adj, directed=False)

    out_n, out_a, out_labels = [], [], []
    first_of = {}
    for g in range(n_groups):
        first_of[g] = int(np.flatnonzero(group_of == g)[0])
    for g in sorted(range(n_groups), key=first_of.get):
        idx = np.flatnonzero(group_of == g)
        if idx.size == 1:
            k = idx[0]
            out_n.append(Xn[:, k:k + 1])
            out_a.append(Xa[:, k:k + 1])
            out_labels.append(cols[k])
            rep.output_sources[cols[k]] = (cols[k],)
            continue
        srcs = tuple(cols[k] for k in idx)
        center = Xn[:, idx].mean(axis=0)
        V, sv, share = _whitened_pca(Xn[:, idx] - center, config.variance_explained)
        out_n.append((Xn[:, idx] - center) @ V / sv)
        out_a.append((Xa[:, idx] - center) @ V / sv)
        base = "+".join(srcs)
        names = tuple(f"pca[{base}]#{j + 1}" for j in range(V.shape[1]))
        out_labels.extend(names)
        for nm in names:
            rep.output_sources[nm] = srcs
        rep.merged_groups.append(
            MergedGroup(f"pca[{base}]", srcs, V.T.tolist(), names, share)
        )
        logger.info("merged %d columns into %d component(s)", len(srcs), V.shape[1])

    rep.output_labels = tuple(out_labels)
    rep.final_dim = len(out_labels)
    return (
        Dataset(np.hstack(out_n), rep.output_labels),
        Dataset(np.hstack(out_a), rep.output_labels),
        rep,
    )


def map_back(scores, report: PreprocessReport) -> Dict[str, float]:
    """Attribute output-column scores to the original labels behind them.

    Unmerged columns pass through. In a merged group, source ``s`` gets
    ``score_k * |l_ks| / max_s' |l_ks'|`` from component ``k``, so the
    dominant source keeps the full score; with several components the
    largest attribution wins.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.size != report.final_dim:
        raise ValueError(f"label mismatch: {scores.size} scores for {report.final_dim} output columns")
    by_label = dict(zip(report.output_labels, scores))
    out: Dict[str, float] = {}
    merged = {nm: grp for grp in report.merged_groups for nm in grp.components}
    for label in report.output_labels:
        grp = merged.get(label)
        if grp is None:
            out[label] = float(by_label[label])
            continue
        row = np.abs(np.asarray(grp.loadings[grp.components.index(label)]))
        share = row / row.max()
        for src, w in zip(grp.sources, share):
            out[src] = max(out.get(src, -np.inf), float(by_label[label] * w))
    return out
