"""Simulation benchmark: run root-cause methods over a grid of random SEMs."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines
from .datagen import (
    GraphGenConfig,
    generate_graph,
    random_perturbation,
    sample_anomalous,
    sample_normal,
    semisynthetic_scenario,
)
from .precision_est import EstimatorConfig
from .rca import run_algorithm1
from .sem_model import observed_precision, path_matrix

logger = logging.getLogger(__name__)

METHODS = ("cyclic-inverse", "cyclic-glasso", "zscore", "cholesky", "lasso", "ridge")
DEFAULT_METHODS = ("cyclic-inverse", "cyclic-glasso", "zscore", "cholesky")
SUPPORT_RTOL = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    """One grid point. ``m`` defaults to ``10 * p``.

    When ``scenario_target`` names a node of the microservice scenario the
    random-SEM fields are ignored and that scenario is simulated instead.
    """

    p: int = 10
    cyclic: bool = False
    n_latent: int = 0
    noise_family: str = "gaussian"
    n_root_causes: int = 1
    delta: float = 10.0
    expected_degree: float = 3.0
    m: Optional[int] = None
    replications: int = 50
    seed: int = 0
    methods: Tuple[str, ...] = DEFAULT_METHODS
    tau: float = 0.25
    fdr_alpha: float = 0.1
    glasso_alpha: float = 0.1
    cholesky_max_permutations: Optional[int] = None
    scenario_target: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        for name in ("p", "replications", "n_root_causes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_latent < 0:
            raise ValueError("n_latent must be non-negative")
        if self.m is not None and self.m < 2:
            raise ValueError("m must be at least 2")
        if self.n_root_causes > self.p + self.n_latent:
            raise ValueError("more root causes than nodes")
        bad = [mt for mt in self.methods if mt not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")

    @property
    def sample_size(self) -> int:
        return self.m if self.m is not None else 10 * self.p


@dataclass
class Record:
    """One (replication, method) outcome."""

    grid_id: int
    replication: int
    method: str
    roots: Tuple[int, ...]
    ranks: Tuple[int, ...] = ()
    worst_rank: Optional[int] = None
    precision: float = float("nan")
    recall: float = float("nan")
    n_selected: Optional[int] = None
    wall_time: float = float("nan")
    error: str = ""


@dataclass
class ExperimentResult:
    configs: List[ExperimentConfig]
    records: List[Record] = field(default_factory=list)

    def method_records(self, method: str, grid_id: Optional[int] = None) -> List[Record]:
        return [
            r for r in self.records
            if r.method == method and (grid_id is None or r.grid_id == grid_id)
        ]

    def worst_ranks(self, method: str, grid_id: Optional[int] = None) -> np.ndarray:
        return np.array([r.worst_rank for r in self.method_records(method, grid_id) if not r.error], dtype=float)

    def aggregate(self) -> List[dict]:
        """Per grid point and method: median worst rank, quartiles, timing, FDR metrics."""
        rows = []
        for gid, cfg in enumerate(self.configs):
            for method in cfg.methods:
                recs = self.method_records(method, gid)
                ok = [r for r in recs if not r.error]
                ranks = np.array([r.worst_rank for r in ok], dtype=float)
                times = np.array([r.wall_time for r in ok], dtype=float)
                prec = np.array([r.precision for r in ok], dtype=float)
                rec = np.array([r.recall for r in ok], dtype=float)
                row = {
                    "grid_id": gid,
                    "method": method,
                    "config": _config_dict(cfg),
                    "replications": len(recs),
                    "failures": len(recs) - len(ok),
                }
                if ok:
                    q1, med, q3 = np.percentile(ranks, [25, 50, 75])
                    row.update(
                        median_rank=float(med),
                        rank_q1=float(q1),
                        rank_q3=float(q3),
                        iqr=float(q3 - q1),
                        mean_time=float(times.mean()),
                        sd_time=float(times.std(ddof=1)) if len(times) > 1 else 0.0,
                    )
                    if np.isfinite(prec).any():
                        # false discovery proportion is 0 when nothing is selected
                        fdp = np.where(np.isnan(prec), 0.0, 1.0 - prec)
                        row.update(fdr=float(fdp.mean()), mean_recall=float(np.nanmean(rec)))
                rows.append(row)
        return rows


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["methods"] = list(cfg.methods)
    return d


def config_from_dict(d: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**d)


def expand_grid(spec: dict) -> List[ExperimentConfig]:
    """Expand a config dict in which some fields are lists into grid points.

    ``methods`` is always a list and never swept. Sweeps are expanded in
    the order the keys appear, as a cartesian product.
    """
    spec = dict(spec)
    spec.pop("description", None)
    swept = [k for k, v in spec.items() if isinstance(v, list) and k != "methods"]
    combos = itertools.product(*(spec[k] for k in swept)) if swept else [()]
    out = []
    for combo in combos:
        point = dict(spec)
        point.update(zip(swept, combo))
        out.append(config_from_dict(point))
    return out


def _positive_set(sem, pert) -> frozenset:
    # support of Theta x' with x' the noise-free perturbed observation
    x = (path_matrix(sem) @ pert.vector(sem.size))[list(sem.observed)]
    xi = observed_precision(sem) @ x
    thr = SUPPORT_RTOL * max(abs(d) for d in pert.deltas)
    return frozenset(int(i) for i in np.flatnonzero(np.abs(xi) > thr))


def _run_method(method: str, cfg: ExperimentConfig, data, sample):
    """Returns (ranks, selected or None, seconds)."""
    t0 = time.perf_counter()
    if method in ("cyclic-inverse", "cyclic-glasso"):
        est = EstimatorConfig(
            method="inverse_covariance" if method == "cyclic-inverse" else "graphical_lasso",
            alpha=cfg.glasso_alpha,
        )
        rep = run_algorithm1(data, sample, cfg.tau, est, cfg.fdr_alpha)
        return rep.ranks, rep.selected, time.perf_counter() - t0
    if method == "zscore":
        res = baselines.zscore_baseline(data, sample)
    elif method == "cholesky":
        res = baselines.cholesky_rca(
            data, sample, max_permutations=cfg.cholesky_max_permutations, seed=cfg.seed
        )
    else:
        res = baselines.direct_solve_baseline(data, sample, variant=method)
    return res.ranks, None, time.perf_counter() - t0


def _simulate(cfg: ExperimentConfig, rng: np.random.Generator):
    if cfg.scenario_target is not None:
        data, sample = semisynthetic_scenario(cfg.scenario_target, rng, m=cfg.sample_size, shift=cfg.delta)
        return data, sample, sample.observable_roots, None
    gen = GraphGenConfig(
        p=cfg.p,
        n_latent=cfg.n_latent,
        expected_degree=cfg.expected_degree,
        cyclic=cfg.cyclic,
        noise_family=cfg.noise_family,
    )
    sem = generate_graph(gen, rng)
    data = sample_normal(sem, cfg.sample_size, rng)
    # redraw until some observed node carries the anomaly
    for _ in range(100):
        pert = random_perturbation(sem, cfg.n_root_causes, cfg.delta, rng)
        sample = sample_anomalous(sem, pert, rng)
        if sample.observable_roots:
            break
    else:
        raise RuntimeError("no perturbation with an observable root cause")
    return data, sample, sample.observable_roots, _positive_set(sem, pert)


def _replication(gid: int, cfg: ExperimentConfig, rep: int) -> List[Record]:
    rng = np.random.default_rng([cfg.seed, gid, rep])
    try:
        data, sample, roots, positives = _simulate(cfg, rng)
    except Exception as exc:  # generation failure: mark every method
        logger.warning("replication %d of grid point %d failed to simulate: %s", rep, gid, exc)
        return [Record(gid, rep, mt, (), error=f"simulation: {exc}") for mt in cfg.methods]
    out = []
    for method in cfg.methods:
        rec = Record(gid, rep, method, tuple(int(r) for r in roots))
        try:
            ranks, selected, seconds = _run_method(method, cfg, data, sample)
        except Exception as exc:
            logger.warning("%s failed on replication %d: %s", method, rep, exc)
            rec.error = f"{type(exc).__name__}: {exc}"
            out.append(rec)
            continue
        rec.ranks = tuple(int(ranks[r]) for r in roots)
        rec.worst_rank = max(rec.ranks)
        rec.wall_time = seconds
        if selected is not None:
            rec.n_selected = len(selected)
            if positives is not None:
                hits = len(set(selected) & positives)
                rec.precision = hits / len(selected) if selected else float("nan")
                rec.recall = hits / len(positives) if positives else float("nan")
        out.append(rec)
    return out


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("RCA_THREADS", "1")))
    except ValueError:
        return 1


def run_grid(configs, threads: Optional[int] = None) -> ExperimentResult:
    """Run every replication of every grid point.

    Replication ``r`` of grid point ``g`` draws all randomness from the seed
    sequence ``(seed, g, r)``, so results do not depend on scheduling.
    Method failures are recorded per replication. Worker threads default to
    the ``RCA_THREADS`` environment variable, else 1.
    """
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    configs = list(configs)
    jobs = [(g, c, r) for g, c in enumerate(configs) for r in range(c.replications)]
    threads = threads or _worker_count()
    if threads == 1:
        chunks = [_replication(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda j: _replication(*j), jobs))
    return ExperimentResult(configs, [rec for chunk in chunks for rec in chunk])


CSV_FIELDS = (
    "grid_id", "replication", "method", "p", "cyclic", "n_latent", "noise_family",
    "n_root_causes", "delta", "expected_degree", "roots", "ranks", "worst_rank",
    "precision", "recall", "n_selected", "wall_time", "error",
)


def emit_report(result: ExperimentResult, out_dir, formats: Sequence[str] = ("csv", "json", "svg")) -> Dict[str, Path]:
    """Write ``results.csv``, ``aggregate.json`` and ``boxplot.svg`` into ``out_dir``."""
    if not result.records:
        raise ValueError("no replications to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: Dict[str, Path] = {}
    if "csv" in formats:
        path = out / "results.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for r in result.records:
                cfg = result.configs[r.grid_id]
                w.writerow({
                    "grid_id": r.grid_id,
                    "replication": r.replication,
                    "method": r.method,
                    "p": cfg.p,
                    "cyclic": cfg.cyclic,
                    "n_latent": cfg.n_latent,
                    "noise_family": cfg.noise_family,
                    "n_root_causes": cfg.n_root_causes,
                    "delta": cfg.delta,
                    "expected_degree": cfg.expected_degree,
                    "roots": ";".join(map(str, r.roots)),
                    "ranks": ";".join(map(str, r.ranks)),
                    "worst_rank": "" if r.worst_rank is None else r.worst_rank,
                    "precision": r.precision,
                    "recall": r.recall,
                    "n_selected": "" if r.n_selected is None else r.n_selected,
                    "wall_time": r.wall_time,
                    "error": r.error,
                })
        written["csv"] = path
    if "json" in formats:
        path = out / "aggregate.json"
        path.write_text(json.dumps(result.aggregate(), indent=2))
        written["json"] = path
    if "svg" in formats:
        written["svg"] = _boxplot(result, out / "boxplot.svg")
    return written


def _boxplot(result: ExperimentResult, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(result.configs)
    fig, axes = plt.subplots(1, n, figsize=(max(4.0, 3.2 * n), 3.6), squeeze=False, sharey=True)
    with plt.rc_context({"svg.fonttype": "none"}):
        for gid, (ax, cfg) in enumerate(zip(axes[0], result.configs)):
            data = [result.worst_ranks(m, gid) for m in cfg.methods]
            ax.boxplot([d if d.size else [np.nan] for d in data])
            ax.set_xticks(range(1, len(data) + 1), list(cfg.methods))
            ax.set_title(f"p={cfg.p} delta={cfg.delta:g}", fontsize=9)
            ax.tick_params(axis="x", labelrotation=45, labelsize=8)
        axes[0][0].set_ylabel("rank of true root cause")
        fig.tight_layout()
        fig.savefig(path, format="svg")
    plt.close(fig)
    return path
