"""Command-line interface: ``cyclic-rca {simulate,analyze,bench,ingest}``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .baselines import cholesky_rca, direct_solve_baseline, zscore_baseline
from .bench import METHODS, emit_report, expand_grid, run_grid
from .datagen import GraphGenConfig, generate_graph, random_perturbation, sample_anomalous, sample_normal
from .ingest import PreprocessConfig, load_csv, preprocess
from .precision_est import EstimatorConfig
from .rca import propagation_route, run_algorithm1

logger = logging.getLogger("cyclic_rca")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cyclic-rca", description="Root cause analysis for linear cyclic SEMs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="draw a random SEM with normal and anomalous data")
    sim.add_argument("--p", type=int, default=10, help="observed nodes")
    sim.add_argument("--latents", type=int, default=0)
    sim.add_argument("--cyclic", action="store_true")
    sim.add_argument("--degree", type=float, default=3.0, help="expected total degree")
    sim.add_argument("--noise", default="gaussian", choices=("gaussian", "uniform", "exponential", "lognormal"))
    sim.add_argument("--m", type=int, default=None, help="normal rows (default 10*p)")
    sim.add_argument("--root-causes", type=int, default=1)
    sim.add_argument("--delta", type=float, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default=".", help="output directory")

    an = sub.add_parser("analyze", help="score root causes of an anomalous sample")
    an.add_argument("--normal", required=True, help="CSV of normal-period rows")
    an.add_argument("--anomalous", required=True, help="CSV holding the anomalous row(s)")
    an.add_argument("--row", type=int, default=0, help="which anomalous row to analyze")
    an.add_argument("--method", default="cyclic-glasso", choices=METHODS)
    an.add_argument("--tau", type=float, default=0.25)
    an.add_argument("--alpha", type=float, default=0.1, help="graphical lasso penalty")
    an.add_argument("--fdr-alpha", type=float, default=0.1)
    an.add_argument("--max-permutations", type=int, default=None, help="cholesky search budget")
    an.add_argument("--route", metavar="LABEL", default=None, help="also trace the propagation route from LABEL")

    be = sub.add_parser("bench", help="run a simulation grid from a JSON config")
    be.add_argument("--config", required=True)
    be.add_argument("--out", required=True, help="output directory")
    be.add_argument("--threads", type=int, default=None, help="worker threads (default RCA_THREADS or 1)")
    be.add_argument("--seed", type=int, default=None, help="override the config seed")
    be.add_argument("--formats", default="csv,json,svg")

    ing = sub.add_parser("ingest", help="preprocess metric CSVs")
    ing.add_argument("--normal", required=True)
    ing.add_argument("--anomalous", required=True)
    ing.add_argument("--out", required=True, help="output directory")
    ing.add_argument("--nan-threshold", type=float, default=0.2)
    ing.add_argument("--variance-explained", type=float, default=0.9)
    ing.add_argument("--corr-threshold", type=float, default=0.98)
    ing.add_argument("--no-standardize", action="store_true")
    ing.add_argument("--filter", default=None, help="regular expression selecting columns")
    return ap


def _simulate(args) -> int:
    if args.p < 2:
        raise UsageError("--p must be at least 2")
    rng = np.random.default_rng(args.seed)
    sem = generate_graph(
        GraphGenConfig(p=args.p, n_latent=args.latents, expected_degree=args.degree,
                       cyclic=args.cyclic, noise_family=args.noise),
        rng,
    )
    data = sample_normal(sem, args.m or 10 * args.p, rng)
    pert = random_perturbation(sem, args.root_causes, args.delta, rng)
    sample = sample_anomalous(sem, pert, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sem.json").write_text(sem.to_json(indent=2))
    data.to_csv(out / "normal.csv")
    import pandas as pd

    pd.DataFrame([sample.values], columns=list(data.column_labels)).to_csv(out / "anomalous.csv", index=False)
    truth = {
        "root_causes": list(pert.root_causes),
        "deltas": list(pert.deltas),
        "observable_root_causes": [data.column_labels[i] for i in sample.observable_roots],
    }
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=2))
    print(json.dumps({"out": str(out), **truth}))
    return 0


def _analyze(args) -> int:
    normal = load_csv(args.normal)
    anomalous = load_csv(args.anomalous)
    if normal.column_labels != anomalous.column_labels:
        raise UsageError("normal and anomalous CSVs must have the same header")
    if not 0 <= args.row < anomalous.m:
        raise UsageError(f"--row {args.row} out of range ({anomalous.m} anomalous rows)")
    x = anomalous.values[args.row]
    labels = list(normal.column_labels)
    if args.method.startswith("cyclic"):
        est = EstimatorConfig(
            method="inverse_covariance" if args.method == "cyclic-inverse" else "graphical_lasso",
            alpha=args.alpha,
        )
        report = run_algorithm1(normal, x, args.tau, est, args.fdr_alpha)
        report.method = args.method
        out = report.to_dict()
        if args.route is not None:
            if args.route not in labels:
                raise UsageError(f"--route: unknown label {args.route!r}")
            hops = propagation_route(normal, x, labels.index(args.route), args.tau, est, args.fdr_alpha)
            out["route"] = [[labels[i] for i in hop] for hop in hops]
    elif args.method == "zscore":
        out = zscore_baseline(normal, x).to_dict()
    elif args.method == "cholesky":
        out = cholesky_rca(normal, x, max_permutations=args.max_permutations).to_dict()
    else:
        out = direct_solve_baseline(normal, x, variant=args.method).to_dict()
    out["labels"] = labels
    print(json.dumps(out, indent=2))
    return 0


def _bench(args) -> int:
    try:
        spec = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
    specs = spec if isinstance(spec, list) else [spec]
    try:
        configs = [c for s in specs for c in expand_grid(s)]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    if args.seed is not None:
        from dataclasses import replace

        configs = [replace(c, seed=args.seed) for c in configs]
    result = run_grid(configs, threads=args.threads)
    written = emit_report(result, args.out, tuple(f.strip() for f in args.formats.split(",")))
    print(json.dumps({k: str(v) for k, v in written.items()}))
    return 0


def _ingest(args) -> int:
    cfg = PreprocessConfig(
        nan_col_threshold=args.nan_threshold,
        variance_explained=args.variance_explained,
        robust_standardize=not args.no_standardize,
        corr_threshold=args.corr_threshold,
        metric_filter=args.filter,
    )
    normal, anomalous, report = preprocess(load_csv(args.normal), load_csv(args.anomalous), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    normal.to_csv(out / "normal.csv")
    anomalous.to_csv(out / "anomalous.csv")
    (out / "report.json").write_text(report.to_json(indent=2))
    print(json.dumps({"final_dim": report.final_dim, "out": str(out)}))
    return 0


_COMMANDS = {"simulate": _simulate, "analyze": _analyze, "bench": _bench, "ingest": _ingest}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cyclic-rca {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"cyclic-rca {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
