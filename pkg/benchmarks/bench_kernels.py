"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--json out.json]
"""
import argparse
import json
import time

import numpy as np

from cyclic_rca import kernels
from cyclic_rca.datagen import GraphGenConfig, generate_graph, sample_normal
from cyclic_rca.precision_est import EstimatorConfig, graphical_lasso, sample_covariance


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _covariance(p, seed):
    rng = np.random.default_rng(seed)
    sem = generate_graph(GraphGenConfig(p=p, cyclic=True), rng)
    return sample_covariance(sample_normal(sem, 10 * p, rng).values)


def bench_glasso(p, repeat):
    S = _covariance(p, p)
    row = {"kernel": "graphical_lasso", "p": p}
    for name in ("cython", "python"):
        t, est = _best_of(lambda: graphical_lasso(S, EstimatorConfig(), backend=name), repeat)
        row[name] = t
        row[f"{name}_iterations"] = est.iterations
    return row


def bench_cholesky(p, n_perms, repeat):
    S = np.ascontiguousarray(_covariance(p, p))
    d = np.zeros(p)  # no extreme entry: forces a full scan
    rng = np.random.default_rng(0)
    perms = np.ascontiguousarray(rng.permuted(np.tile(np.arange(p, dtype=np.int64), (n_perms, 1)), axis=1))
    row = {"kernel": "cholesky_search", "p": p, "permutations": n_perms}
    for name in ("cython", "python"):
        kern = kernels.get_backend(name)
        row[name], _ = _best_of(lambda: kern.cholesky_search(S, d, perms, 9.0), repeat)
    return row


def bench_lasso(p, repeat):
    rng = np.random.default_rng(p)
    M = rng.standard_normal((2 * p, p))
    G = np.ascontiguousarray(M.T @ M / (2 * p))
    c = np.ascontiguousarray(rng.standard_normal(p))
    row = {"kernel": "lasso_exact", "p": p}
    for name in ("cython", "python"):
        kern = kernels.get_backend(name)
        row[name], _ = _best_of(lambda: kern.lasso_exact(G, c, 0.01, np.zeros(p)), repeat)
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write the rows to this file")
    args = ap.parse_args()
    kernels.get_backend("cython")  # fail early when the extension is missing
    rows = [bench_glasso(p, args.repeat) for p in (10, 20, 30)]
    rows += [bench_cholesky(p, 20000, args.repeat) for p in (6, 10)]
    rows += [bench_lasso(p, args.repeat) for p in (20, 50)]
    print(f"{'kernel':<18}{'p':>5}{'cython [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<18}{r['p']:>5}{r['cython']:>14.5f}{r['python']:>14.5f}{r['python'] / r['cython']:>10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
