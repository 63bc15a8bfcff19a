"""Pure-Python/NumPy versions of the compiled kernels.

Same signatures and results as ``_ckernels``; used when the extension is
not built or when ``CYCLIC_RCA_PURE_PYTHON=1``.
"""
import numpy as np


def _lasso_objective(G, c, alpha, b):
    return 0.5 * b @ (G @ b) - c @ b + alpha * np.abs(b).sum()


def lasso_exact(G, c, alpha, beta, max_steps=None):
    """Feature-sign search for ``0.5 b'Gb - c'b + alpha |b|_1`` with ``G`` positive definite.

    Starts from ``beta`` (overwritten) and alternates exact solves on the
    current signed support with a line search over sign changes; zero
    coordinates violating optimality enter one at a time. Finite and exact
    up to rounding. Returns True when the optimality conditions hold.
    """
    n = beta.size
    max_steps = 10 * n + 10 if max_steps is None else max_steps
    theta = np.sign(beta)
    scale = np.abs(c).max() + alpha if n else 1.0
    for _ in range(max_steps):
        act = np.flatnonzero(theta)
        if act.size:
            GA = G[np.ix_(act, act)]
            try:
                L = np.linalg.cholesky(GA)
            except np.linalg.LinAlgError:
                return False
            new = np.linalg.solve(L.T, np.linalg.solve(L, c[act] - alpha * theta[act]))
            old = beta[act]
            d = new - old
            cross = np.full(act.size, -1.0)
            moving = (old != 0) & (d != 0)
            cross[moving] = -old[moving] / d[moving]
            cand = np.append(np.unique(cross[(cross > 0) & (cross < 1)]), 1.0)
            best_t, best_f, best_b = 1.0, np.inf, None
            for t in cand:
                b = beta.copy()
                b[act] = old + t * d
                if t < 1.0:
                    b[act[np.abs(cross - t) <= 1e-15]] = 0.0
                f = _lasso_objective(G, c, alpha, b)
                if f < best_f:
                    best_t, best_f, best_b = t, f, b
            if best_b is None:
                return False
            beta[:] = best_b
            prev = theta[act]
            theta = np.sign(beta)
            # re-solve unless the full step kept every active sign
            if best_t < 1.0 or np.any(theta[act] != prev):
                continue
        grad = G @ beta - c
        viol = np.where(theta == 0, np.abs(grad) - alpha, -np.inf)
        i = int(np.argmax(viol)) if n else 0
        if n == 0 or viol[i] <= 1e-12 * scale:
            return True
        theta[i] = -np.sign(grad[i])
    return False


def glasso_sweep(W, S, B, alpha):
    p = W.shape[0]
    worst = 0.0
    idx = np.arange(p)
    for j in range(p):
        rest = idx[idx != j]
        W11 = W[np.ix_(rest, rest)]
        beta = B[j, rest].copy()
        lasso_exact(W11, S[rest, j], alpha, beta)
        B[j, rest] = beta
        w12 = W11 @ beta
        change = np.abs(w12 - W[rest, j])
        cmax = change.max() if change.size else 0.0
        if not cmax <= worst:
            worst = cmax
        W[rest, j] = w12
        W[j, rest] = w12
    return worst


def cholesky_search(S, d, perms, tau, batch=4096):
    first, best, best_count, best_max = -1, -1, -1, 0.0
    for start in range(0, perms.shape[0], batch):
        chunk = perms[start:start + batch]
        mats = S[chunk[:, :, None], chunk[:, None, :]]
        rhs = d[chunk]
        ok = np.ones(len(chunk), dtype=bool)
        try:
            L = np.linalg.cholesky(mats)
        except np.linalg.LinAlgError:
            # rare: fall back to one at a time to find the failures
            L = np.empty_like(mats)
            for t, m in enumerate(mats):
                try:
                    L[t] = np.linalg.cholesky(m)
                except np.linalg.LinAlgError:
                    ok[t] = False
                    L[t] = np.eye(len(d))
        v = np.linalg.solve(L, rhs[:, :, None])[:, :, 0]
        v2 = v * v
        counts = (v2 > tau).sum(axis=1)
        maxes = v2.max(axis=1)
        for t in range(len(chunk)):
            if not ok[t]:
                continue
            c = counts[t]
            if c == 1:
                return start + t, best, best_count, best_max
            if c >= 1 and (best_count < 0 or c < best_count or (c == best_count and maxes[t] > best_max)):
                best, best_count, best_max = start + t, int(c), float(maxes[t])
    return first, best, best_count, best_max
