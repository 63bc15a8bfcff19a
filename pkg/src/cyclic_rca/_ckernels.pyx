# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror ``_pykernels`` exactly."""

from libc.math cimport fabs, sqrt, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np


cdef inline double _sign(double x) noexcept nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef double _objective(const double[:, ::1] G, const double[::1] c, double alpha,
                       const double *b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k, l
    cdef double q, f = 0.0
    for k in range(n):
        if b[k] == 0.0:
            continue
        q = 0.0
        for l in range(n):
            q = q + G[k, l] * b[l]
        f = f + 0.5 * b[k] * q - c[k] * b[k] + alpha * fabs(b[k])
    return f


cdef int _feature_sign(const double[:, ::1] G, const double[::1] c, double alpha,
                       double[::1] beta, int max_steps, double *work,
                       Py_ssize_t *act) noexcept nogil:
    # work holds n*n + 7n + 1 doubles, act n indices
    cdef Py_ssize_t n = G.shape[0], na, a, b, q, k, nc, i
    cdef double *theta = work
    cdef double *L = theta + n
    cdef double *y = L + n * n
    cdef double *old = y + n
    cdef double *cross = old + n
    cdef double *cand = cross + n
    cdef double *bb = cand + n + 1
    cdef double *bestb = bb + n
    cdef double s, t, d, f, best_f, best_t, scale = alpha, viol, best_viol
    cdef int step
    cdef bint flipped
    for k in range(n):
        theta[k] = _sign(beta[k])
        if fabs(c[k]) + alpha > scale:
            scale = fabs(c[k]) + alpha
    for step in range(max_steps):
        na = 0
        for k in range(n):
            if theta[k] != 0.0:
                act[na] = k
                na += 1
        if na > 0:
            for a in range(na):
                for b in range(a + 1):
                    s = G[act[a], act[b]]
                    for q in range(b):
                        s = s - L[a * na + q] * L[b * na + q]
                    if a == b:
                        if not s > 0.0:
                            return 0
                        L[a * na + a] = sqrt(s)
                    else:
                        L[a * na + b] = s / L[b * na + b]
            for a in range(na):
                s = c[act[a]] - alpha * theta[act[a]]
                for q in range(a):
                    s = s - L[a * na + q] * y[q]
                y[a] = s / L[a * na + a]
            for a in range(na - 1, -1, -1):
                s = y[a]
                for q in range(a + 1, na):
                    s = s - L[q * na + a] * y[q]
                y[a] = s / L[a * na + a]
            nc = 0
            for a in range(na):
                old[a] = beta[act[a]]
                d = y[a] - old[a]
                cross[a] = -1.0
                if old[a] != 0.0 and d != 0.0:
                    cross[a] = -old[a] / d
                    if cross[a] > 0.0 and cross[a] < 1.0:
                        cand[nc] = cross[a]
                        nc += 1
            # sort, drop duplicates, then append the full step
            for a in range(1, nc):
                t = cand[a]
                b = a - 1
                while b >= 0 and cand[b] > t:
                    cand[b + 1] = cand[b]
                    b -= 1
                cand[b + 1] = t
            q = 0
            for a in range(nc):
                if q == 0 or cand[a] != cand[q - 1]:
                    cand[q] = cand[a]
                    q += 1
            cand[q] = 1.0
            nc = q + 1
            best_f = INFINITY
            best_t = 1.0
            for i in range(nc):
                t = cand[i]
                for k in range(n):
                    bb[k] = beta[k]
                for a in range(na):
                    bb[act[a]] = old[a] + t * (y[a] - old[a])
                if t < 1.0:
                    for a in range(na):
                        if fabs(cross[a] - t) <= 1e-15:
                            bb[act[a]] = 0.0
                f = _objective(G, c, alpha, bb, n)
                if f < best_f:
                    best_f = f
                    best_t = t
                    for k in range(n):
                        bestb[k] = bb[k]
            if best_f == INFINITY:
                return 0
            flipped = False
            for k in range(n):
                beta[k] = bestb[k]
                s = _sign(beta[k])
                if s != theta[k]:
                    flipped = True
                theta[k] = s
            # re-solve unless the full step kept every active sign
            if best_t < 1.0 or flipped:
                continue
        i = -1
        best_viol = -INFINITY
        for k in range(n):
            if theta[k] != 0.0:
                continue
            s = -c[k]
            for q in range(n):
                s = s + G[k, q] * beta[q]
            viol = fabs(s) - alpha
            if viol > best_viol:
                best_viol = viol
                i = k
                y[0] = s
        if i < 0 or best_viol <= 1e-12 * scale:
            return 1
        theta[i] = -_sign(y[0])
    return 0


def lasso_exact(const double[:, ::1] G, const double[::1] c, double alpha,
                double[::1] beta, max_steps=None):
    """Feature-sign search for ``0.5 b'Gb - c'b + alpha |b|_1``; see ``_pykernels``."""
    cdef Py_ssize_t n = G.shape[0]
    cdef int steps = 10 * n + 10 if max_steps is None else max_steps
    cdef int ok
    cdef double *work = <double *> malloc((n * n + 7 * n + 1) * sizeof(double))
    cdef Py_ssize_t *act = <Py_ssize_t *> malloc((n + 1) * sizeof(Py_ssize_t))
    if work == NULL or act == NULL:
        free(work)
        free(act)
        raise MemoryError()
    with nogil:
        ok = _feature_sign(G, c, alpha, beta, steps, work, act)
    free(work)
    free(act)
    return bool(ok)


def glasso_sweep(double[:, ::1] W, const double[:, ::1] S, double[:, ::1] B, double alpha):
    """One block-coordinate sweep of the graphical lasso over all columns.

    ``W`` is the working covariance, ``B[j]`` the lasso coefficients of
    column ``j`` (diagonal entry unused); both are updated in place. Each
    column's lasso is solved exactly by feature-sign search warm-started
    from ``B[j]``. Returns the largest absolute change of ``W``.
    """
    cdef Py_ssize_t p = W.shape[0], n = p - 1, j, k, l, r, q
    cdef double s, change, worst = 0.0
    if p < 2:
        return 0.0
    cdef double[:, ::1] G = np.empty((n, n))
    cdef double[::1] c = np.empty(n)
    cdef double[::1] beta = np.empty(n)
    cdef Py_ssize_t *rest = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t *act = <Py_ssize_t *> malloc((n + 1) * sizeof(Py_ssize_t))
    cdef double *work = <double *> malloc((n * n + 7 * n + 1) * sizeof(double))
    if rest == NULL or act == NULL or work == NULL:
        free(rest)
        free(act)
        free(work)
        raise MemoryError()
    with nogil:
        for j in range(p):
            r = 0
            for k in range(p):
                if k != j:
                    rest[r] = k
                    r += 1
            for k in range(n):
                for l in range(n):
                    G[k, l] = W[rest[k], rest[l]]
                c[k] = S[rest[k], j]
                beta[k] = B[j, rest[k]]
            _feature_sign(G, c, alpha, beta, 10 * n + 10, work, act)
            for k in range(n):
                B[j, rest[k]] = beta[k]
            for k in range(n):
                s = 0.0
                for q in range(n):
                    s = s + G[k, q] * beta[q]
                l = rest[k]
                change = fabs(s - W[l, j])
                if change > worst or change != change:
                    worst = change
                W[l, j] = s
                W[j, l] = s
    free(rest)
    free(act)
    free(work)
    return worst


def cholesky_search(const double[:, ::1] S, const double[::1] d,
                    const long[:, ::1] perms, double tau):
    """Scan permutations for a Cholesky whitening with one extreme entry.

    For each row ``perm`` of ``perms``, factor ``S[perm][:, perm] = L L'``
    and solve ``L v = d[perm]``. Returns ``(first, best, best_count,
    best_max)`` where ``first`` is the index of the first permutation with
    exactly one ``v_i**2 > tau`` (or -1) and ``best`` the index with the
    fewest, but at least one, extreme entries seen so far (ties: larger
    maximum), or -1.
    """
    cdef Py_ssize_t p = S.shape[0], n = perms.shape[0], t, a, b, q
    cdef Py_ssize_t first = -1, best = -1
    cdef long best_count = -1, count
    cdef double best_max = 0.0, mx, s, v2
    cdef bint failed
    cdef double *M = <double *> malloc(p * p * sizeof(double))
    cdef double *v = <double *> malloc(p * sizeof(double))
    if M == NULL or v == NULL:
        free(M)
        free(v)
        raise MemoryError()
    with nogil:
        for t in range(n):
            failed = False
            for a in range(p):
                for b in range(a + 1):
                    s = S[perms[t, a], perms[t, b]]
                    for q in range(b):
                        s = s - M[a * p + q] * M[b * p + q]
                    if a == b:
                        if not s > 0.0:
                            failed = True
                            break
                        M[a * p + a] = sqrt(s)
                    else:
                        M[a * p + b] = s / M[b * p + b]
                if failed:
                    break
            if failed:
                continue
            count = 0
            mx = 0.0
            for a in range(p):
                s = d[perms[t, a]]
                for q in range(a):
                    s = s - M[a * p + q] * v[q]
                v[a] = s / M[a * p + a]
                v2 = v[a] * v[a]
                if v2 > tau:
                    count = count + 1
                if v2 > mx:
                    mx = v2
            if count == 1:
                first = t
                break
            if count >= 1 and (best_count < 0 or count < best_count
                               or (count == best_count and mx > best_max)):
                best = t
                best_count = count
                best_max = mx
    free(M)
    free(v)
    return first, best, best_count, best_max
