# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def grouped_normal_equations(X, y, groups, Py_ssize_t n_groups):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const cnp.int64_t[::1] gv = np.ascontiguousarray(groups, dtype=np.int64)
    cdef Py_ssize_t m = Xv.shape[0], k = Xv.shape[1]
    gram_arr = np.zeros((n_groups, k, k))
    rhs_arr = np.zeros((n_groups, k))
    counts_arr = np.zeros(n_groups, dtype=np.int64)
    cdef double[:, :, ::1] gram = gram_arr
    cdef double[:, ::1] rhs = rhs_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t j, a, b, g
    cdef double xa
    for j in range(m):
        g = gv[j]
        if g < 0 or g >= n_groups:
            raise ValueError("group label out of range")
        counts[g] += 1
        for a in range(k):
            xa = Xv[j, a]
            rhs[g, a] += xa * yv[j]
            for b in range(a, k):
                gram[g, a, b] += xa * Xv[j, b]
    for g in range(n_groups):
        for a in range(k):
            for b in range(a + 1, k):
                gram[g, b, a] = gram[g, a, b]
    return gram_arr, rhs_arr, counts_arr


def assign_min_residual(X, y, theta):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] tv = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t m = Xv.shape[0], k = Xv.shape[1], n = tv.shape[0]
    labels_arr = np.zeros(m, dtype=np.int64)
    sq_arr = np.zeros(m)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef double[::1] sq = sq_arr
    cdef Py_ssize_t j, i, a, best
    cdef double pred, res, cur, best_val
    for j in range(m):
        best = 0
        best_val = 0.0
        for i in range(n):
            pred = 0.0
            for a in range(k):
                pred += Xv[j, a] * tv[i, a]
            res = yv[j] - pred
            cur = res * res
            if i == 0 or cur < best_val:
                best = i
                best_val = cur
        labels[j] = best
        sq[j] = best_val
    return labels_arr, sq_arr


cdef inline double _ipow(double x, cnp.int64_t e) nogil:
    cdef double r = 1.0
    while e > 0:
        r *= x
        e -= 1
    return r


def veronese(X, exponents):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ev = np.ascontiguousarray(exponents, dtype=np.int64)
    cdef Py_ssize_t m = Xv.shape[0], D = Xv.shape[1], K = ev.shape[0]
    out_arr = np.empty((m, K))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t j, q, l
    cdef double v
    for j in range(m):
        for q in range(K):
            v = 1.0
            for l in range(D):
                if ev[q, l]:
                    v *= _ipow(Xv[j, l], ev[q, l])
            out[j, q] = v
    return out_arr


def veronese_gradient(X, exponents, coef):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ev = np.ascontiguousarray(exponents, dtype=np.int64)
    cdef const double[::1] cv = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t m = Xv.shape[0], D = Xv.shape[1], K = ev.shape[0]
    grad_arr = np.zeros((m, D))
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t j, q, l, t
    cdef double v
    for j in range(m):
        for q in range(K):
            if cv[q] == 0.0:
                continue
            for l in range(D):
                if ev[q, l] == 0:
                    continue
                v = cv[q] * ev[q, l]
                for t in range(D):
                    if t == l:
                        v *= _ipow(Xv[j, t], ev[q, t] - 1)
                    elif ev[q, t]:
                        v *= _ipow(Xv[j, t], ev[q, t])
                grad[j, l] += v
    return grad_arr
