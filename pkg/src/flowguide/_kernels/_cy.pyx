# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: mixture posterior velocity and pairwise distance means."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY

cnp.import_array()


def mixture_velocity(X, means_t, prec, amap, shift, logc, want_resp=False):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] m = np.ascontiguousarray(means_t, dtype=np.float64)
    cdef double[:, :, ::1] P = np.ascontiguousarray(prec, dtype=np.float64)
    cdef double[:, :, ::1] A = np.ascontiguousarray(amap, dtype=np.float64)
    cdef double[:, ::1] mu = np.ascontiguousarray(shift, dtype=np.float64)
    cdef double[::1] lc = np.ascontiguousarray(logc, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], K = m.shape[0]
    out_arr = np.zeros((n, d), dtype=np.float64)
    resp_arr = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] resp = resp_arr
    cdef double[::1] r = np.empty(d, dtype=np.float64)
    cdef double[::1] logp = np.empty(K, dtype=np.float64)
    cdef double[:, ::1] vk = np.empty((K, d), dtype=np.float64)
    cdef Py_ssize_t i, j, k, l
    cdef double q, s, acc, lmax, tot

    for i in range(n):
        lmax = -INFINITY
        for k in range(K):
            for j in range(d):
                r[j] = x[i, j] - m[k, j]
            q = 0.0
            for j in range(d):
                s = 0.0
                acc = 0.0
                for l in range(d):
                    s += P[k, j, l] * r[l]
                    acc += A[k, j, l] * r[l]
                q += r[j] * s
                vk[k, j] = acc - mu[k, j]
            logp[k] = lc[k] - 0.5 * q
            if logp[k] > lmax:
                lmax = logp[k]
        tot = 0.0
        for k in range(K):
            logp[k] = exp(logp[k] - lmax)
            tot += logp[k]
        for k in range(K):
            resp[i, k] = logp[k] / tot
            for j in range(d):
                out[i, j] += resp[i, k] * vk[k, j]
    if want_resp:
        return out_arr, resp_arr
    return out_arr


def mean_pairwise_distance(A, B):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, row, s, diff
    for i in range(n):
        row = 0.0
        for j in range(m):
            s = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                s += diff * diff
            row += sqrt(s)
        total += row
    return total / (n * m)
