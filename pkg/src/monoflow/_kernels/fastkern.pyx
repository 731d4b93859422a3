# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled mixture kernels; see ref.py for the shared contract."""

from libc.math cimport exp, log

import numpy as np


def mixture_log_values(const double[:, ::1] A, const double[::1] consts, const double[::1] inv4tau,
                       const double[:, ::1] centers, const double[:, ::1] X):
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t m = consts.shape[0]
    out_arr = np.empty(N)
    lt_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double[::1] LT = lt_arr
    cdef Py_ssize_t i, k, a, b
    cdef double q, s, mx, acc, da

    for i in range(N):
        mx = -1.0e308
        for k in range(m):
            q = 0.0
            for a in range(n):
                da = X[i, a] - centers[k, a]
                s = 0.0
                for b in range(n):
                    s += A[a, b] * (X[i, b] - centers[k, b])
                q += da * s
            LT[k] = consts[k] - inv4tau[k] * q
            if LT[k] > mx:
                mx = LT[k]
        acc = 0.0
        for k in range(m):
            acc += exp(LT[k] - mx)
        out[i] = mx + log(acc)
    return out_arr


def mixture_log_jets(const double[:, ::1] A, const double[::1] consts, const double[::1] inv4tau,
                     const double[:, ::1] centers, const double[:, ::1] X):
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t m = consts.shape[0]

    lv_arr = np.empty(N)
    lt_arr = np.empty(N)
    lg_arr = np.empty((N, n))
    lh_arr = np.empty((N, n, n))
    q_arr = np.empty(m)
    logt_arr = np.empty(m)
    p_arr = np.empty(m)
    ad_arr = np.empty((m, n))

    cdef double[::1] lv = lv_arr
    cdef double[::1] lt = lt_arr
    cdef double[:, ::1] lg = lg_arr
    cdef double[:, :, ::1] lh = lh_arr
    cdef double[::1] Q = q_arr
    cdef double[::1] LT = logt_arr
    cdef double[::1] P = p_arr
    cdef double[:, ::1] AD = ad_arr

    cdef Py_ssize_t i, k, a, b
    cdef double q, s, mx, z, da, wsum, gka, gkb, dtk

    for i in range(N):
        mx = -1.0e308
        for k in range(m):
            q = 0.0
            for a in range(n):
                s = 0.0
                for b in range(n):
                    s += A[a, b] * (X[i, b] - centers[k, b])
                AD[k, a] = s
                q += (X[i, a] - centers[k, a]) * s
            Q[k] = q
            LT[k] = consts[k] - inv4tau[k] * q
            if LT[k] > mx:
                mx = LT[k]
        z = 0.0
        for k in range(m):
            P[k] = exp(LT[k] - mx)
            z += P[k]
        for k in range(m):
            P[k] /= z
        lv[i] = mx + log(z)

        for a in range(n):
            s = 0.0
            for k in range(m):
                s += P[k] * (-2.0 * inv4tau[k] * AD[k, a])
            lg[i, a] = s

        wsum = 0.0
        dtk = 0.0
        for k in range(m):
            wsum += P[k] * inv4tau[k]
            dtk += P[k] * (-2.0 * n * inv4tau[k]
                           + 4.0 * inv4tau[k] * inv4tau[k] * Q[k])
        lt[i] = dtk

        for a in range(n):
            for b in range(n):
                s = -2.0 * wsum * A[a, b]
                for k in range(m):
                    gka = -2.0 * inv4tau[k] * AD[k, a]
                    gkb = -2.0 * inv4tau[k] * AD[k, b]
                    s += P[k] * gka * gkb
                lh[i, a, b] = s - lg[i, a] * lg[i, b]

    return lv_arr, lt_arr, lg_arr, lh_arr
