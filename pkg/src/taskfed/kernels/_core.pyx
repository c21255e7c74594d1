# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled float64 kernels: row reductions, simplex projection, dual solve.

Logic mirrors ``_py.py`` kernel for kernel; only the loop bodies differ.
"""

from libc.math cimport fabs, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def mean_rows(const double[:, ::1] rows):
    cdef Py_ssize_t k = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef double inv = 1.0 / k
    cdef Py_ssize_t i, j
    for i in range(k):
        for j in range(d):
            o[j] += rows[i, j]
    for j in range(d):
        o[j] *= inv
    return out


def weighted_rows(const double[:, ::1] rows, const double[::1] weights):
    cdef Py_ssize_t k = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double w
    for i in range(k):
        w = weights[i]
        for j in range(d):
            o[j] += w * rows[i, j]
    return out


def axpy(double alpha, const double[::1] x, const double[::1] y):
    cdef Py_ssize_t d = x.shape[0]
    out = np.empty(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t j
    for j in range(d):
        o[j] = alpha * x[j] + y[j]
    return out


def scale(double alpha, const double[::1] x):
    cdef Py_ssize_t d = x.shape[0]
    out = np.empty(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t j
    for j in range(d):
        o[j] = alpha * x[j]
    return out


def dot(const double[::1] x, const double[::1] y):
    cdef Py_ssize_t d = x.shape[0]
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        acc += x[j] * y[j]
    return acc


def nrm2(const double[::1] x):
    cdef Py_ssize_t d = x.shape[0]
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        acc += x[j] * x[j]
    return sqrt(acc)


cdef void _sort_desc(double[::1] u, Py_ssize_t n) noexcept:
    # Insertion sort; n is the number of participating deltas, always small.
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = u[i]
        j = i - 1
        while j >= 0 and u[j] < key:
            u[j + 1] = u[j]
            j -= 1
        u[j + 1] = key


def project_simplex(const double[::1] v):
    cdef Py_ssize_t n = v.shape[0]
    buf = np.array(v, dtype=np.float64, copy=True)
    cdef double[::1] u = buf
    _sort_desc(u, n)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double csum = 0.0, shifted, tau = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        csum += u[i]
        shifted = (csum - 1.0) / (i + 1)
        if u[i] > shifted:
            tau = shifted
    for i in range(n):
        o[i] = v[i] - tau if v[i] - tau > 0.0 else 0.0
    return out


def dual_pgd(const double[:, ::1] gram, const double[::1] lin, double ball_radius,
             Py_ssize_t iters, double step, double tol):
    cdef Py_ssize_t n = lin.shape[0]
    w_arr = np.full(n, 1.0 / n, dtype=np.float64)
    best_arr = np.full(n, 1.0 / n, dtype=np.float64)
    gw_arr = np.empty(n, dtype=np.float64)
    grad_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] w = w_arr
    cdef double[::1] best = best_arr
    cdef double[::1] gw = gw_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] w_next
    cdef double quad, quad_norm, coef, delta, diff, f_val
    cdef double best_f = float("inf")
    cdef Py_ssize_t it, i, j
    for it in range(iters):
        quad = 0.0
        f_val = 0.0
        for i in range(n):
            gw[i] = 0.0
            for j in range(n):
                gw[i] += gram[i, j] * w[j]
            quad += w[i] * gw[i]
            f_val += w[i] * lin[i]
        quad_norm = sqrt(quad) if quad > 0.0 else 0.0
        f_val += ball_radius * quad_norm
        if f_val < best_f:
            best_f = f_val
            for i in range(n):
                best[i] = w[i]
        if quad_norm > 1e-15:
            coef = ball_radius / quad_norm
            for i in range(n):
                grad[i] = lin[i] + coef * gw[i]
        else:
            for i in range(n):
                grad[i] = lin[i]
        for i in range(n):
            grad[i] = w[i] - step * grad[i]
        w_next = project_simplex(grad_arr)
        delta = 0.0
        for i in range(n):
            diff = fabs(w_next[i] - w[i])
            if diff > delta:
                delta = diff
            w[i] = w_next[i]
        if delta <= tol:
            break
    quad = 0.0
    f_val = 0.0
    for i in range(n):
        gw[i] = 0.0
        for j in range(n):
            gw[i] += gram[i, j] * w[j]
        quad += w[i] * gw[i]
        f_val += w[i] * lin[i]
    f_val += ball_radius * (sqrt(quad) if quad > 0.0 else 0.0)
    if f_val < best_f:
        for i in range(n):
            best[i] = w[i]
    return best_arr
