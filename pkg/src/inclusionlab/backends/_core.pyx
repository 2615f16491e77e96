# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernels.

Mirrors ``py_kernels`` operation for operation.  Expression association
matches the numpy fallback exactly and the module is compiled with FMA
contraction disabled, so results are bit-identical across backends.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

from inclusionlab.backends.py_kernels import SingularMatrixError

NAME = "compiled"

DEF SINGULAR_TOL = 1e-300


def thomas_factor(double[::1] sub, double[::1] diag, double[::1] sup):
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray low_a = np.empty(n - 1, dtype=np.float64)
    cdef cnp.ndarray dia_a = np.empty(n, dtype=np.float64)
    cdef double[::1] low = low_a
    cdef double[::1] dia = dia_a
    cdef Py_ssize_t i
    cdef double piv, w
    dia[0] = diag[0]
    for i in range(1, n):
        piv = dia[i - 1]
        if piv < SINGULAR_TOL and piv > -SINGULAR_TOL:
            raise SingularMatrixError(f"zero pivot at row {i - 1}")
        w = sub[i - 1] / piv
        low[i - 1] = w
        dia[i] = diag[i] - w * sup[i - 1]
    piv = dia[n - 1]
    if piv < SINGULAR_TOL and piv > -SINGULAR_TOL:
        raise SingularMatrixError(f"zero pivot at row {n - 1}")
    return low_a, dia_a


def thomas_solve(double[::1] low, double[::1] dia, double[::1] sup,
                 double[::1] b):
    cdef Py_ssize_t n = dia.shape[0]
    cdef cnp.ndarray y_a = np.empty(n, dtype=np.float64)
    cdef double[::1] y = y_a
    cdef cnp.ndarray x_a = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_a
    cdef Py_ssize_t i
    for i in range(n):
        y[i] = b[i]
    for i in range(1, n):
        y[i] = y[i] - low[i - 1] * y[i - 1]
    x[n - 1] = y[n - 1] / dia[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (y[i] - sup[i] * x[i + 1]) / dia[i]
    return x_a


def solve_tridiagonal(double[::1] sub, double[::1] diag, double[::1] sup,
                      double[::1] b):
    low, dia = thomas_factor(sub, diag, sup)
    return thomas_solve(low, dia, sup, b)


def tridiag_matvec(double[::1] sub, double[::1] diag, double[::1] sup,
                   double[::1] x):
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray y_a = np.empty(n, dtype=np.float64)
    cdef double[::1] y = y_a
    cdef Py_ssize_t i
    for i in range(n):
        y[i] = diag[i] * x[i]
    for i in range(1, n):
        y[i] = y[i] + sub[i - 1] * x[i - 1]
    for i in range(n - 1):
        y[i] = y[i] + sup[i] * x[i + 1]
    return y_a


def eval_pw(double[::1] full, cnp.int64_t[::1] left, double[::1] s):
    cdef Py_ssize_t n = left.shape[0]
    cdef cnp.ndarray out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    cdef cnp.int64_t j
    for i in range(n):
        j = left[i]
        out[i] = full[j] * (1.0 - s[i]) + full[j + 1] * s[i]
    return out_a


cdef inline double _cell_left(double[::1] fw, Py_ssize_t j, double o0,
                              double o1, double o2, double o3, double o4):
    cdef Py_ssize_t k = 5 * j
    return fw[k] * o0 + fw[k + 1] * o1 + fw[k + 2] * o2 + fw[k + 3] * o3 \
        + fw[k + 4] * o4


cdef inline double _cell_right(double[::1] fw, Py_ssize_t j, double s0,
                               double s1, double s2, double s3, double s4):
    cdef Py_ssize_t k = 5 * j
    return fw[k] * s0 + fw[k + 1] * s1 + fw[k + 2] * s2 + fw[k + 3] * s3 \
        + fw[k + 4] * s4


def cell_load(double[::1] fw, double[::1] s5, Py_ssize_t n_cells):
    cdef double s0 = s5[0], s1 = s5[1], s2 = s5[2], s3 = s5[3], s4 = s5[4]
    cdef double o0 = 1.0 - s0
    cdef double o1 = 1.0 - s1
    cdef double o2 = 1.0 - s2
    cdef double o3 = 1.0 - s3
    cdef double o4 = 1.0 - s4
    cdef cnp.ndarray out_a = np.empty(n_cells - 1, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef Py_ssize_t k
    for k in range(n_cells - 1):
        out[k] = _cell_left(fw, k + 1, o0, o1, o2, o3, o4) \
            + _cell_right(fw, k, s0, s1, s2, s3, s4)
    return out_a


def clip(double[::1] x, double[::1] lo, double[::1] hi):
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = x[i]
        if v < lo[i]:
            v = lo[i]
        if v > hi[i]:
            v = hi[i]
        out[i] = v
    return out_a


def imex_step(double[::1] msub, double[::1] mdiag, double[::1] msup,
              double[::1] low, double[::1] dia, double[::1] sup,
              double[::1] c, double[::1] fw, double[::1] s5, double tau):
    cdef Py_ssize_t n = c.shape[0]
    cdef cnp.ndarray b_a = cell_load(fw, s5, n + 1)
    cdef double[::1] b = b_a
    cdef cnp.ndarray y_a = tridiag_matvec(msub, mdiag, msup, c)
    cdef double[::1] y = y_a
    cdef cnp.ndarray rhs_a = np.empty(n, dtype=np.float64)
    cdef double[::1] rhs = rhs_a
    cdef Py_ssize_t i
    for i in range(n):
        rhs[i] = y[i] + tau * b[i]
    return thomas_solve(low, dia, sup, rhs)
