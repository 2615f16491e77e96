"""Pure-Python/numpy fallback for the time-stepping hot kernels.

Every function here has a compiled twin in ``_core.pyx``.  The two backends
are kept bit-identical: elementwise expressions use the same association
order, sequential recurrences run in the same order, and the extension is
compiled without FMA contraction.  ``tests/test_backends.py`` asserts exact
equality on full trajectories.
"""

import numpy as np

NAME = "python"

#: pivots smaller than this are treated as an exactly singular system
SINGULAR_TOL = 1e-300


class SingularMatrixError(ValueError):
    """Tridiagonal elimination hit a (near-)zero pivot."""


def thomas_factor(sub, diag, sup):
    """LU factorization of a tridiagonal matrix (Thomas algorithm).

    Returns ``(low, dia)``: the subdiagonal multipliers and the modified
    diagonal.  ``sup`` is unchanged by the elimination and reused at solve
    time.  Raises SingularMatrixError on a zero pivot.
    """
    n = diag.shape[0]
    d = diag.tolist()
    s = sub.tolist()
    u = sup.tolist()
    low = [0.0] * (n - 1)
    dia = [0.0] * n
    dia[0] = d[0]
    for i in range(1, n):
        piv = dia[i - 1]
        if abs(piv) < SINGULAR_TOL:
            raise SingularMatrixError(f"zero pivot at row {i - 1}")
        w = s[i - 1] / piv
        low[i - 1] = w
        dia[i] = d[i] - w * u[i - 1]
    if abs(dia[n - 1]) < SINGULAR_TOL:
        raise SingularMatrixError(f"zero pivot at row {n - 1}")
    return np.asarray(low), np.asarray(dia)


def thomas_solve(low, dia, sup, b):
    """Solve with a factorization from :func:`thomas_factor`."""
    n = dia.shape[0]
    lo = low.tolist()
    dd = dia.tolist()
    uu = sup.tolist()
    y = b.tolist()
    for i in range(1, n):
        y[i] = y[i] - lo[i - 1] * y[i - 1]
    x = [0.0] * n
    x[n - 1] = y[n - 1] / dd[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (y[i] - uu[i] * x[i + 1]) / dd[i]
    return np.asarray(x)


def solve_tridiagonal(sub, diag, sup, b):
    low, dia = thomas_factor(sub, diag, sup)
    return thomas_solve(low, dia, sup, b)


def tridiag_matvec(sub, diag, sup, x):
    y = diag * x
    y[1:] = y[1:] + sub * x[:-1]
    y[:-1] = y[:-1] + sup * x[1:]
    return y


def eval_pw(full, left, s):
    """Piecewise-linear evaluation: ``full[left]*(1-s) + full[left+1]*s``."""
    return full[left] * (1.0 - s) + full[left + 1] * s


def cell_load(fw, s5, n_cells):
    """Load vector on interior nodes from same-lattice quadrature samples.

    ``fw`` holds weight-premultiplied integrand values, cell-major with 5
    Gauss points per cell; ``s5`` are the 5 local coordinates.
    """
    f2 = fw.reshape(n_cells, 5)
    o0 = 1.0 - s5[0]
    o1 = 1.0 - s5[1]
    o2 = 1.0 - s5[2]
    o3 = 1.0 - s5[3]
    o4 = 1.0 - s5[4]
    left = f2[:, 0] * o0 + f2[:, 1] * o1 + f2[:, 2] * o2 + f2[:, 3] * o3 + f2[:, 4] * o4
    right = (
        f2[:, 0] * s5[0]
        + f2[:, 1] * s5[1]
        + f2[:, 2] * s5[2]
        + f2[:, 3] * s5[3]
        + f2[:, 4] * s5[4]
    )
    return left[1:] + right[:-1]


def clip(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def imex_step(msub, mdiag, msup, low, dia, sup, c, fw, s5, tau):
    """One implicit-Euler step ``(M + tau*K) c_next = M c + tau*b(fw)``.

    The stiffness part lives inside the prefactored system ``(low, dia, sup)``.
    """
    b = cell_load(fw, s5, c.shape[0] + 1)
    y = tridiag_matvec(msub, mdiag, msup, c)
    rhs = y + tau * b
    return thomas_solve(low, dia, sup, rhs)
