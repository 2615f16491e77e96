import numpy as np
import pytest

from inclusionlab import fem


@pytest.fixture(scope="session")
def unit_spaces():
    """Spaces on (0,1) for levels 1..8, shared across tests."""
    return {k: fem.build_space(0.0, 1.0, k) for k in range(1, 9)}


def hat_products_gauss(level, x_lo=0.0, x_hi=1.0):
    """Oracle: assemble dense M, K by per-cell 5-point Gauss quadrature.

    Independent of the library's closed forms; hats and their derivatives
    are evaluated directly cell by cell.
    """
    n = 2**level
    h = (x_hi - x_lo) / n
    dim = n - 1
    s, w = np.polynomial.legendre.leggauss(5)
    s = (s + 1.0) / 2.0
    w = w / 2.0
    M = np.zeros((dim, dim))
    K = np.zeros((dim, dim))
    for cell in range(n):
        # local basis on the cell: node `cell` descending, `cell+1` ascending
        for a_loc, a_glob in ((0, cell), (1, cell + 1)):
            if a_glob < 1 or a_glob > dim:
                continue
            for b_loc, b_glob in ((0, cell), (1, cell + 1)):
                if b_glob < 1 or b_glob > dim:
                    continue
                pa = s if a_loc else 1.0 - s
                pb = s if b_loc else 1.0 - s
                da = (1.0 if a_loc else -1.0) / h
                db = (1.0 if b_loc else -1.0) / h
                M[a_glob - 1, b_glob - 1] += h * np.sum(w * pa * pb)
                K[a_glob - 1, b_glob - 1] += h * np.sum(w * da * db)
    return M, K


def dense_solve(A_dense, b):
    """Oracle: Gaussian elimination with partial pivoting, no numpy.linalg."""
    A = A_dense.astype(float).copy()
    x = np.asarray(b, dtype=float).copy()
    n = A.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[piv, col]) < 1e-300:
            raise ZeroDivisionError("singular oracle system")
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            x[[col, piv]] = x[[piv, col]]
        for row in range(col + 1, n):
            f = A[row, col] / A[col, col]
            A[row, col:] -= f * A[col, col:]
            x[row] -= f * x[col]
    for col in range(n - 1, -1, -1):
        x[col] = (x[col] - A[col, col + 1 :] @ x[col + 1 :]) / A[col, col]
    return x


def gauss_integral(fn, x_lo=0.0, x_hi=1.0, n_cells=4096):
    """Oracle: composite 5-point Gauss integral of a callable."""
    h = (x_hi - x_lo) / n_cells
    s, w = np.polynomial.legendre.leggauss(5)
    s = (s + 1.0) / 2.0
    w = w / 2.0
    lo = x_lo + h * np.arange(n_cells)
    x = (lo[:, None] + h * s[None, :]).ravel()
    wts = np.tile(h * w, n_cells)
    return float(np.dot(wts, fn(x)))


def smallest_eigenpair(K_dense, M_dense, iters=200):
    """Oracle: inverse iteration for the smallest eigenvalue of K v = lam M v."""
    n = K_dense.shape[0]
    v = np.ones(n) / np.sqrt(n)
    for _ in range(iters):
        v = dense_solve(K_dense, M_dense @ v)
        v /= np.sqrt(v @ M_dense @ v)
    lam = (v @ K_dense @ v) / (v @ M_dense @ v)
    return lam, v
