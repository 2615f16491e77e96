"""1D piecewise-linear finite elements on nested dyadic grids.

Interval (x_lo, x_hi), homogeneous Dirichlet boundary, uniform cells.
Level k has 2^k cells and 2^k - 1 interior nodes; level k+1 refines
level k by midpoint insertion, so coarse functions embed exactly into
fine spaces.  Mass and stiffness matrices are tridiagonal; integrals of
non-polynomial data use 5-point Gauss quadrature per cell.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backends
from .backends.py_kernels import SingularMatrixError

__all__ = [
    "Grid1D",
    "TridiagonalMatrix",
    "FemSpace",
    "NodalFunction",
    "SingularMatrixError",
    "build_space",
    "solve_tridiagonal",
    "full_values",
    "eval_nodal",
    "quad_values",
    "load_vector",
    "restrict_load",
    "prolong",
    "l2_project",
    "inner_H",
    "norm_H",
    "inner_V",
    "norm_V",
    "sup_norm",
    "quad_inner_H",
    "quad_norm_H",
    "estimate_embedding_constants",
    "estimate_projection_stability",
    "to_csv_line",
    "from_csv_line",
]

# 5-point Gauss-Legendre rule mapped to [0, 1]; exact through degree 9
_G_NODES, _G_WEIGHTS = np.polynomial.legendre.leggauss(5)
GAUSS_S = (_G_NODES + 1.0) / 2.0
GAUSS_W = _G_WEIGHTS / 2.0


@dataclass(frozen=True)
class Grid1D:
    """Uniform dyadic grid: 2^level cells on (x_lo, x_hi)."""

    x_lo: float
    x_hi: float
    level: int

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ValueError(f"degenerate interval ({self.x_lo}, {self.x_hi})")
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")

    @property
    def n_cells(self):
        return 2**self.level

    @property
    def h_mesh(self):
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def nodes(self):
        """All node coordinates including the boundary, length n_cells + 1."""
        return np.linspace(self.x_lo, self.x_hi, self.n_cells + 1)


class TridiagonalMatrix:
    """Symmetric-storage-free tridiagonal matrix (sub, diag, sup bands)."""

    def __init__(self, sub, diag, sup):
        sub = np.asarray(sub, dtype=np.float64)
        diag = np.asarray(diag, dtype=np.float64)
        sup = np.asarray(sup, dtype=np.float64)
        if sub.shape != (diag.shape[0] - 1,) or sup.shape != sub.shape:
            raise ValueError("band lengths must be (n-1, n, n-1)")
        self.sub = sub
        self.diag = diag
        self.sup = sup

    @property
    def shape(self):
        n = self.diag.shape[0]
        return (n, n)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.diag.shape[0],):
            raise ValueError("dimension mismatch in matvec")
        return backends.active().tridiag_matvec(self.sub, self.diag, self.sup, x)

    def factor(self):
        low, dia = backends.active().thomas_factor(self.sub, self.diag, self.sup)
        return TriFactor(low, dia, self.sup)

    def to_dense(self):
        n = self.diag.shape[0]
        a = np.zeros((n, n))
        a[np.arange(n), np.arange(n)] = self.diag
        a[np.arange(1, n), np.arange(n - 1)] = self.sub
        a[np.arange(n - 1), np.arange(1, n)] = self.sup
        return a

    def add_scaled(self, other, scale):
        """self + scale * other as a new matrix."""
        return TridiagonalMatrix(
            self.sub + scale * other.sub,
            self.diag + scale * other.diag,
            self.sup + scale * other.sup,
        )


class TriFactor:
    """Cached Thomas factorization; solve() reuses it."""

    def __init__(self, low, dia, sup):
        self.low = low
        self.dia = dia
        self.sup = sup

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        return backends.active().thomas_solve(self.low, self.dia, self.sup, b)


def solve_tridiagonal(A, b):
    """Solve A x = b by the Thomas algorithm.

    Raises SingularMatrixError on a zero pivot.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.diag.shape[0],):
        raise ValueError("dimension mismatch in solve_tridiagonal")
    return backends.active().solve_tridiagonal(A.sub, A.diag, A.sup, b)


@dataclass(frozen=True, eq=False)
class FemSpace:
    """P1 space on a Grid1D with assembled matrices and quadrature lattice.

    quad_x / quad_w hold the global Gauss points and weights (cell width
    included), cell-major with 5 points per cell.  All integrals of
    lattice-sampled data use these weights.
    """

    grid: Grid1D
    dim: int
    mass_matrix: TridiagonalMatrix
    stiffness_matrix: TridiagonalMatrix
    quad_x: np.ndarray
    quad_w: np.ndarray
    _left_idx: np.ndarray = field(repr=False)
    _s_rep: np.ndarray = field(repr=False)

    @property
    def level(self):
        return self.grid.level

    @property
    def n_quad(self):
        return self.quad_x.shape[0]

    def same_interval(self, other):
        return (
            self.grid.x_lo == other.grid.x_lo and self.grid.x_hi == other.grid.x_hi
        )


def build_space(x_lo, x_hi, level):
    """Assemble the P1 space at a dyadic level.

    Mass and stiffness use the exact closed forms for hat functions on a
    uniform grid: M = tridiag(h/6, 2h/3, h/6), K = tridiag(-1/h, 2/h, -1/h).
    """
    grid = Grid1D(float(x_lo), float(x_hi), int(level))
    n = grid.n_cells
    dim = n - 1
    h = grid.h_mesh
    mass = TridiagonalMatrix(
        np.full(dim - 1, h / 6.0), np.full(dim, 2.0 * h / 3.0), np.full(dim - 1, h / 6.0)
    )
    stiff = TridiagonalMatrix(
        np.full(dim - 1, -1.0 / h), np.full(dim, 2.0 / h), np.full(dim - 1, -1.0 / h)
    )
    cell_lo = grid.x_lo + h * np.arange(n)
    quad_x = (cell_lo[:, None] + h * GAUSS_S[None, :]).ravel()
    quad_w = np.tile(h * GAUSS_W, n)
    left_idx = np.repeat(np.arange(n, dtype=np.int64), 5)
    s_rep = np.tile(GAUSS_S, n)
    return FemSpace(grid, dim, mass, stiff, quad_x, quad_w, left_idx, s_rep)


class NodalFunction:
    """Piecewise-linear function given by interior nodal values."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (space.dim,):
            raise ValueError(
                f"expected {space.dim} coefficients, got {coeffs.shape}"
            )
        self.space = space
        self.coeffs = coeffs

    def copy(self):
        return NodalFunction(self.space, self.coeffs.copy())

    @classmethod
    def zero(cls, space):
        return cls(space, np.zeros(space.dim))

    @classmethod
    def from_callable(cls, space, fn):
        """Nodal interpolant (not the H-projection)."""
        return cls(space, np.asarray(fn(space.grid.nodes[1:-1]), dtype=np.float64))


def full_values(v):
    """Nodal values including the zero boundary, length n_cells + 1."""
    out = np.zeros(v.space.grid.n_cells + 1)
    out[1:-1] = v.coeffs
    return out


def eval_nodal(v, x):
    """Evaluate at arbitrary points (0 outside the interval)."""
    grid = v.space.grid
    x_in = np.asarray(x, dtype=np.float64)
    x1 = np.atleast_1d(x_in)
    t = (x1 - grid.x_lo) / grid.h_mesh
    cell = np.clip(np.floor(t).astype(np.int64), 0, grid.n_cells - 1)
    s = np.ascontiguousarray(t - cell)
    full = full_values(v)
    out = backends.active().eval_pw(full, cell, s)
    out = np.where((x1 >= grid.x_lo) & (x1 <= grid.x_hi), out, 0.0)
    if x_in.ndim == 0:
        return float(out[0])
    return out


def quad_values(v):
    """Values on the space's own quadrature lattice (length 5 * n_cells)."""
    sp = v.space
    return backends.active().eval_pw(full_values(v), sp._left_idx, sp._s_rep)


def load_vector(space, qvals):
    """(f, phi_i) for data f sampled on this space's quadrature lattice."""
    qvals = np.asarray(qvals, dtype=np.float64)
    if qvals.shape != (space.n_quad,):
        raise ValueError("quadrature sample length mismatch")
    fw = space.quad_w * qvals
    return backends.active().cell_load(fw, GAUSS_S, space.grid.n_cells)


def _restrict_load_once(b_fine):
    padded = np.zeros(b_fine.shape[0] + 2)
    padded[1:-1] = b_fine
    # coarse hat = fine hat at the shared node + half the two neighbors
    return padded[2:-2:2] + 0.5 * (padded[1:-2:2] + padded[3:-1:2])


def restrict_load(b_fine, fine, coarse):
    """Transport a load vector from a fine space to a nested coarse one.

    Exact: a coarse hat is the combination of fine hats with prolongation
    weights, so (f, phi_coarse) is a fixed stencil of the fine loads.
    """
    if not fine.same_interval(coarse):
        raise ValueError("restrict_load requires a common interval")
    if coarse.level > fine.level:
        raise ValueError("coarse level exceeds fine level")
    b = np.asarray(b_fine, dtype=np.float64)
    for _ in range(fine.level - coarse.level):
        b = _restrict_load_once(b)
    return b


def prolong(v, fine):
    """Exact representation of v in a finer nested space."""
    if not v.space.same_interval(fine):
        raise ValueError("prolong requires a common interval")
    if fine.level < v.space.level:
        raise ValueError("target space is coarser than the source")
    full = full_values(v)
    for _ in range(fine.level - v.space.level):
        nxt = np.zeros(2 * (full.shape[0] - 1) + 1)
        nxt[::2] = full
        nxt[1::2] = 0.5 * (full[:-1] + full[1:])
        full = nxt
    return NodalFunction(fine, full[1:-1])


def l2_project(space, source):
    """H-orthogonal projection onto the space.

    source is a callable (sampled by per-cell Gauss quadrature) or a
    NodalFunction on a nested space of the same interval.  Projection of
    nested piecewise-linear data is exact: loads are M c on the source
    space transported through the level gap.
    """
    if isinstance(source, NodalFunction):
        if not source.space.same_interval(space):
            raise ValueError("l2_project requires a common interval")
        if source.space.level <= space.level:
            return prolong(source, space)
        b = restrict_load(source.space.mass_matrix.matvec(source.coeffs),
                          source.space, space)
    else:
        b = load_vector(space, np.asarray(source(space.quad_x), dtype=np.float64))
    return NodalFunction(space, solve_tridiagonal(space.mass_matrix, b))


def _check_pair(u, v):
    if u.space is v.space:
        return
    if u.space.level != v.space.level or not u.space.same_interval(v.space):
        raise ValueError("operands live in different spaces")


def inner_H(u, v):
    _check_pair(u, v)
    return float(np.dot(u.coeffs, u.space.mass_matrix.matvec(v.coeffs)))


def inner_V(u, v):
    _check_pair(u, v)
    return float(np.dot(u.coeffs, u.space.stiffness_matrix.matvec(v.coeffs)))


def norm_H(v):
    return float(np.sqrt(max(inner_H(v, v), 0.0)))


def norm_V(v):
    return float(np.sqrt(max(inner_V(v, v), 0.0)))


def sup_norm(v):
    """Max absolute value; attained at a node for piecewise-linear v."""
    if v.coeffs.size == 0:
        return 0.0
    return float(np.max(np.abs(v.coeffs)))


def quad_inner_H(space, fvals, gvals):
    """L2 inner product of two quadrature-lattice samples."""
    return float(np.dot(space.quad_w, np.asarray(fvals) * np.asarray(gvals)))


def quad_norm_H(space, fvals):
    fvals = np.asarray(fvals, dtype=np.float64)
    return float(np.sqrt(max(np.dot(space.quad_w, fvals * fvals), 0.0)))


def _random_candidate(space, rng, kind):
    grid = space.grid
    if kind == 0:
        c = rng.uniform(-1.0, 1.0, size=space.dim)
    elif kind == 1:
        # low-pass Fourier sum: probes the flat end of the Rayleigh quotient
        x = (grid.nodes[1:-1] - grid.x_lo) / (grid.x_hi - grid.x_lo)
        amps = rng.uniform(-1.0, 1.0, size=8)
        c = np.zeros(space.dim)
        for k, a in enumerate(amps, start=1):
            c += (a / k**2) * np.sin(k * np.pi * x)
    else:
        # random walk bridge: intermediate roughness
        steps = rng.uniform(-1.0, 1.0, size=space.dim + 1)
        walk = np.cumsum(steps)
        walk -= np.linspace(walk[0], walk[-1], walk.shape[0])
        c = walk[1:]
    return NodalFunction(space, c)


def estimate_embedding_constants(space, n_samples, seed):
    """Observed maxima of norm_H/norm_V and sup_norm/norm_V.

    Random candidates alternate i.i.d. nodal noise with random-walk
    bridges; the running maximum is monotone in n_samples for a fixed
    seed.  Both ratios are true lower bounds for the continuous embedding
    constants.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    c_vh = 0.0
    c_inf = 0.0
    for i in range(n_samples):
        v = _random_candidate(space, rng, i % 3)
        nv = norm_V(v)
        if nv < 1e-8:
            continue
        c_vh = max(c_vh, norm_H(v) / nv)
        c_inf = max(c_inf, sup_norm(v) / nv)
    return c_vh, c_inf


def estimate_projection_stability(levels, n_samples, seed, x_lo=0.0, x_hi=1.0,
                                  fine_level=None):
    """Observed max of norm_V(P_N v) / norm_V(v) per level.

    Candidates live on a finer reference space (default: two levels above
    the largest requested level).
    """
    levels = sorted(set(int(k) for k in levels))
    if not levels:
        raise ValueError("levels must be nonempty")
    if fine_level is None:
        fine_level = max(levels) + 2
    fine = build_space(x_lo, x_hi, fine_level)
    spaces = {k: build_space(x_lo, x_hi, k) for k in levels}
    rng = np.random.default_rng(seed)
    out = {k: 0.0 for k in levels}
    for i in range(n_samples):
        v = _random_candidate(fine, rng, i % 3)
        nv = norm_V(v)
        if nv < 1e-8:
            continue
        for k in levels:
            p = l2_project(spaces[k], v)
            out[k] = max(out[k], norm_V(p) / nv)
    return out


def to_csv_line(v):
    """Serialize as "level,x_lo,x_hi,c_1,...,c_dim"."""
    grid = v.space.grid
    head = [str(grid.level), "%.17g" % grid.x_lo, "%.17g" % grid.x_hi]
    return ",".join(head + ["%.17g" % c for c in v.coeffs])


def from_csv_line(line, space=None):
    """Parse a to_csv_line record; builds the space unless one is passed."""
    parts = line.strip().split(",")
    level = int(parts[0])
    x_lo = float(parts[1])
    x_hi = float(parts[2])
    if space is None:
        space = build_space(x_lo, x_hi, level)
    elif space.level != level or space.grid.x_lo != x_lo or space.grid.x_hi != x_hi:
        raise ValueError("serialized record does not match the given space")
    coeffs = np.asarray([float(p) for p in parts[3:]], dtype=np.float64)
    return NodalFunction(space, coeffs)
