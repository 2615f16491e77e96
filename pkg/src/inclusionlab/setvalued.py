"""Set-valued primitives: tubes, half-spaces, projections, set distances.

Tube sets live on the quadrature lattice of a finite-element space, where
the L2 projection decouples into a pointwise clamp.  The intersection of
a tube with a half-space is handled by Dykstra alternating projections.
Hausdorff and Kuratowski diagnostics operate on finite point clouds with
a caller-supplied metric.
"""

from dataclasses import dataclass

import numpy as np

from . import backends, fem

__all__ = [
    "TubeSet",
    "HalfSpace",
    "PointCloud",
    "DykstraError",
    "tube_project",
    "tube_dist",
    "project_box_halfspace",
    "project_tube_halfspace",
    "hausdorff_semidist",
    "hausdorff_dist",
    "semidist_from_matrix",
    "hausdorff_from_matrix",
    "KuratowskiReport",
    "kuratowski_report",
]


class DykstraError(RuntimeError):
    """Alternating projections failed to converge.

    Carries the last iterate and the residual at the point of failure.
    """

    def __init__(self, message, iterate, residual):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class TubeSet:
    """{f : |f(x) - center(x)| <= radius(x)} sampled on a quadrature lattice."""

    def __init__(self, space, center, radius):
        center = np.asarray(center, dtype=np.float64)
        radius = np.asarray(radius, dtype=np.float64)
        if radius.ndim == 0:
            radius = np.full(space.n_quad, float(radius))
        if center.shape != (space.n_quad,) or radius.shape != (space.n_quad,):
            raise ValueError("center/radius must be sampled on the space lattice")
        if np.any(radius < 0.0):
            raise ValueError("tube radius must be nonnegative")
        self.space = space
        self.center = center
        self.radius = radius

    @property
    def lo(self):
        return self.center - self.radius

    @property
    def hi(self):
        return self.center + self.radius


class HalfSpace:
    """{g : (normal, g)_H <= offset} on the same quadrature lattice."""

    def __init__(self, space, normal, offset):
        if isinstance(normal, fem.NodalFunction):
            normal = fem.quad_values(normal)
        normal = np.asarray(normal, dtype=np.float64)
        if normal.shape != (space.n_quad,):
            raise ValueError("normal must be sampled on the space lattice")
        self.space = space
        self.normal = normal
        self.offset = float(offset)

    def violation(self, g):
        return fem.quad_inner_H(self.space, self.normal, g) - self.offset


@dataclass(frozen=True)
class PointCloud:
    """Finite subset of a metric space; metric(a, b) supplies distances."""

    points: tuple
    metric: object

    def __init__(self, points, metric):
        object.__setattr__(self, "points", tuple(points))
        object.__setattr__(self, "metric", metric)

    def __len__(self):
        return len(self.points)


def tube_project(tube, target):
    """Exact L2 projection onto the tube: pointwise clamp on the lattice."""
    target = np.asarray(target, dtype=np.float64)
    return backends.active().clip(target, tube.lo, tube.hi)


def tube_dist(tube, target):
    """L2 distance from target to the tube via the lattice quadrature."""
    target = np.asarray(target, dtype=np.float64)
    excess = np.maximum(np.abs(target - tube.center) - tube.radius, 0.0)
    return fem.quad_norm_H(tube.space, excess)


def _halfspace_project(w, d, c, g):
    dd = float(np.dot(w, d * d))
    viol = float(np.dot(w, d * g)) - c
    if viol <= 0.0:
        return g
    if dd <= 0.0:
        raise ValueError("infeasible half-space with zero normal")
    return g - (viol / dd) * d


def project_box_halfspace(w, lo, hi, d, c, target, tol=1e-10, max_iter=10_000):
    """Weighted L2 projection onto {lo <= x <= hi} and {sum w d x <= c}.

    Dykstra alternating projections in the inner product <x,y> = sum w x y.
    Raises DykstraError (with last iterate and residual) if max_iter is
    exhausted before the iterate settles inside both sets.
    """
    w = np.asarray(w, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    dd = float(np.dot(w, d * d))
    if dd <= 0.0:
        if c >= 0.0:
            return np.clip(target, lo, hi)
        raise ValueError("infeasible half-space with zero normal")
    x = target.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    scale = max(1.0, float(np.max(np.abs(target))))
    box_viol = hviol = step = np.inf
    for _ in range(max_iter):
        xp, pp, qp = x, p, q
        y = np.clip(x + p, lo, hi)
        p = x + p - y
        viol = float(np.dot(w, d * (y + q))) - c
        if viol <= 0.0:
            x = y + q
        else:
            x = y + q - (viol / dd) * d
        q = y + q - x
        box_viol = float(np.max(np.maximum(np.maximum(lo - x, x - hi), 0.0)))
        hviol = max(0.0, float(np.dot(w, d * x)) - c) / np.sqrt(dd)
        # x can stall for several iterations while p, q still move, so the
        # increment test covers all three sequences
        step = float(
            np.sqrt(np.dot(w, (x - xp) ** 2))
            + np.sqrt(np.dot(w, (p - pp) ** 2))
            + np.sqrt(np.dot(w, (q - qp) ** 2))
        )
        if box_viol <= tol * scale and hviol <= tol * scale and step <= tol * scale:
            return x
    resid = max(box_viol, hviol, step)
    raise DykstraError(
        f"no convergence after {max_iter} iterations (residual {resid:.3e})",
        x,
        resid,
    )


def project_tube_halfspace(tube, hs, target, tol=1e-10, max_iter=10_000):
    """Projection of target onto tube intersect half-space (lattice data)."""
    if tube.space is not hs.space:
        raise ValueError("tube and half-space must share a space")
    target = np.asarray(target, dtype=np.float64)
    return project_box_halfspace(
        tube.space.quad_w, tube.lo, tube.hi, hs.normal, hs.offset, target,
        tol=tol, max_iter=max_iter,
    )


def hausdorff_semidist(A, B):
    """sup over a in A of dist(a, B)."""
    if len(A) == 0 or len(B) == 0:
        raise ValueError("semi-distance of an empty cloud is undefined")
    metric = A.metric
    return max(min(metric(a, b) for b in B.points) for a in A.points)


def hausdorff_dist(A, B):
    return max(hausdorff_semidist(A, B), hausdorff_semidist(B, A))


def semidist_from_matrix(D):
    """Semi-distance from a precomputed cross-distance matrix D[i, j]."""
    D = np.asarray(D, dtype=np.float64)
    if D.size == 0:
        raise ValueError("semi-distance of an empty cloud is undefined")
    return float(np.max(np.min(D, axis=1)))


def hausdorff_from_matrix(D):
    return max(semidist_from_matrix(D), semidist_from_matrix(np.asarray(D).T))


@dataclass(frozen=True)
class KuratowskiReport:
    """Distance diagnostics for a sequence of clouds against a candidate.

    lower[i, n] = dist(candidate point i, cloud n): all columns tending to
    zero is the lower-limit signature.  upper[j] = dist(last-cloud point j,
    candidate): small values are the upper-limit signature.
    """

    lower: np.ndarray
    upper: np.ndarray
    lower_max: np.ndarray
    upper_max: float


def kuratowski_report(sequence, candidate):
    if not sequence:
        raise ValueError("empty cloud sequence")
    metric = candidate.metric
    lower = np.array(
        [
            [min(metric(x, m) for m in cloud.points) for cloud in sequence]
            for x in candidate.points
        ]
    )
    last = sequence[-1]
    upper = np.array(
        [min(metric(m, x) for x in candidate.points) for m in last.points]
    )
    return KuratowskiReport(
        lower=lower,
        upper=upper,
        lower_max=lower.max(axis=0),
        upper_max=float(upper.max()),
    )
