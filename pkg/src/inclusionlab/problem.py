"""Inclusion data and numerical validators for its structural hypotheses.

The right-hand side is a tube map built from a scalar nonlinearity g and a
radius function h:

    F(t, v) = {f : |g(v(x)) - f(x)| <= h(x) a.e.},

constant in time.  Validators sample random finite-element functions and
check the bilinear-form constants, the set-Lipschitz growth of F, the
relaxed one-sided Lipschitz inequality, and the norm growth bound.  Each
check reports its worst observed ratio and a witness seed that regenerates
the worst sample.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .setvalued import TubeSet

__all__ = [
    "ScalarNonlinearity",
    "soft_cubic",
    "eps_power",
    "custom_nonlinearity",
    "InclusionProblem",
    "default_problem",
    "constant_radius",
    "GrowthSpec",
    "linear_growth_spec",
    "hoelder_growth_spec",
    "CheckReport",
    "evaluate_F",
    "check_form_constants",
    "check_set_lipschitz",
    "check_set_hoelder",
    "check_osl",
    "check_growth",
    "growth_bound",
    "image_norm",
    "bump",
    "sine_mode",
]

#: sup-norm bound for H^1_0 functions on a unit-length interval; used as a
#: safe fallback when no sampled estimate is supplied
SUP_EMBEDDING_DEFAULT = 0.5


@dataclass(frozen=True)
class ScalarNonlinearity:
    """Pointwise nonlinearity g with its scalar one-sided Lipschitz constant.

    osl_scalar holds an ell with (g(s1) - g(s2)) (s1 - s2) <= ell (s1 - s2)^2
    for all reals.
    """

    tag: str
    g: object
    osl_scalar: float


def soft_cubic():
    """g(s) = s (1 - |s|): growth-limited, one-sided Lipschitz with ell = 1."""

    def g(eta):
        eta = np.asarray(eta, dtype=np.float64)
        return eta * (1.0 - np.abs(eta))

    return ScalarNonlinearity("soft_cubic", g, 1.0)


def eps_power(eps):
    """g(s) = s (1 - |s|^(2-eps)); eps = 1 recovers soft_cubic."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    p = 2.0 - eps

    def g(eta):
        eta = np.asarray(eta, dtype=np.float64)
        return eta * (1.0 - np.abs(eta) ** p)

    return ScalarNonlinearity(f"eps_power({eps:g})", g, 1.0)


def custom_nonlinearity(g, osl_scalar, tag="custom"):
    return ScalarNonlinearity(tag, g, float(osl_scalar))


def bump(xi):
    """Polynomial bump on [0,1]: zero value and slope at both ends, max 1."""
    xi = np.asarray(xi, dtype=np.float64)
    return 16.0 * xi**2 * (1.0 - xi) ** 2


def sine_mode(xi, k=1):
    xi = np.asarray(xi, dtype=np.float64)
    return np.sin(k * np.pi * xi)


class InclusionProblem:
    """Data of the evolution inclusion u' + Au in F(t, u) on an interval.

    radius_fn and u0_fn take global coordinates.  alpha_const caches the
    L2 norm of the radius (the image sets of F grow by at most this much
    beyond their centers in H).
    """

    def __init__(self, x_lo, x_hi, nonlinearity, radius_fn, u0_fn, T, ell=1.0):
        if not T > 0:
            raise ValueError("final time must be positive")
        self.x_lo = float(x_lo)
        self.x_hi = float(x_hi)
        self.nonlinearity = nonlinearity
        self.radius_fn = radius_fn
        self.u0_fn = u0_fn
        self.T = float(T)
        self.ell = float(ell)
        self._spaces = {}
        ref = self.space(9)
        rvals = self._radius_on(ref)
        if np.any(rvals < 0.0):
            raise ValueError("radius function must be nonnegative")
        self.alpha_const = fem.quad_norm_H(ref, rvals)

    def space(self, level):
        sp = self._spaces.get(level)
        if sp is None:
            sp = fem.build_space(self.x_lo, self.x_hi, level)
            self._spaces[level] = sp
        return sp

    def _radius_on(self, space):
        return np.asarray(self.radius_fn(space.quad_x), dtype=np.float64)

    def radius_values(self, space):
        """Radius samples on a space lattice, cached per space."""
        key = ("radius", space.level)
        vals = self._spaces.get(key)
        if vals is None:
            vals = self._radius_on(space)
            self._spaces[key] = vals
        return vals

    def initial_state(self, space):
        """H-projection of the initial function onto the space."""
        return fem.l2_project(space, self.u0_fn)


def constant_radius(value):
    value = float(value)
    if value < 0:
        raise ValueError("radius must be nonnegative")
    return lambda x: np.full_like(np.asarray(x, dtype=np.float64), value)


def default_problem(h_const=0.1, T=1.0, ell=1.0, nonlinearity=None,
                    u0="bump", x_lo=0.0, x_hi=1.0):
    """Reference configuration: soft_cubic tube of constant radius, bump start."""
    if nonlinearity is None:
        nonlinearity = soft_cubic()
    width = x_hi - x_lo

    if callable(u0):
        u0_fn = u0
    elif u0 == "bump":
        u0_fn = lambda x: bump((np.asarray(x) - x_lo) / width)
    elif u0 == "sine":
        u0_fn = lambda x: sine_mode((np.asarray(x) - x_lo) / width)
    else:
        raise ValueError(f"unknown initial-state preset {u0!r}")
    return InclusionProblem(
        x_lo, x_hi, nonlinearity, constant_radius(h_const), u0_fn, T, ell
    )


@dataclass(frozen=True)
class GrowthSpec:
    """Parameters of the growth estimate for F.

    mode "linear":  dist_H(F(u), F(v)) <= c_F (1 + |u|_V + |v|_V) |u - v|_H.
    mode "hoelder": ... <= b(|u|_H + |v|_H) (1 + |u|_V^beta + |v|_V^beta)
                        |u - v|_H^gamma  with beta in [0,2), gamma in (0,1].
    """

    mode: str
    c_F: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    b: object = None

    def __post_init__(self):
        if self.mode not in ("linear", "hoelder"):
            raise ValueError("mode must be 'linear' or 'hoelder'")
        if self.mode == "hoelder":
            if not 0.0 <= self.beta < 2.0:
                raise ValueError("beta must lie in [0, 2)")
            if not 0.0 < self.gamma <= 1.0:
                raise ValueError("gamma must lie in (0, 1]")
            if self.b is None:
                raise ValueError("hoelder mode needs the coefficient function b")

    def rhs(self, norm_H_u, norm_V_u, norm_H_v, norm_V_v, dist_H_uv):
        if self.mode == "linear":
            return self.c_F * (1.0 + norm_V_u + norm_V_v) * dist_H_uv
        return (
            self.b(norm_H_u + norm_H_v)
            * (1.0 + norm_V_u**self.beta + norm_V_v**self.beta)
            * dist_H_uv**self.gamma
        )


def linear_growth_spec(c_inf_hat=SUP_EMBEDDING_DEFAULT):
    """c_F = max(1, sup-embedding estimate), the tube map's natural constant."""
    return GrowthSpec("linear", c_F=max(1.0, float(c_inf_hat)))


def hoelder_growth_spec(eps, c_inf_hat=SUP_EMBEDDING_DEFAULT):
    """Witness parameters for eps_power: beta = 2 - eps, gamma = 1.

    The coefficient is constant: |s1|s1|^p - s2|s2|^p| <= (p+1) max^p |s1-s2|
    with p = 2 - eps gives b0 = max(1, (3 - eps) c_inf^(2-eps)).
    """
    p = 2.0 - eps
    b0 = max(1.0, (p + 1.0) * float(c_inf_hat) ** p)
    return GrowthSpec("hoelder", beta=p, gamma=1.0, b=lambda s: b0)


CHECK_CSV_HEADER = "check,samples,worst_ratio,witness_seed,pass"


@dataclass
class CheckReport:
    """Outcome of a sampled validator run."""

    check: str
    samples: int
    worst_ratio: float
    witness_seed: int
    passed: bool
    tol: float
    extra: dict = field(default_factory=dict)

    def csv_row(self):
        return "%s,%d,%.17g,%d,%s" % (
            self.check,
            self.samples,
            self.worst_ratio,
            self.witness_seed,
            "true" if self.passed else "false",
        )


def evaluate_F(problem, t, v):
    """Image tube of the right-hand side at state v, on v's own lattice."""
    space = v.space
    center = problem.nonlinearity.g(fem.quad_values(v))
    return TubeSet(space, center, problem.radius_values(space))


def _sample_seed(seed, i):
    return int(seed) * 1_000_003 + i


def _random_pair(space, rng, amp=1.0):
    u = fem.NodalFunction(space, rng.uniform(-amp, amp, space.dim))
    v = fem.NodalFunction(space, rng.uniform(-amp, amp, space.dim))
    return u, v


def check_form_constants(space, n_samples=200, seed=0):
    """Sampled extremes of a(v,v)/|v|_V^2 and |a(v,w)|/(|v|_V |w|_V).

    For the Dirichlet form a equals the V inner product, so both constants
    are 1; the diagonal pair is included to pin the upper constant.
    """
    rng = np.random.default_rng(seed)
    c_lo = np.inf
    c_hi = 0.0
    for _ in range(n_samples):
        u, v = _random_pair(space, rng)
        nu, nv = fem.norm_V(u), fem.norm_V(v)
        if nu < 1e-8 or nv < 1e-8:
            continue
        c_lo = min(c_lo, fem.inner_V(u, u) / nu**2)
        c_hi = max(c_hi, abs(fem.inner_V(u, v)) / (nu * nv))
        c_hi = max(c_hi, fem.inner_V(u, u) / nu**2)
    return c_lo, c_hi


def _center_values(problem, v):
    return problem.nonlinearity.g(fem.quad_values(v))


def check_set_lipschitz(problem, spec, n_samples=10_000, seed=0, level=5,
                        amp=1.5, tol=1e-9):
    """Worst ratio of dist_H(F(u), F(v)) to the linear growth bound.

    Tubes share their radius, so the Hausdorff distance between images is
    exactly the L2 distance of the centers.
    """
    if spec.mode != "linear":
        raise ValueError("check_set_lipschitz expects a linear GrowthSpec")
    space = problem.space(level)
    worst = 0.0
    witness = _sample_seed(seed, 0)
    for i in range(n_samples):
        rng = np.random.default_rng(_sample_seed(seed, i))
        u, v = _random_pair(space, rng, amp)
        duv = fem.norm_H(fem.NodalFunction(space, u.coeffs - v.coeffs))
        if duv < 1e-10:
            continue
        lhs = fem.quad_norm_H(
            space, _center_values(problem, u) - _center_values(problem, v)
        )
        rhs = spec.rhs(fem.norm_H(u), fem.norm_V(u), fem.norm_H(v),
                       fem.norm_V(v), duv)
        ratio = lhs / rhs
        if ratio > worst:
            worst = ratio
            witness = _sample_seed(seed, i)
    return CheckReport(
        check="set_lipschitz",
        samples=n_samples,
        worst_ratio=worst,
        witness_seed=witness,
        passed=worst <= 1.0 + tol,
        tol=tol,
        extra={"level": level, "amp": amp, "c_F": spec.c_F},
    )


def check_set_hoelder(problem, spec, n_samples=10_000, seed=0, level=5,
                      amp=1.5, tol=1e-9):
    """Same protocol against the beta/gamma growth form."""
    if spec.mode != "hoelder":
        raise ValueError("check_set_hoelder expects a hoelder GrowthSpec")
    space = problem.space(level)
    worst = 0.0
    witness = _sample_seed(seed, 0)
    for i in range(n_samples):
        rng = np.random.default_rng(_sample_seed(seed, i))
        u, v = _random_pair(space, rng, amp)
        duv = fem.norm_H(fem.NodalFunction(space, u.coeffs - v.coeffs))
        if duv < 1e-10:
            continue
        lhs = fem.quad_norm_H(
            space, _center_values(problem, u) - _center_values(problem, v)
        )
        rhs = spec.rhs(fem.norm_H(u), fem.norm_V(u), fem.norm_H(v),
                       fem.norm_V(v), duv)
        ratio = lhs / rhs
        if ratio > worst:
            worst = ratio
            witness = _sample_seed(seed, i)
    return CheckReport(
        check="set_hoelder",
        samples=n_samples,
        worst_ratio=worst,
        witness_seed=witness,
        passed=worst <= 1.0 + tol,
        tol=tol,
        extra={"level": level, "amp": amp, "beta": spec.beta,
               "gamma": spec.gamma, "b0": spec.b(0.0)},
    )


def check_osl(problem, n_samples=10_000, seed=0, level=5, amp=1.5, tol=1e-9):
    """Relaxed one-sided Lipschitz check with matched tube offsets.

    For a selection g1 = center(v) + theta h from F(t, v), the transported
    candidate g2 = center(w) + theta h lies in F(t, w) and realizes

        (g1 - g2, v - w)_H <= ell |v - w|_H^2.
    """
    space = problem.space(level)
    h = problem.radius_values(space)
    ell = problem.ell
    worst = -np.inf
    witness = _sample_seed(seed, 0)
    violations = 0
    for i in range(n_samples):
        rng = np.random.default_rng(_sample_seed(seed, i))
        v, w = _random_pair(space, rng, amp)
        theta = rng.uniform(-1.0, 1.0, space.n_quad)
        g1 = _center_values(problem, v) + theta * h
        g2 = _center_values(problem, w) + theta * h
        dvw = fem.quad_values(v) - fem.quad_values(w)
        nv2 = fem.quad_inner_H(space, dvw, dvw)
        if nv2 < 1e-18:
            continue
        lhs = fem.quad_inner_H(space, g1 - g2, dvw)
        ratio = lhs / (ell * nv2)
        if lhs > ell * nv2 + tol * max(1.0, nv2):
            violations += 1
        if ratio > worst:
            worst = ratio
            witness = _sample_seed(seed, i)
    return CheckReport(
        check="osl",
        samples=n_samples,
        worst_ratio=worst,
        witness_seed=witness,
        passed=violations == 0,
        tol=tol,
        extra={"level": level, "amp": amp, "ell": ell,
               "violations": violations},
    )


def growth_bound(problem, spec, t, v):
    """Upper bound for sup of |f|_H over f in F(t, v)."""
    nh = fem.norm_H(v)
    nv = fem.norm_V(v)
    if spec.mode == "linear":
        return problem.alpha_const + spec.c_F * (1.0 + nv) * nh
    return problem.alpha_const + spec.b(nh) * (1.0 + nv**spec.beta) * nh**spec.gamma


def image_norm(problem, t, v):
    """Exact sup of |f|_H over the tube: attained at center + sign * radius."""
    tube = evaluate_F(problem, t, v)
    return fem.quad_norm_H(tube.space, np.abs(tube.center) + tube.radius)


def check_growth(problem, spec, n_samples=10_000, seed=0, level=5, amp=1.5,
                 tol=1e-9):
    """image_norm <= growth_bound over random states."""
    space = problem.space(level)
    worst = 0.0
    witness = _sample_seed(seed, 0)
    for i in range(n_samples):
        rng = np.random.default_rng(_sample_seed(seed, i))
        v = fem.NodalFunction(space, rng.uniform(-amp, amp, space.dim))
        bound = growth_bound(problem, spec, 0.0, v)
        if bound < 1e-12:
            continue
        ratio = image_norm(problem, 0.0, v) / bound
        if ratio > worst:
            worst = ratio
            witness = _sample_seed(seed, i)
    return CheckReport(
        check="growth",
        samples=n_samples,
        worst_ratio=worst,
        witness_seed=witness,
        passed=worst <= 1.0 + tol,
        tol=tol,
        extra={"level": level, "amp": amp},
    )
