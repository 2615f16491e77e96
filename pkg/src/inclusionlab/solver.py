"""Time stepping for the Galerkin inclusion with pluggable selections.

Each step selects a forcing from the current image tube F(t_m, u^m) and
advances with one implicit Euler step of the linear part:

    (M + tau K) c^{m+1} = M c^m + tau b,   b_i = (f^m, phi_i).

The selection is explicit (evaluated at u^m), so set membership is exact
and no nonlinear solve is needed.  Every stored forcing is checked
against its tube; violating strategies abort the run.
"""

from dataclasses import dataclass

import numpy as np

from . import backends, fem, rng as crng
from .fem import GAUSS_S
from .problem import evaluate_F
from .setvalued import TubeSet, tube_project

__all__ = [
    "SelectionError",
    "SolverConfig",
    "SelectionStrategy",
    "Projection",
    "ConstantTheta",
    "Extremal",
    "RandomTheta",
    "Trajectory",
    "solve",
    "EnergyReport",
    "energy_check",
    "wplus_star_norm",
    "lift_states",
    "l2H_metric",
    "wplus_star_distance",
    "trajectory_to_lines",
    "trajectory_from_lines",
    "forcings_to_lines",
]

FEASIBILITY_TOL = 1e-12


class SelectionError(RuntimeError):
    """A strategy produced a forcing outside its tube."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    """Uniform time grid 0..T with step tau; theta fields always clamped."""

    tau: float
    T: float
    theta_clamp: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau <= self.T:
            raise ValueError("need 0 < tau <= T")
        m = round(self.T / self.tau)
        if m < 1 or abs(m * self.tau - self.T) > 1e-12:
            raise ValueError("tau must divide T (uniform grid)")

    @property
    def n_steps(self):
        return round(self.T / self.tau)

    def times(self):
        return self.tau * np.arange(self.n_steps + 1)


class SelectionStrategy:
    """Base: bind() specializes the strategy to a problem/space/config."""

    seed = 0

    def descriptor(self):
        raise NotImplementedError

    def bind(self, problem, space, config):
        """Returns select(m, t, tube) -> forcing values on the lattice."""
        raise NotImplementedError


class Projection(SelectionStrategy):
    """Project a target signal into the tube (clamp on the lattice).

    target_rule: "zero" (minimal-norm selection), "center", or a callable
    (t, space) -> lattice values.
    """

    def __init__(self, target_rule="zero"):
        if not (callable(target_rule) or target_rule in ("zero", "center")):
            raise ValueError(f"unknown target rule {target_rule!r}")
        self.target_rule = target_rule

    def descriptor(self):
        name = self.target_rule if isinstance(self.target_rule, str) else "custom"
        return f"projection({name})"

    def bind(self, problem, space, config):
        rule = self.target_rule
        if rule == "zero":
            target = np.zeros(space.n_quad)

            def select(m, t, tube):
                return tube_project(tube, target)

        elif rule == "center":

            def select(m, t, tube):
                return tube.center.copy()

        else:

            def select(m, t, tube):
                return tube_project(tube, np.asarray(rule(t, space), dtype=np.float64))

        return select


class ConstantTheta(SelectionStrategy):
    """f = center + theta * radius with a fixed theta in [-1, 1]."""

    def __init__(self, theta):
        if not -1.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [-1, 1]")
        self.theta = float(theta)

    def descriptor(self):
        return f"constant_theta({self.theta:g})"

    def bind(self, problem, space, config):
        theta = self.theta

        def select(m, t, tube):
            return tube.center + theta * tube.radius

        return select


class Extremal(SelectionStrategy):
    """Extreme selections: theta = +-1 switching on equal time intervals.

    pattern is a sequence of +-1; interval i of [0, T) uses pattern[i].
    """

    def __init__(self, pattern):
        pattern = tuple(int(p) for p in pattern)
        if not pattern or any(p not in (-1, 1) for p in pattern):
            raise ValueError("pattern must be a nonempty sequence of +-1")
        self.pattern = pattern

    def descriptor(self):
        return "extremal(%s)" % "".join("+" if p > 0 else "-" for p in self.pattern)

    def bind(self, problem, space, config):
        pattern = np.asarray(self.pattern, dtype=np.float64)
        n_int = len(pattern)
        T = config.T

        def select(m, t, tube):
            i = min(int(t / T * n_int), n_int - 1)
            return tube.center + pattern[i] * tube.radius

        return select


class RandomTheta(SelectionStrategy):
    """Random piecewise-constant theta field, reproducible and level-free.

    theta is constant on each (time segment, reference cell): n_switches
    equal time segments and n_ref_cells equal spatial cells of the
    interval, values uniform in [-1, 1) from a counter generator keyed by
    (seed, segment, cell).  Keying on fixed reference cells rather than
    quadrature indices makes the field a function of (t, x), so runs at
    different levels sample the same selection.
    """

    def __init__(self, seed, n_switches=8, n_ref_cells=16):
        if n_switches < 1 or n_ref_cells < 1:
            raise ValueError("need n_switches >= 1 and n_ref_cells >= 1")
        self.seed = int(seed)
        self.n_switches = int(n_switches)
        self.n_ref_cells = int(n_ref_cells)

    def descriptor(self):
        return (
            f"random_theta(seed={self.seed},n_switches={self.n_switches},"
            f"n_ref_cells={self.n_ref_cells})"
        )

    def bind(self, problem, space, config):
        grid = space.grid
        rel = (space.quad_x - grid.x_lo) / (grid.x_hi - grid.x_lo)
        cell = np.minimum(
            (rel * self.n_ref_cells).astype(np.int64), self.n_ref_cells - 1
        )
        T = config.T
        n_seg = self.n_switches
        seed = self.seed
        if config.theta_clamp:
            clamp = lambda th: np.clip(th, -1.0, 1.0)
        else:
            clamp = lambda th: th
        cache = {}

        def select(m, t, tube):
            seg = min(int(t / T * n_seg), n_seg - 1)
            theta = cache.get(seg)
            if theta is None:
                theta = clamp(crng.symmetric(seed, np.full_like(cell, seg), cell))
                cache[seg] = theta
            return tube.center + theta * tube.radius

        return select


class Trajectory:
    """Time grid, state snapshots and per-step forcing records."""

    def __init__(self, space, times, states, forcings, strategy, seed, tau, T):
        self.space = space
        self.times = np.asarray(times, dtype=np.float64)
        self.states = np.asarray(states, dtype=np.float64)
        self.forcings = np.asarray(forcings, dtype=np.float64)
        self.strategy = strategy
        self.seed = seed
        self.tau = float(tau)
        self.T = float(T)
        if self.states.shape != (self.times.shape[0], space.dim):
            raise ValueError("state array shape mismatch")
        if self.forcings.shape[0] != self.times.shape[0] - 1:
            raise ValueError("need one forcing record per step")

    @property
    def n_steps(self):
        return self.times.shape[0] - 1

    def state(self, m):
        return fem.NodalFunction(self.space, self.states[m])

    def norms_H(self):
        mm = self.space.mass_matrix
        y = _matvec_rows(mm, self.states)
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", self.states, y), 0.0))

    def norms_V(self):
        kk = self.space.stiffness_matrix
        y = _matvec_rows(kk, self.states)
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", self.states, y), 0.0))


def _matvec_rows(tri, X):
    Y = X * tri.diag[None, :]
    Y[:, 1:] += X[:, :-1] * tri.sub[None, :]
    Y[:, :-1] += X[:, 1:] * tri.sup[None, :]
    return Y


def solve(problem, space, strategy, config):
    """Run the IMEX scheme from the projected initial state."""
    kern = backends.active()
    n_steps = config.n_steps
    tau = config.tau
    radius = problem.radius_values(space)
    g = problem.nonlinearity.g
    mm = space.mass_matrix
    stepmat = mm.add_scaled(space.stiffness_matrix, tau)
    fac = stepmat.factor()
    select = strategy.bind(problem, space, config)

    c = problem.initial_state(space).coeffs
    states = np.empty((n_steps + 1, space.dim))
    forcings = np.empty((n_steps, space.n_quad))
    states[0] = c
    full = np.zeros(space.grid.n_cells + 1)
    left = space._left_idx
    s_rep = space._s_rep
    for m in range(n_steps):
        t = m * tau
        full[1:-1] = c
        center = g(kern.eval_pw(full, left, s_rep))
        tube = TubeSet(space, center, radius)
        fvals = np.asarray(select(m, t, tube), dtype=np.float64)
        excess = float(np.max(np.abs(fvals - center) - radius))
        if excess > FEASIBILITY_TOL * max(1.0, float(np.max(radius))):
            raise SelectionError(
                f"selection leaves the tube at step {m} (excess {excess:.3e})", m
            )
        forcings[m] = fvals
        fw = space.quad_w * fvals
        c = kern.imex_step(
            mm.sub, mm.diag, mm.sup, fac.low, fac.dia, fac.sup, c, fw, GAUSS_S, tau
        )
        states[m + 1] = c
    return Trajectory(
        space, config.times(), states, forcings,
        strategy.descriptor(), strategy.seed, tau, config.T,
    )


@dataclass(frozen=True)
class EnergyReport:
    """Per-step discrete energy-inequality audit."""

    violations: np.ndarray
    max_violation: float
    worst_step: int
    passed: bool
    tol: float


def energy_check(trajectory, problem, tol=1e-9):
    """Check the one-step energy inequality for every step.

    (|u^{m+1}|_H^2 - |u^m|_H^2) / (2 tau) + |u^{m+1}|_V^2 <= (f^m, u^{m+1})
    holds exactly for the implicit step; violations beyond tol * scale
    fail, where scale tracks the magnitudes entering the inequality.
    """
    sp = trajectory.space
    tau = trajectory.tau
    X = trajectory.states
    nh2 = np.einsum("ij,ij->i", X, _matvec_rows(sp.mass_matrix, X))
    nv2 = np.einsum("ij,ij->i", X, _matvec_rows(sp.stiffness_matrix, X))
    # (f^m, u^{m+1}) in the lattice quadrature that assembled the loads
    U1 = np.stack([fem.quad_values(trajectory.state(m + 1))
                   for m in range(trajectory.n_steps)])
    rhs = (trajectory.forcings * U1) @ sp.quad_w
    lhs = (nh2[1:] - nh2[:-1]) / (2.0 * tau) + nv2[1:]
    scale = 1.0 + np.abs(rhs) + nv2[1:] + np.abs(nh2[1:] - nh2[:-1]) / (2.0 * tau)
    violations = lhs - rhs
    rel = violations / scale
    worst = int(np.argmax(rel))
    return EnergyReport(
        violations=violations,
        max_violation=float(violations[worst]),
        worst_step=worst,
        passed=bool(np.all(rel <= tol)),
        tol=tol,
    )


def wplus_star_norm(trajectory):
    """max_t |u|_H plus the L2-in-time V norm (trapezoid in time)."""
    nh = trajectory.norms_H()
    nv2 = trajectory.norms_V() ** 2
    return float(np.max(nh) + np.sqrt(np.trapezoid(nv2, dx=trajectory.tau)))


def _lift_rows(X, space_from, space_to):
    """Prolong every row (exact nested embedding), vectorized over rows."""
    if space_from.level == space_to.level:
        return X
    full = np.zeros((X.shape[0], space_from.grid.n_cells + 1))
    full[:, 1:-1] = X
    for _ in range(space_to.level - space_from.level):
        nxt = np.zeros((X.shape[0], 2 * (full.shape[1] - 1) + 1))
        nxt[:, ::2] = full
        nxt[:, 1::2] = 0.5 * (full[:, :-1] + full[:, 1:])
        full = nxt
    return full[:, 1:-1]


def lift_states(trajectory, fine_space, fine_times):
    """States prolonged to fine_space and linearly interpolated in time."""
    if not trajectory.space.same_interval(fine_space):
        raise ValueError("lift requires a common interval")
    X = _lift_rows(trajectory.states, trajectory.space, fine_space)
    src = trajectory.times
    fine_times = np.asarray(fine_times, dtype=np.float64)
    if src.shape == fine_times.shape and np.allclose(src, fine_times,
                                                     rtol=0, atol=1e-12):
        return X
    idx = np.clip(np.searchsorted(src, fine_times, side="right") - 1,
                  0, src.shape[0] - 2)
    w = (fine_times - src[idx]) / (src[idx + 1] - src[idx])
    w = np.clip(w, 0.0, 1.0)[:, None]
    return (1.0 - w) * X[idx] + w * X[idx + 1]


def _common_frame(trajA, trajB):
    if abs(trajA.T - trajB.T) > 1e-12:
        raise ValueError("trajectories span different time horizons")
    fine_space = trajA.space if trajA.space.level >= trajB.space.level else trajB.space
    fine = trajA if trajA.tau <= trajB.tau else trajB
    return fine_space, fine.times


def time_weights(times):
    """Trapezoid weights on a (uniform) time grid."""
    tau = times[1] - times[0]
    w = np.full(times.shape[0], tau)
    w[0] = w[-1] = tau / 2.0
    return w


def l2H_metric(trajA, trajB):
    """Discrete L2(0,T;H) distance on the common refined frame."""
    fine_space, times = _common_frame(trajA, trajB)
    XA = lift_states(trajA, fine_space, times)
    XB = lift_states(trajB, fine_space, times)
    D = XA - XB
    nh2 = np.einsum("ij,ij->i", D, _matvec_rows(fine_space.mass_matrix, D))
    return float(np.sqrt(max(np.dot(time_weights(times), nh2), 0.0)))


def wplus_star_distance(trajA, trajB):
    """W-style surrogate distance: max-in-time H plus L2-in-time V."""
    fine_space, times = _common_frame(trajA, trajB)
    D = lift_states(trajA, fine_space, times) - lift_states(trajB, fine_space, times)
    nh2 = np.einsum("ij,ij->i", D, _matvec_rows(fine_space.mass_matrix, D))
    nv2 = np.einsum("ij,ij->i", D, _matvec_rows(fine_space.stiffness_matrix, D))
    return float(
        np.sqrt(max(np.max(nh2), 0.0))
        + np.sqrt(max(np.dot(time_weights(times), nv2), 0.0))
    )


def trajectory_to_lines(traj):
    """Header lines then one "t,c_1..c_dim" row per snapshot."""
    grid = traj.space.grid
    lines = [
        f"# level = {grid.level}",
        "# x_lo = %.17g" % grid.x_lo,
        "# x_hi = %.17g" % grid.x_hi,
        "# tau = %.17g" % traj.tau,
        "# T = %.17g" % traj.T,
        f"# strategy = {traj.strategy}",
        f"# seed = {traj.seed}",
        "t," + ",".join(f"c_{i + 1}" for i in range(traj.space.dim)),
    ]
    for t, row in zip(traj.times, traj.states):
        lines.append("%.17g," % t + ",".join("%.17g" % c for c in row))
    return lines


def forcings_to_lines(traj):
    """Forcing records at quadrature resolution, one row per step."""
    grid = traj.space.grid
    lines = [
        f"# level = {grid.level}",
        "# x_lo = %.17g" % grid.x_lo,
        "# x_hi = %.17g" % grid.x_hi,
        "# tau = %.17g" % traj.tau,
        "# T = %.17g" % traj.T,
        f"# strategy = {traj.strategy}",
        f"# seed = {traj.seed}",
        "t," + ",".join(f"f_{i + 1}" for i in range(traj.space.n_quad)),
    ]
    for m in range(traj.n_steps):
        lines.append(
            "%.17g," % traj.times[m]
            + ",".join("%.17g" % f for f in traj.forcings[m])
        )
    return lines


def trajectory_from_lines(lines):
    """Rebuild a trajectory written by trajectory_to_lines.

    Forcing records are not serialized in the state file; the result
    carries an empty forcing block and supports norms and metrics.
    """
    meta = {}
    rows = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            meta[key.strip()] = val.strip()
        elif line[0].isdigit() or line[0] in "+-.":
            rows.append([float(p) for p in line.split(",")])
    space = fem.build_space(float(meta["x_lo"]), float(meta["x_hi"]),
                            int(meta["level"]))
    data = np.asarray(rows)
    times = data[:, 0]
    states = data[:, 1:]
    forcings = np.zeros((0, space.n_quad))
    traj = Trajectory.__new__(Trajectory)
    traj.space = space
    traj.times = times
    traj.states = states
    traj.forcings = forcings
    traj.strategy = meta.get("strategy", "unknown")
    traj.seed = int(meta.get("seed", 0))
    traj.tau = float(meta["tau"])
    traj.T = float(meta["T"])
    return traj
