"""Solution funnels and their quantitative diagnostics.

A funnel is a finite sample of the Galerkin solution set: one IMEX
trajectory per selection strategy, all from the same projected initial
state.  This module samples funnels with matched strategy rosters across
refinement levels, measures Hausdorff distances between them in
L2(0,T;H), evaluates the explicit constant ledger of the uniform energy
bounds, and provides the refined Gronwall calculator behind them.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import fem
from .problem import SUP_EMBEDDING_DEFAULT
from .setvalued import hausdorff_from_matrix, semidist_from_matrix
from .solver import (
    ConstantTheta,
    Extremal,
    Projection,
    RandomTheta,
    _matvec_rows,
    lift_states,
    solve,
    time_weights,
)

__all__ = [
    "gronwall_bound",
    "BoundsReport",
    "apriori_constants",
    "default_roster",
    "FunnelSample",
    "sample_funnel",
    "funnel_distance_matrix",
    "funnel_hausdorff",
    "TableRow",
    "ConvergenceTable",
    "convergence_table",
    "VerifyReport",
    "verify_apriori",
    "LEDGER_CSV_HEADER",
    "TABLE_CSV_HEADER",
    "MATRIX_CSV_HEADER",
]

LEDGER_CSV_HEADER = "name,value"
TABLE_CSV_HEADER = "levelA,levelB,semiAB,semiBA,hausdorff,n_traj,tau"
MATRIX_CSV_HEADER = "i,j,distance"

ESTIMATE_INFLATION = 1.05


# ------------------------------------------------------------- Gronwall


def _sampled(f, times):
    if callable(f):
        vals = np.asarray(f(times), dtype=np.float64)
    else:
        vals = np.asarray(f, dtype=np.float64)
    if vals.ndim == 0:
        vals = np.full(times.shape, float(vals))
    if vals.shape != times.shape:
        raise ValueError("sampled function does not match the time grid")
    return vals


def _cumtrapz(vals, times):
    out = np.zeros(times.shape[0])
    np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times), out=out[1:])
    return out


def gronwall_bound(s0, kappa, rho, times):
    """Evaluate t -> s0 e^{int kappa} + int_0^t e^{int_s^t kappa} rho(s) ds.

    kappa and rho may be scalars, arrays on the time grid, or callables;
    integrals use the trapezoid rule on the given grid.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.shape[0] < 1:
        raise ValueError("times must be a nonempty 1d grid")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("times must increase strictly")
    k = _sampled(kappa, times)
    r = _sampled(rho, times)
    if np.any(r < 0.0):
        raise ValueError("rho must be nonnegative")
    Ik = _cumtrapz(k, times)
    J = _cumtrapz(np.exp(-Ik) * r, times)
    return np.exp(Ik) * (float(s0) + J)


# -------------------------------------------------------- constant ledger


@dataclass(frozen=True)
class BoundsReport:
    """Explicit constants of the uniform energy bounds.

    The chain: K1 bounds sup_t |u|_H, K0 bounds the L2(0,T;V) norm, K0p
    bounds the dual norm of u'.  c_VH and C_P are empirical estimates
    inflated by the recorded safety factor before entering the chain.
    """

    C0: float
    ell_L1: float
    alpha_L1: float
    K1: float
    C1: float
    K0: float
    C2: float
    K0p: float
    C_ell: float
    c_a: float
    C_a: float
    c_F: float
    c_VH_hat: float
    C_P_hat: float
    c_VH: float
    C_P: float
    inflation: float
    T: float
    levels: tuple

    def ledger_rows(self):
        return [
            ("C0", self.C0),
            ("ell_L1", self.ell_L1),
            ("alpha_L1", self.alpha_L1),
            ("K1", self.K1),
            ("C1", self.C1),
            ("K0", self.K0),
            ("C2", self.C2),
            ("K0p", self.K0p),
            ("Cl", self.C_ell),
            ("c_a", self.c_a),
            ("C_a", self.C_a),
            ("c_F", self.c_F),
            ("c_VH_hat", self.c_VH_hat),
            ("C_P_hat", self.C_P_hat),
            ("c_VH", self.c_VH),
            ("C_P", self.C_P),
            ("inflation", self.inflation),
            ("T", self.T),
        ]

    def csv_lines(self):
        return [LEDGER_CSV_HEADER] + [
            "%s,%.17g" % (name, value) for name, value in self.ledger_rows()
        ]


def apriori_constants(problem, levels, C_P_hat, c_VH_hat,
                      c_inf_hat=SUP_EMBEDDING_DEFAULT, C0_override=None,
                      inflation=ESTIMATE_INFLATION):
    """Evaluate the constant chain for the given problem and levels.

    C0 is the largest projected-initial-state norm over the levels unless
    an explicit override is supplied (useful for closed-form spot checks).
    """
    levels = tuple(int(l) for l in levels)
    T = problem.T
    ell_L1 = abs(problem.ell) * T
    alpha_L1 = problem.alpha_const * T
    if C0_override is None:
        if not levels:
            raise ValueError("need at least one level to estimate C0")
        C0 = max(
            fem.norm_H(problem.initial_state(problem.space(l))) for l in levels
        )
    else:
        C0 = float(C0_override)
    c_VH = inflation * float(c_VH_hat)
    C_P = inflation * float(C_P_hat)
    c_a = 1.0
    C_a = 1.0
    c_F = max(1.0, float(c_inf_hat))
    K1 = np.exp(ell_L1) * (C0 + alpha_L1)
    C1 = 0.5 * C0**2 + K1 * (K1 * ell_L1 + alpha_L1)
    K0 = np.sqrt(C1 / c_a)
    C2 = alpha_L1 + c_F * c_VH * (np.sqrt(T) + K0) * K0
    K0p = C_a * C_P * K0 + C2
    C_ell = np.exp(max(0.0, problem.ell) * T)
    return BoundsReport(
        C0=float(C0), ell_L1=float(ell_L1), alpha_L1=float(alpha_L1),
        K1=float(K1), C1=float(C1), K0=float(K0), C2=float(C2),
        K0p=float(K0p), C_ell=float(C_ell), c_a=c_a, C_a=C_a, c_F=c_F,
        c_VH_hat=float(c_VH_hat), C_P_hat=float(C_P_hat), c_VH=float(c_VH),
        C_P=float(C_P), inflation=float(inflation), T=float(T), levels=levels,
    )


# ------------------------------------------------------------- sampling


def default_roster(seed=0, n_random=10):
    """Deterministic mix of selection strategies; 20 entries by default."""
    roster = [
        Projection("zero"),
        ConstantTheta(-1.0),
        ConstantTheta(-0.5),
        ConstantTheta(0.0),
        ConstantTheta(0.5),
        ConstantTheta(1.0),
        Extremal((1,)),
        Extremal((-1,)),
        Extremal((1, -1)),
        Extremal((-1, 1)),
    ]
    roster += [RandomTheta(seed + i) for i in range(int(n_random))]
    return tuple(roster)


@dataclass(frozen=True)
class FunnelSample:
    """Finite surrogate of the Galerkin solution set at one level."""

    level: int
    trajectories: tuple
    descriptors: tuple
    tau: float
    T: float

    @property
    def space(self):
        return self.trajectories[0].space

    def __len__(self):
        return len(self.trajectories)


def sample_funnel(problem, level, strategies, config):
    """One trajectory per strategy, all from the same projected start."""
    strategies = tuple(strategies)
    if not strategies:
        raise ValueError("strategy roster must be nonempty")
    space = problem.space(level)
    trajs = tuple(solve(problem, space, s, config) for s in strategies)
    return FunnelSample(
        level=int(level),
        trajectories=trajs,
        descriptors=tuple(s.descriptor() for s in strategies),
        tau=config.tau,
        T=config.T,
    )


# ------------------------------------------------------------- distances


def _lifted_stack(sample, fine_space, fine_times):
    return np.stack(
        [lift_states(tr, fine_space, fine_times) for tr in sample.trajectories]
    )


def funnel_distance_matrix(A, B):
    """Pairwise L2(0,T;H) distances on the common finest frame."""
    if len(A) == 0 or len(B) == 0:
        raise ValueError("cannot compare empty funnels")
    if abs(A.T - B.T) > 1e-12:
        raise ValueError("funnels must share the time horizon")
    spA, spB = A.space, B.space
    if not spA.same_interval(spB):
        raise ValueError("funnels live on different intervals")
    fine_sp = spA if spA.level >= spB.level else spB
    tA = A.trajectories[0].times
    tB = B.trajectories[0].times
    fine_t = tA if tA.shape[0] >= tB.shape[0] else tB
    XA = _lifted_stack(A, fine_sp, fine_t)
    XB = _lifted_stack(B, fine_sp, fine_t)
    tw = time_weights(fine_t)
    mm = fine_sp.mass_matrix
    nt, dim = XA.shape[1], XA.shape[2]
    D = np.empty((len(A), len(B)))
    # differences first: identical trajectories give an exact zero instead
    # of Gram-expansion cancellation noise
    for i in range(len(A)):
        E = (XA[i][None, :, :] - XB).reshape(len(B) * nt, dim)
        ME = _matvec_rows(mm, E)
        d2 = np.einsum("tj,tj->t", E, ME).reshape(len(B), nt) @ tw
        D[i] = np.sqrt(np.maximum(d2, 0.0))
    return D


def funnel_hausdorff(A, B):
    """Semi-distances and Hausdorff distance between two funnels."""
    D = funnel_distance_matrix(A, B)
    return (
        semidist_from_matrix(D),
        semidist_from_matrix(D.T),
        hausdorff_from_matrix(D),
    )


# ----------------------------------------------------- convergence table


@dataclass(frozen=True)
class TableRow:
    level_a: int
    level_b: int
    semi_ab: float
    semi_ba: float
    hausdorff: float
    n_traj: int
    tau: float

    def csv_row(self):
        return "%d,%d,%.17g,%.17g,%.17g,%d,%.17g" % (
            self.level_a, self.level_b, self.semi_ab, self.semi_ba,
            self.hausdorff, self.n_traj, self.tau,
        )


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple
    elapsed: float

    def hausdorff_column(self):
        return np.array([r.hausdorff for r in self.rows])

    def csv_lines(self):
        return [TABLE_CSV_HEADER] + [r.csv_row() for r in self.rows]


def convergence_table(problem, levels, strategies, config):
    """Hausdorff distances between funnels at consecutive levels.

    The same strategy roster (same seeds) samples every level, so the
    distances isolate the discretization effect from sampling bias.
    """
    levels = [int(l) for l in levels]
    if len(levels) < 2:
        raise ValueError("need at least two levels")
    t0 = time.perf_counter()
    funnels = {}
    for l in levels:
        if l not in funnels:
            funnels[l] = sample_funnel(problem, l, strategies, config)
    rows = []
    for a, b in zip(levels[:-1], levels[1:]):
        semi_ab, semi_ba, dist = funnel_hausdorff(funnels[a], funnels[b])
        rows.append(
            TableRow(a, b, semi_ab, semi_ba, dist, len(funnels[a]), config.tau)
        )
    return ConvergenceTable(tuple(rows), time.perf_counter() - t0)


# ----------------------------------------------------------- verification


@dataclass(frozen=True)
class VerifyReport:
    """Per-trajectory margins against the K1 and K0 bounds."""

    sup_H: np.ndarray
    l2_V: np.ndarray
    margin_H: np.ndarray
    margin_V: np.ndarray
    slack: float
    K1: float
    K0: float
    passed: bool
    failures: tuple


def verify_apriori(funnel, report, slack=0.01):
    """Check every trajectory against the ledger bounds with given slack."""
    n = len(funnel)
    sup_H = np.empty(n)
    l2_V = np.empty(n)
    for i, tr in enumerate(funnel.trajectories):
        sup_H[i] = np.max(tr.norms_H())
        tw = time_weights(tr.times)
        l2_V[i] = np.sqrt(np.dot(tw, tr.norms_V() ** 2))
    margin_H = (1.0 + slack) * report.K1 - sup_H
    margin_V = (1.0 + slack) * report.K0 - l2_V
    bad = np.flatnonzero((margin_H < 0.0) | (margin_V < 0.0))
    failures = tuple(funnel.descriptors[i] for i in bad)
    return VerifyReport(
        sup_H=sup_H, l2_V=l2_V, margin_H=margin_H, margin_V=margin_V,
        slack=float(slack), K1=report.K1, K0=report.K0,
        passed=bad.size == 0, failures=failures,
    )
