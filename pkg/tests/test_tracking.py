import numpy as np
import pytest

from inclusionlab import fem, problem, solver, tracking

from conftest import dense_solve, hat_products_gauss, smallest_eigenpair


@pytest.fixture(scope="module")
def default_problem():
    return problem.default_problem()


@pytest.fixture(scope="module")
def short_reference(default_problem):
    cfg = solver.SolverConfig(tau=2e-3, T=0.5)
    return solver.solve(
        default_problem, default_problem.space(4), solver.Projection(), cfg
    )


@pytest.fixture(scope="module")
def fine_reference(default_problem):
    cfg = solver.SolverConfig(tau=2e-3, T=0.5)
    return solver.solve(
        default_problem, default_problem.space(7), solver.Projection(), cfg
    )


# ---------------------------------------------------------------- operator


def test_apply_AN_matches_dense_oracle(unit_spaces):
    sp = unit_spaces[4]
    M, K = hat_products_gauss(4)
    rng = np.random.default_rng(11)
    c = rng.standard_normal(sp.dim)
    got = tracking.apply_AN(sp, fem.NodalFunction(sp, c)).coeffs
    want = dense_solve(M, K @ c)
    np.testing.assert_allclose(got, want, rtol=1e-11, atol=1e-11)


def test_apply_AN_reproduces_smallest_eigenpair(unit_spaces):
    sp = unit_spaces[5]
    M, K = hat_products_gauss(5)
    lam, v = smallest_eigenpair(K, M)
    av = tracking.apply_AN(sp, v).coeffs
    np.testing.assert_allclose(av, lam * v, rtol=1e-8, atol=1e-10)


def test_apply_AN_discrete_sine_mode(unit_spaces):
    # sin(pi x) sampled at the nodes is an exact discrete eigenvector and
    # the Rayleigh quotient has the closed form 6/h^2 (1-cos)/(2+cos)
    sp = unit_spaces[6]
    h = sp.grid.h_mesh
    x = sp.grid.nodes[1:-1]
    c = np.sin(np.pi * x)
    av = tracking.apply_AN(sp, c).coeffs
    lam = 6.0 / h**2 * (1.0 - np.cos(np.pi * h)) / (2.0 + np.cos(np.pi * h))
    np.testing.assert_allclose(av, lam * c, rtol=1e-9, atol=1e-12)


def test_apply_AN_accepts_arrays_and_nodal(unit_spaces):
    sp = unit_spaces[3]
    c = np.linspace(0.1, 0.7, sp.dim)
    a1 = tracking.apply_AN(sp, c).coeffs
    a2 = tracking.apply_AN(sp, fem.NodalFunction(sp, c)).coeffs
    np.testing.assert_array_equal(a1, a2)


# ------------------------------------------------------------------ defect


def test_defect_report_fields(short_reference, default_problem):
    rep = tracking.defect(short_reference, default_problem)
    assert rep.delta.shape == (short_reference.n_steps,)
    np.testing.assert_array_equal(rep.times, short_reference.times[:-1])
    assert rep.delta_max == np.max(rep.delta)
    np.testing.assert_allclose(
        rep.delta_L1,
        np.trapezoid(rep.delta, dx=short_reference.tau),
        rtol=1e-14,
    )
    assert np.all(rep.delta >= 0.0)


def test_defect_zero_for_stationary_state_in_wide_tube(default_problem):
    # constant-in-time reference: residual is A_N v only, far inside a
    # huge tube, so every step distance vanishes exactly
    prob = problem.default_problem(h_const=100.0)
    sp = prob.space(4)
    c = prob.initial_state(sp).coeffs
    times = 1e-2 * np.arange(11)
    states = np.tile(c, (11, 1))
    forcings = np.zeros((10, sp.n_quad))
    ref = solver.Trajectory(sp, times, states, forcings, "frozen", 0, 1e-2, 0.1)
    rep = tracking.defect(ref, prob)
    assert rep.delta_max == 0.0
    assert rep.delta_L1 == 0.0


def test_defect_scales_linearly_in_tau_for_wide_tube():
    # radius 0.5 dominates |g| <= 1/4, so zero forcing is admissible and
    # the only defect is the O(tau) consistency term
    prob = problem.default_problem(h_const=0.5, T=0.4)
    sp = prob.space(5)
    vals = []
    for tau in (4e-3, 2e-3, 1e-3):
        ref = solver.solve(
            prob, sp, solver.Projection(), solver.SolverConfig(tau=tau, T=0.4)
        )
        vals.append(tracking.defect(ref, prob).delta_L1)
    assert 0.40 <= vals[1] / vals[0] <= 0.62
    assert 0.40 <= vals[2] / vals[1] <= 0.62


def test_defect_stable_under_reference_refinement(default_problem):
    # restricting ever finer runs to a fixed coarse space leaves the
    # defect essentially unchanged: it is dominated by the time term
    cfg = solver.SolverConfig(tau=2e-3, T=0.5)
    sp4 = default_problem.space(4)
    vals = []
    for flvl in (5, 6, 7):
        reff = solver.solve(
            default_problem, default_problem.space(flvl), solver.Projection(), cfg
        )
        lt = tracking.linear_track(reff, sp4, default_problem)
        vals.append(tracking.defect(lt, default_problem).delta_L1)
    vals = np.asarray(vals)
    assert np.max(np.abs(vals - vals[0])) <= 5e-3 * vals[0]


# ------------------------------------------------------------------- track


def test_track_rejects_mismatched_grid(short_reference, default_problem):
    bad = solver.SolverConfig(tau=1e-3, T=0.5)
    with pytest.raises(ValueError):
        tracking.track(short_reference, default_problem, config=bad)


def test_constant_amplification_closed_form():
    assert tracking.constant_ell_amplification(1.0, 1.0) == pytest.approx(np.e)
    assert tracking.constant_ell_amplification(2.0, 0.5) == pytest.approx(np.e)
    assert tracking.constant_ell_amplification(-3.0, 2.0) == 1.0
    assert tracking.constant_ell_amplification(0.0, 5.0) == 1.0


def test_track_produces_feasible_trajectory(short_reference, default_problem):
    tracked, cert = tracking.track(short_reference, default_problem)
    sp = tracked.space
    radius = default_problem.radius_values(sp)
    g = default_problem.nonlinearity.g
    worst = 0.0
    for m in range(tracked.n_steps):
        center = g(fem.quad_values(tracked.state(m)))
        worst = max(worst, float(np.max(np.abs(tracked.forcings[m] - center) - radius)))
    assert worst <= 1e-9
    rep = solver.energy_check(tracked, default_problem)
    assert rep.passed


def test_track_certificate_sound(fine_reference, default_problem):
    sp4 = default_problem.space(4)
    lt = tracking.linear_track(fine_reference, sp4, default_problem)
    tracked, cert = tracking.track(lt, default_problem)
    assert cert.sup_viol == 0.0
    assert cert.energy_viol == 0.0
    assert cert.sup_lhs <= cert.sup_rhs
    assert cert.energy_lhs <= cert.energy_rhs
    assert cert.sup_pass and cert.energy_pass
    assert cert.C_ell == pytest.approx(np.exp(default_problem.ell * lt.T))
    assert cert.init_gap == 0.0
    assert cert.tau == lt.tau and cert.level == 4


def test_track_slack_halves_with_tau(default_problem):
    fine = default_problem.space(6)
    sp = default_problem.space(4)
    certs = {}
    for tau in (4e-3, 2e-3, 1e-3):
        cfg = solver.SolverConfig(tau=tau, T=0.5)
        reff = solver.solve(default_problem, fine, solver.Projection(), cfg)
        lt = tracking.linear_track(reff, sp, default_problem)
        certs[tau] = tracking.track(lt, default_problem)[1]
    for tau in certs:
        assert certs[tau].sup_viol <= certs[tau].sup_slack
    assert 0.4 <= certs[2e-3].sup_slack / certs[4e-3].sup_slack <= 0.6
    assert 0.4 <= certs[1e-3].sup_slack / certs[2e-3].sup_slack <= 0.6
    assert certs[1e-3].sup_viol <= certs[2e-3].sup_viol <= certs[4e-3].sup_viol


def test_track_refined_selection(fine_reference, default_problem):
    sp4 = default_problem.space(4)
    lt = tracking.linear_track(fine_reference, sp4, default_problem)
    plain, cp = tracking.track(lt, default_problem)
    refined, cr = tracking.track(lt, default_problem, refine=True)
    assert cr.sup_viol == 0.0 and cr.energy_viol == 0.0
    # the half-space refinement picks the closest admissible forcing, so
    # it should not degrade the tracking error noticeably
    assert cr.sup_lhs <= 1.1 * cp.sup_lhs
    rep = solver.energy_check(refined, default_problem)
    assert rep.passed


def test_track_with_perturbed_start(short_reference, default_problem):
    sp = short_reference.space
    bump = fem.l2_project(sp, lambda x: 0.01 * np.sin(np.pi * x)).coeffs
    u0 = short_reference.states[0] + bump
    tracked, cert = tracking.track(short_reference, default_problem, u0=u0)
    gap = fem.norm_H(fem.NodalFunction(sp, bump))
    assert cert.init_gap == pytest.approx(gap, rel=1e-12)
    assert cert.sup_rhs == pytest.approx(
        cert.C_ell * (cert.init_gap + cert.delta_L1), rel=1e-12
    )
    assert cert.sup_viol == 0.0
    assert cert.energy_viol == 0.0


def test_certificate_csv_row(short_reference, default_problem):
    _, cert = tracking.track(short_reference, default_problem)
    assert tracking.CERT_CSV_HEADER.count(",") == 9
    row = cert.csv_row()
    vals = [float(tok) for tok in row.split(",")]
    assert len(vals) == 10
    assert vals[0] == cert.tau
    assert vals[1] == cert.level
    assert vals[2] == cert.C_ell
    assert vals[3] == cert.delta_L1
    assert vals[8] == cert.sup_viol and vals[9] == cert.energy_viol


# ------------------------------------------------------------ linear_track


def test_linear_track_same_space_reproduces(short_reference, default_problem):
    lt = tracking.linear_track(
        short_reference, short_reference.space, default_problem
    )
    np.testing.assert_allclose(
        lt.states, short_reference.states, rtol=0.0, atol=1e-12
    )


def test_linear_track_zero_forcing_matches_coarse_heat():
    zero = problem.custom_nonlinearity(lambda eta: 0.0 * eta, 0.0, "zero")
    prob = problem.default_problem(
        h_const=0.0, nonlinearity=zero, ell=0.0, T=0.25
    )
    cfg = solver.SolverConfig(tau=1e-3, T=0.25)
    fine = solver.solve(prob, prob.space(6), solver.Projection(), cfg)
    coarse = prob.space(4)
    lt = tracking.linear_track(fine, coarse, prob)
    direct = solver.solve(prob, coarse, solver.Projection(), cfg)
    np.testing.assert_allclose(lt.states, direct.states, rtol=0.0, atol=1e-12)


def test_linear_track_forcing_record_matches_restricted_load(
    fine_reference, default_problem
):
    sp4 = default_problem.space(4)
    lt = tracking.linear_track(fine_reference, sp4, default_problem)
    for m in (0, lt.n_steps // 2, lt.n_steps - 1):
        want = fem.restrict_load(
            fem.load_vector(fine_reference.space, fine_reference.forcings[m]),
            fine_reference.space,
            sp4,
        )
        got = fem.load_vector(sp4, lt.forcings[m])
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)


def test_linear_track_validation(short_reference, default_problem):
    with pytest.raises(ValueError):
        tracking.linear_track(
            short_reference, default_problem.space(6), default_problem
        )
    other = fem.build_space(0.0, 2.0, 3)
    with pytest.raises(ValueError):
        tracking.linear_track(short_reference, other, default_problem)


def test_linear_track_requires_forcing_records(short_reference, default_problem):
    lines = solver.trajectory_to_lines(short_reference)
    bare = solver.trajectory_from_lines(lines)
    with pytest.raises(ValueError):
        tracking.linear_track(bare, short_reference.space, default_problem)


def test_tracked_error_decreases_with_level(fine_reference, default_problem):
    errs = []
    for lvl in (3, 4, 5):
        sp = default_problem.space(lvl)
        lt = tracking.linear_track(fine_reference, sp, default_problem)
        tracked, cert = tracking.track(lt, default_problem)
        assert cert.sup_viol == 0.0
        errs.append(solver.wplus_star_distance(tracked, fine_reference))
    assert errs[0] > errs[1] > errs[2]
