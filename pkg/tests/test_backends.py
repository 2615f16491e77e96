"""Bitwise agreement between the compiled and pure-python kernels."""

import numpy as np
import pytest

from inclusionlab import backends, fem, problem, solver
from inclusionlab.fem import GAUSS_S, GAUSS_W

needs_compiled = pytest.mark.skipif(
    "compiled" not in backends.available(),
    reason="compiled backend not built",
)

pytestmark = needs_compiled


@pytest.fixture(scope="module")
def kernels():
    return backends.get("python"), backends.get("compiled")


def tridiag_data(n, seed):
    rng = np.random.default_rng(seed)
    dia = 2.0 + rng.uniform(0.5, 1.5, n)
    sub = rng.uniform(-0.5, 0.5, n - 1)
    sup = rng.uniform(-0.5, 0.5, n - 1)
    return sub, dia, sup


@pytest.mark.parametrize("n", [1, 2, 3, 17, 127])
def test_thomas_bitwise(kernels, n):
    py, co = kernels
    sub, dia, sup = tridiag_data(n, n)
    b = np.random.default_rng(n + 1).standard_normal(n)
    low_p, dia_p = py.thomas_factor(sub, dia, sup)
    low_c, dia_c = co.thomas_factor(sub, dia, sup)
    np.testing.assert_array_equal(low_p, low_c)
    np.testing.assert_array_equal(dia_p, dia_c)
    xp = py.thomas_solve(low_p, dia_p, sup, b)
    xc = co.thomas_solve(low_c, dia_c, sup, b)
    np.testing.assert_array_equal(xp, xc)
    np.testing.assert_array_equal(
        py.solve_tridiagonal(sub, dia, sup, b),
        co.solve_tridiagonal(sub, dia, sup, b),
    )


@pytest.mark.parametrize("n", [1, 2, 63, 255])
def test_matvec_bitwise(kernels, n):
    py, co = kernels
    sub, dia, sup = tridiag_data(n, 10 * n)
    x = np.random.default_rng(n).standard_normal(n)
    np.testing.assert_array_equal(
        py.tridiag_matvec(sub, dia, sup, x),
        co.tridiag_matvec(sub, dia, sup, x),
    )


def test_singular_error_shared_class(kernels):
    py, co = kernels
    assert py.SingularMatrixError is co.SingularMatrixError
    sub, dia, sup = tridiag_data(5, 0)
    dia[2] = 0.0
    dia[0] = 0.0
    with pytest.raises(fem.SingularMatrixError):
        co.thomas_factor(sub, dia, sup)


@pytest.mark.parametrize("level", [1, 3, 6])
def test_eval_pw_and_cell_load_bitwise(kernels, level):
    py, co = kernels
    sp = fem.build_space(0.0, 1.0, level)
    rng = np.random.default_rng(level)
    full = np.concatenate(([0.0], rng.standard_normal(sp.dim), [0.0]))
    np.testing.assert_array_equal(
        py.eval_pw(full, sp._left_idx, sp._s_rep),
        co.eval_pw(full, sp._left_idx, sp._s_rep),
    )
    fw = sp.quad_w * rng.standard_normal(sp.n_quad)
    np.testing.assert_array_equal(
        py.cell_load(fw, GAUSS_S, sp.grid.n_cells),
        co.cell_load(fw, GAUSS_S, sp.grid.n_cells),
    )


def test_clip_bitwise(kernels):
    py, co = kernels
    rng = np.random.default_rng(5)
    x = rng.standard_normal(400)
    lo = x - rng.uniform(0.0, 1.0, 400)
    hi = lo + rng.uniform(0.0, 2.0, 400)
    np.testing.assert_array_equal(py.clip(x, lo, hi), co.clip(x, lo, hi))


def test_imex_step_bitwise(kernels):
    py, co = kernels
    sp = fem.build_space(0.0, 1.0, 5)
    tau = 1e-3
    mm = sp.mass_matrix
    fac = mm.add_scaled(sp.stiffness_matrix, tau).factor()
    rng = np.random.default_rng(9)
    c = rng.standard_normal(sp.dim)
    fw = sp.quad_w * rng.standard_normal(sp.n_quad)
    out_p = py.imex_step(
        mm.sub, mm.diag, mm.sup, fac.low, fac.dia, fac.sup, c, fw, GAUSS_S, tau
    )
    out_c = co.imex_step(
        mm.sub, mm.diag, mm.sup, fac.low, fac.dia, fac.sup, c, fw, GAUSS_S, tau
    )
    np.testing.assert_array_equal(out_p, out_c)


def test_full_solve_bitwise_across_backends():
    prob = problem.default_problem()
    cfg = solver.SolverConfig(tau=5e-3, T=0.25)
    states = {}
    prev = backends.name()
    try:
        for name in ("python", "compiled"):
            backends.use(name)
            traj = solver.solve(
                prob, prob.space(4), solver.RandomTheta(3), cfg
            )
            states[name] = traj.states
    finally:
        backends.use(prev)
    np.testing.assert_array_equal(states["python"], states["compiled"])


def test_gauss_weights_shared():
    # both backends integrate with the same lattice constants
    assert GAUSS_S.shape == (5,) and GAUSS_W.shape == (5,)
    assert float(np.sum(GAUSS_W)) == pytest.approx(1.0, abs=1e-15)
