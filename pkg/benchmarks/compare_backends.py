"""Timing comparison of the pure-python and compiled stepping kernels.

Benchmarks the individual kernels on a fine lattice and one representative
funnel solve, for every importable backend.  Results are per-call times;
both backends produce bit-identical numbers, so only speed differs.

Usage:
    python benchmarks/compare_backends.py [--level 9] [--tau 1e-3] [--repeat 5]
"""

import argparse
import time

import numpy as np

from inclusionlab import backends, fem, problem, solver


def best_of(fn, repeat, number):
    """Best per-call time over `repeat` batches of `number` calls."""
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def kernel_cases(mod, level):
    sp = fem.build_space(0.0, 1.0, level)
    rng = np.random.default_rng(0)
    n = sp.dim
    M, K = sp.mass_matrix, sp.stiffness_matrix
    tau = 1e-3
    ssub = M.sub + tau * K.sub
    sdia = M.diag + tau * K.diag
    ssup = M.sup + tau * K.sup
    low, dia = mod.thomas_factor(ssub, sdia, ssup)
    b = rng.normal(size=n)
    c = rng.normal(size=n)
    full = np.zeros(n + 2)
    full[1:-1] = c
    fw = sp.quad_w * rng.normal(size=sp.n_quad)
    s5 = fem.GAUSS_S
    return [
        ("thomas_factor  (n=%d)" % n,
         lambda: mod.thomas_factor(ssub, sdia, ssup)),
        ("thomas_solve   (n=%d)" % n,
         lambda: mod.thomas_solve(low, dia, ssup, b)),
        ("tridiag_matvec (n=%d)" % n,
         lambda: mod.tridiag_matvec(M.sub, M.diag, M.sup, c)),
        ("eval_pw        (q=%d)" % sp.n_quad,
         lambda: mod.eval_pw(full, sp._left_idx, sp._s_rep)),
        ("cell_load      (q=%d)" % sp.n_quad,
         lambda: mod.cell_load(fw, s5, sp.grid.n_cells)),
        ("imex_step      (n=%d)" % n,
         lambda: mod.imex_step(M.sub, M.diag, M.sup, low, dia, ssup,
                               c, fw, s5, tau)),
    ]


def bench_kernels(names, level, repeat, number):
    rows = []
    case_lists = {nm: kernel_cases(backends.get(nm), level) for nm in names}
    n_cases = len(case_lists[names[0]])
    for i in range(n_cases):
        label = case_lists[names[0]][i][0]
        times = [best_of(case_lists[nm][i][1], repeat, number)
                 for nm in names]
        rows.append((label, times))
    return rows


def bench_solve(names, prob, level, tau, repeat):
    sp = prob.space(level)
    cfg = solver.SolverConfig(tau=tau, T=prob.T)
    strat = solver.RandomTheta(3)
    rows = []
    times = []
    states = []
    for nm in names:
        prev = backends.use(nm)
        try:
            times.append(best_of(
                lambda: states.append(
                    solver.solve(prob, sp, strat, cfg).states),
                repeat, 1))
        finally:
            backends.use(prev)
    rows.append(("solve level %d (tau=%g)" % (level, tau), times))
    identical = all(np.array_equal(states[0], s) for s in states[1:])
    return rows, identical


def print_table(rows, names):
    width = max(len(r[0]) for r in rows) + 2
    header = "kernel".ljust(width) + "".join("%14s" % nm for nm in names)
    if len(names) == 2:
        header += "%10s" % "speedup"
    print(header)
    print("-" * len(header))
    for label, times in rows:
        line = label.ljust(width)
        line += "".join("%12.1f us" % (t * 1e6) for t in times)
        if len(names) == 2:
            line += "%9.2fx" % (times[0] / times[1])
        print(line)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=9,
                    help="lattice refinement level for the kernel benchmarks")
    ap.add_argument("--solve-level", type=int, default=7,
                    help="refinement level for the full-solve benchmark")
    ap.add_argument("--tau", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50,
                    help="kernel calls per timed batch")
    args = ap.parse_args(argv)

    names = backends.available()
    if "compiled" not in names:
        print("note: compiled backend not importable; timing python only")
    else:
        names = ["python", "compiled"]  # speedup column reads python/compiled
    print("backends: %s   (active: %s)" % (", ".join(names),
                                           backends.name()))
    print()

    rows = bench_kernels(names, args.level, args.repeat, args.number)
    print_table(rows, names)
    print()

    prob = problem.default_problem()
    rows, identical = bench_solve(names, prob, args.solve_level, args.tau,
                                  args.repeat)
    print_table(rows, names)
    print()
    print("solve outputs bit-identical across backends: %s"
          % ("yes" if identical else "NO"))


if __name__ == "__main__":
    main()
