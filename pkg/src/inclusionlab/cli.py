"""Configuration-driven experiment runner.

Commands operate on a flat "key = value" config file with bracketed
section headers and write plot-ready CSV artifacts plus a manifest:

    solve   one trajectory file per roster strategy (first level)
    funnel  trajectory files plus the pairwise distance matrix
    track   defect certificates for tracked references per level
    verify  sampled validator table for the structural assumptions
    table   Hausdorff convergence table across consecutive levels
    bounds  explicit constant ledger (with estimated embedding data)

Exit codes: 0 success, 1 configuration or check failure, 2 numeric
failure inside a run.  All floats are printed with 17 significant
digits and files are written atomically.
"""

import argparse
import datetime
import os
import re
import sys
import tempfile

import numpy as np

from . import __version__, backends, fem, funnel, problem, solver, tracking

__all__ = ["main", "parse_config", "ConfigError", "RunConfig",
           "strategy_from_descriptor", "split_roster"]

COMMANDS = ("solve", "funnel", "track", "verify", "table", "bounds")

DIST_CSV_HEADER = funnel.MATRIX_CSV_HEADER


class ConfigError(ValueError):
    """Raised for unparseable or invalid configuration input."""


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    return [int(tok) for tok in text.split(",") if tok.strip()]


# (section, key) -> (converter, default)
_SCHEMA = {
    ("problem", "x_lo"): (float, 0.0),
    ("problem", "x_hi"): (float, 1.0),
    ("problem", "T"): (float, 1.0),
    ("problem", "nonlinearity"): (str, "soft_cubic"),
    ("problem", "eps"): (float, None),
    ("problem", "h_const"): (float, None),
    ("problem", "h_file"): (str, None),
    ("problem", "u0"): (str, "bump"),
    ("problem", "u0_file"): (str, None),
    ("problem", "ell"): (float, 1.0),
    ("discretization", "tau"): (float, 1e-3),
    ("discretization", "levels"): (_int_list, [3, 4, 5, 6, 7]),
    ("strategies", "roster"): (str, "default"),
    ("strategies", "seed"): (int, 0),
    ("strategies", "n_random"): (int, 10),
    ("track", "fine_level"): (int, 9),
    ("track", "refine"): (_bool, False),
    ("track", "fine_strategy"): (str, "projection(zero)"),
    ("verify", "n_samples"): (int, 10_000),
    ("verify", "seed"): (int, 0),
    ("verify", "level"): (int, 5),
    ("verify", "amp"): (float, 1.5),
    ("bounds", "C0_override"): (float, None),
    ("bounds", "c_VH_hat"): (float, None),
    ("bounds", "C_P_hat"): (float, None),
    ("bounds", "c_inf_hat"): (float, None),
    ("bounds", "n_samples"): (int, 200),
    ("bounds", "seed"): (int, 0),
    ("bounds", "inflation"): (float, funnel.ESTIMATE_INFLATION),
    ("output", "dir"): (str, "out"),
}


def parse_config(text):
    """Parse flat key = value text with [section] headers.

    Returns {(section, key): converted value}; unknown sections or keys
    and malformed lines raise ConfigError with the offending line number.
    """
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not any(s == section for s, _ in _SCHEMA):
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if (section, key) not in _SCHEMA:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r} in section [{section}]"
            )
        conv = _SCHEMA[(section, key)][0]
        try:
            values[(section, key)] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
    return values


def split_roster(text):
    """Split a roster list on top-level commas (parentheses nest)."""
    parts = []
    depth = 0
    cur = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError("unbalanced parentheses in roster")
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ConfigError("unbalanced parentheses in roster")
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return [p for p in parts if p]


def strategy_from_descriptor(text):
    """Rebuild a selection strategy from its descriptor string."""
    s = text.strip()
    m = re.fullmatch(r"projection\((zero|center)\)", s)
    if m:
        return solver.Projection(m.group(1))
    m = re.fullmatch(r"constant_theta\(([^)]+)\)", s)
    if m:
        try:
            return solver.ConstantTheta(float(m.group(1)))
        except ValueError as exc:
            raise ConfigError(f"bad strategy {text!r}: {exc}")
    m = re.fullmatch(r"extremal\(([+-]+)\)", s)
    if m:
        return solver.Extremal(tuple(1 if c == "+" else -1 for c in m.group(1)))
    m = re.fullmatch(
        r"random_theta\(seed=(\d+)"
        r"(?:,n_switches=(\d+))?(?:,n_ref_cells=(\d+))?\)",
        s,
    )
    if m:
        seed = int(m.group(1))
        n_switches = int(m.group(2)) if m.group(2) else 8
        n_ref_cells = int(m.group(3)) if m.group(3) else 16
        return solver.RandomTheta(seed, n_switches, n_ref_cells)
    raise ConfigError(f"unknown strategy descriptor {text!r}")


class RunConfig:
    """Validated run parameters resolved from a config file."""

    def __init__(self, values, command, outdir_flag=None, seed_override=None,
                 threads=1):
        get = lambda sec, key: values.get((sec, key), _SCHEMA[(sec, key)][1])
        self.command = command
        self.x_lo = get("problem", "x_lo")
        self.x_hi = get("problem", "x_hi")
        self.T = get("problem", "T")
        self.nonlinearity_tag = get("problem", "nonlinearity")
        self.eps = get("problem", "eps")
        self.h_const = get("problem", "h_const")
        self.h_file = get("problem", "h_file")
        self.u0 = get("problem", "u0")
        self.u0_file = get("problem", "u0_file")
        self.ell = get("problem", "ell")
        self.tau = get("discretization", "tau")
        self.levels = list(get("discretization", "levels"))
        self.roster_spec = get("strategies", "roster")
        self.seed = get("strategies", "seed")
        self.n_random = get("strategies", "n_random")
        self.fine_level = get("track", "fine_level")
        self.refine = get("track", "refine")
        self.fine_strategy = get("track", "fine_strategy")
        self.verify_n_samples = get("verify", "n_samples")
        self.verify_seed = get("verify", "seed")
        self.verify_level = get("verify", "level")
        self.verify_amp = get("verify", "amp")
        self.C0_override = get("bounds", "C0_override")
        self.c_VH_hat = get("bounds", "c_VH_hat")
        self.C_P_hat = get("bounds", "C_P_hat")
        self.c_inf_hat = get("bounds", "c_inf_hat")
        self.bounds_n_samples = get("bounds", "n_samples")
        self.bounds_seed = get("bounds", "seed")
        self.inflation = get("bounds", "inflation")
        self.outdir = outdir_flag or get("output", "dir")
        self.seed_override = seed_override
        self.threads = threads
        if seed_override is not None:
            self.seed = seed_override
            self.verify_seed = seed_override
            self.bounds_seed = seed_override
        self._validate()

    def _validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.x_lo < self.x_hi:
            raise ConfigError("need x_lo < x_hi")
        if self.T <= 0 or self.tau <= 0:
            raise ConfigError("need T > 0 and tau > 0")
        if not self.levels or any(l < 1 for l in self.levels):
            raise ConfigError("levels must be a nonempty list of integers >= 1")
        if self.nonlinearity_tag not in ("soft_cubic", "eps_power"):
            raise ConfigError(
                f"unknown nonlinearity {self.nonlinearity_tag!r}"
            )
        if self.nonlinearity_tag == "eps_power":
            if self.eps is None or not 0.0 < self.eps <= 1.0:
                raise ConfigError("eps_power requires eps in (0, 1]")
        elif self.eps is not None:
            raise ConfigError("eps is only meaningful with eps_power")
        if self.h_const is not None and self.h_file is not None:
            raise ConfigError("give h_const or h_file, not both")
        if self.h_const is not None and self.h_const < 0:
            raise ConfigError("h_const must be nonnegative")
        if self.u0 not in ("bump", "sine", "file"):
            raise ConfigError(f"unknown u0 preset {self.u0!r}")
        if self.u0 == "file" and not self.u0_file:
            raise ConfigError("u0 = file requires u0_file")
        if self.u0 != "file" and self.u0_file:
            raise ConfigError("u0_file requires u0 = file")
        if self.fine_level < max(self.levels):
            raise ConfigError("track fine_level must dominate all levels")

    # ---------------------------------------------------- object factories

    def make_problem(self):
        if self.nonlinearity_tag == "eps_power":
            nonlin = problem.eps_power(self.eps)
        else:
            nonlin = problem.soft_cubic()
        if self.h_file is not None:
            nf = _read_nodal(self.h_file)
            radius_fn = lambda x: fem.eval_nodal(nf, x)
        else:
            radius_fn = problem.constant_radius(
                0.1 if self.h_const is None else self.h_const
            )
        if self.u0 == "file":
            nf0 = _read_nodal(self.u0_file)
            u0_fn = lambda x: fem.eval_nodal(nf0, x)
        else:
            width = self.x_hi - self.x_lo
            base = problem.bump if self.u0 == "bump" else problem.sine_mode
            u0_fn = lambda x: base((np.asarray(x) - self.x_lo) / width)
        return problem.InclusionProblem(
            self.x_lo, self.x_hi, nonlin, radius_fn, u0_fn, self.T, self.ell
        )

    def make_roster(self):
        if self.roster_spec.strip() == "default":
            return funnel.default_roster(self.seed, self.n_random)
        return tuple(
            strategy_from_descriptor(tok)
            for tok in split_roster(self.roster_spec)
        )

    def solver_config(self):
        return solver.SolverConfig(tau=self.tau, T=self.T)

    def echo_lines(self):
        pairs = [
            ("problem.x_lo", "%.17g" % self.x_lo),
            ("problem.x_hi", "%.17g" % self.x_hi),
            ("problem.T", "%.17g" % self.T),
            ("problem.nonlinearity", self.nonlinearity_tag),
            ("problem.eps", "none" if self.eps is None else "%.17g" % self.eps),
            ("problem.h_const",
             "none" if self.h_const is None else "%.17g" % self.h_const),
            ("problem.h_file", self.h_file or "none"),
            ("problem.u0", self.u0),
            ("problem.u0_file", self.u0_file or "none"),
            ("problem.ell", "%.17g" % self.ell),
            ("discretization.tau", "%.17g" % self.tau),
            ("discretization.levels", ",".join(str(l) for l in self.levels)),
            ("strategies.roster", self.roster_spec),
            ("strategies.seed", str(self.seed)),
            ("strategies.n_random", str(self.n_random)),
            ("track.fine_level", str(self.fine_level)),
            ("track.refine", str(self.refine).lower()),
            ("track.fine_strategy", self.fine_strategy),
            ("verify.n_samples", str(self.verify_n_samples)),
            ("verify.seed", str(self.verify_seed)),
            ("verify.level", str(self.verify_level)),
            ("verify.amp", "%.17g" % self.verify_amp),
            ("bounds.C0_override",
             "none" if self.C0_override is None else "%.17g" % self.C0_override),
            ("bounds.c_VH_hat",
             "none" if self.c_VH_hat is None else "%.17g" % self.c_VH_hat),
            ("bounds.C_P_hat",
             "none" if self.C_P_hat is None else "%.17g" % self.C_P_hat),
            ("bounds.c_inf_hat",
             "none" if self.c_inf_hat is None else "%.17g" % self.c_inf_hat),
            ("bounds.n_samples", str(self.bounds_n_samples)),
            ("bounds.seed", str(self.bounds_seed)),
            ("bounds.inflation", "%.17g" % self.inflation),
            ("output.dir", self.outdir),
        ]
        return ["%s = %s" % kv for kv in pairs]


def _read_nodal(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read nodal file {path!r}: {exc}")
    if not lines:
        raise ConfigError(f"nodal file {path!r} is empty")
    return fem.from_csv_line(lines[-1])


def _atomic_write(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_lines(path, lines):
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_manifest(rc, outdir, files, extra=None):
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%S.%fZ"
    )
    lines = [
        "manifest",
        "timestamp = " + stamp,
        "command = " + rc.command,
        "package = inclusionlab " + __version__,
        "python = %d.%d.%d" % sys.version_info[:3],
        "numpy = " + np.__version__,
        "backend = " + backends.name(),
        "threads = %d" % rc.threads,
        "seed_override = "
        + ("none" if rc.seed_override is None else str(rc.seed_override)),
    ]
    lines += rc.echo_lines()
    if extra:
        lines += extra
    lines.append("files = " + ",".join(sorted(files)))
    _write_lines(os.path.join(outdir, "manifest.txt"), lines)


# ------------------------------------------------------------- commands


def _traj_filename(prefix, level, index):
    return "%s_L%d_%02d.csv" % (prefix, level, index)


def cmd_solve(rc, outdir):
    prob = rc.make_problem()
    roster = rc.make_roster()
    cfg = rc.solver_config()
    level = rc.levels[0]
    space = prob.space(level)
    files = []
    for i, strat in enumerate(roster):
        traj = solver.solve(prob, space, strat, cfg)
        name = _traj_filename("traj", level, i)
        _write_lines(os.path.join(outdir, name),
                     solver.trajectory_to_lines(traj))
        files.append(name)
    return files, []


def cmd_funnel(rc, outdir):
    prob = rc.make_problem()
    roster = rc.make_roster()
    cfg = rc.solver_config()
    level = rc.levels[0]
    sample = funnel.sample_funnel(prob, level, roster, cfg)
    files = []
    for i, traj in enumerate(sample.trajectories):
        name = _traj_filename("funnel", level, i)
        _write_lines(os.path.join(outdir, name),
                     solver.trajectory_to_lines(traj))
        files.append(name)
    D = funnel.funnel_distance_matrix(sample, sample)
    lines = [DIST_CSV_HEADER]
    for i in range(D.shape[0]):
        for j in range(D.shape[1]):
            lines.append("%d,%d,%.17g" % (i, j, D[i, j]))
    _write_lines(os.path.join(outdir, "distances.csv"), lines)
    files.append("distances.csv")
    return files, []


def cmd_track(rc, outdir):
    prob = rc.make_problem()
    cfg = rc.solver_config()
    fine = solver.solve(
        prob,
        prob.space(rc.fine_level),
        strategy_from_descriptor(rc.fine_strategy),
        cfg,
    )
    lines = [tracking.CERT_CSV_HEADER]
    extra = []
    for level in rc.levels:
        ref = tracking.linear_track(fine, prob.space(level), prob)
        _, cert = tracking.track(ref, prob, refine=rc.refine)
        lines.append(cert.csv_row())
        extra.append(
            "certificate level %d: sup %s, energy %s"
            % (
                level,
                "pass" if cert.sup_pass else "FAIL",
                "pass" if cert.energy_pass else "FAIL",
            )
        )
    _write_lines(os.path.join(outdir, "certificates.csv"), lines)
    return ["certificates.csv"], extra


def cmd_verify(rc, outdir):
    prob = rc.make_problem()
    n = rc.verify_n_samples
    seed = rc.verify_seed
    level = rc.verify_level
    amp = rc.verify_amp
    eps = rc.eps if rc.eps is not None else 1.0
    lin_spec = problem.linear_growth_spec()
    hoe_spec = problem.hoelder_growth_spec(eps)
    space = prob.space(level)
    c_lo, c_hi = problem.check_form_constants(
        space, n_samples=min(n, 500), seed=seed
    )
    form_ratio = max(c_hi, 1.0 / c_lo)
    form_report = problem.CheckReport(
        check="form_constants",
        samples=min(n, 500),
        worst_ratio=form_ratio,
        witness_seed=seed,
        passed=abs(c_lo - 1.0) <= 1e-9 and abs(c_hi - 1.0) <= 1e-9,
        tol=1e-9,
    )
    reports = [
        form_report,
        problem.check_set_lipschitz(
            prob, lin_spec, n_samples=n, seed=seed, level=level, amp=amp
        ),
        problem.check_set_hoelder(
            prob, hoe_spec, n_samples=n, seed=seed, level=level, amp=amp
        ),
        problem.check_osl(prob, n_samples=n, seed=seed, level=level, amp=amp),
        problem.check_growth(
            prob, lin_spec, n_samples=n, seed=seed, level=level, amp=amp
        ),
    ]
    lines = [problem.CHECK_CSV_HEADER] + [r.csv_row() for r in reports]
    _write_lines(os.path.join(outdir, "checks.csv"), lines)
    extra = [
        "check %s: %s" % (r.check, "pass" if r.passed else "FAIL")
        for r in reports
    ]
    ok = all(r.passed for r in reports)
    return ["checks.csv"], extra, ok


def cmd_table(rc, outdir):
    prob = rc.make_problem()
    roster = rc.make_roster()
    tab = funnel.convergence_table(prob, rc.levels, roster, rc.solver_config())
    _write_lines(os.path.join(outdir, "table.csv"), tab.csv_lines())
    # wall time goes to stdout only so reruns stay byte-identical
    print("table elapsed seconds = %.3f" % tab.elapsed)
    return ["table.csv"], []


def cmd_bounds(rc, outdir):
    prob = rc.make_problem()
    c_VH_hat = rc.c_VH_hat
    c_inf_hat = rc.c_inf_hat
    if c_VH_hat is None or c_inf_hat is None:
        space = prob.space(max(rc.levels))
        est_vh, est_inf = fem.estimate_embedding_constants(
            space, rc.bounds_n_samples, rc.bounds_seed
        )
        c_VH_hat = est_vh if c_VH_hat is None else c_VH_hat
        c_inf_hat = est_inf if c_inf_hat is None else c_inf_hat
    C_P_hat = rc.C_P_hat
    if C_P_hat is None:
        ratios = fem.estimate_projection_stability(
            rc.levels, rc.bounds_n_samples, rc.bounds_seed,
            x_lo=rc.x_lo, x_hi=rc.x_hi,
        )
        C_P_hat = max(ratios.values())
    rep = funnel.apriori_constants(
        prob, rc.levels, C_P_hat, c_VH_hat, c_inf_hat=c_inf_hat,
        C0_override=rc.C0_override, inflation=rc.inflation,
    )
    _write_lines(os.path.join(outdir, "ledger.csv"), rep.csv_lines())
    return ["ledger.csv"], []


def run(command, rc):
    """Execute one command; returns (exit code, artifact files)."""
    outdir = rc.outdir
    os.makedirs(outdir, exist_ok=True)
    ok = True
    if command == "solve":
        files, extra = cmd_solve(rc, outdir)
    elif command == "funnel":
        files, extra = cmd_funnel(rc, outdir)
    elif command == "track":
        files, extra = cmd_track(rc, outdir)
    elif command == "verify":
        files, extra, ok = cmd_verify(rc, outdir)
    elif command == "table":
        files, extra = cmd_table(rc, outdir)
    elif command == "bounds":
        files, extra = cmd_bounds(rc, outdir)
    else:
        raise ConfigError(f"unknown command {command!r}")
    _write_manifest(rc, outdir, files + ["manifest.txt"], extra)
    for line in extra:
        print(line)
    print("wrote %d file(s) to %s" % (len(files) + 1, outdir))
    return (0 if ok else 1), files


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="inclusionlab",
        description="numerical laboratory for parabolic differential inclusions",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to config file")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (advisory; runs are deterministic)")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="replace every configured seed")
    args = parser.parse_args(argv)

    if args.seed_override is not None and not 0 <= args.seed_override < 2**64:
        print("config error: seed override must fit in 64 bits",
              file=sys.stderr)
        return 1
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        values = parse_config(text)
        rc = RunConfig(
            values,
            args.command,
            outdir_flag=args.out,
            seed_override=args.seed_override,
            threads=max(1, args.threads),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        code, _ = run(args.command, rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(
            "numeric failure in %s: %s: %s"
            % (args.command, type(exc).__name__, exc),
            file=sys.stderr,
        )
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
