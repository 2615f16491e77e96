import os

import numpy as np
import pytest

from inclusionlab import cli, fem, funnel, problem, solver, tracking


SMALL = """
[problem]
T = 0.5
h_const = 0.1

[discretization]
tau = 5e-3
levels = 3, 4

[strategies]
roster = projection(zero), constant_theta(0.5), random_theta(seed=7)

[track]
fine_level = 6

[verify]
n_samples = 500
level = 4
"""


def write_config(tmp_path, text=SMALL, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


# ------------------------------------------------------------- parsing


def test_parse_config_basic():
    vals = cli.parse_config(SMALL)
    assert vals[("problem", "T")] == 0.5
    assert vals[("discretization", "levels")] == [3, 4]
    assert vals[("track", "fine_level")] == 6


def test_parse_config_comments_and_blanks():
    text = "# full comment\n\n[problem]\nT = 2.0  # trailing\n"
    vals = cli.parse_config(text)
    assert vals[("problem", "T")] == 2.0


def test_parse_config_unknown_key():
    with pytest.raises(cli.ConfigError, match="line 2.*bogus"):
        cli.parse_config("[problem]\nbogus = 1\n")


def test_parse_config_unknown_section():
    with pytest.raises(cli.ConfigError, match="unknown section"):
        cli.parse_config("[nope]\na = 1\n")


def test_parse_config_key_outside_section():
    with pytest.raises(cli.ConfigError, match="outside"):
        cli.parse_config("T = 1.0\n")


def test_parse_config_malformed_line():
    with pytest.raises(cli.ConfigError, match="line 2"):
        cli.parse_config("[problem]\nT 1.0\n")


def test_parse_config_bad_value():
    with pytest.raises(cli.ConfigError, match="bad value"):
        cli.parse_config("[problem]\nT = abc\n")


# ------------------------------------------------------------- rosters


def test_split_roster_respects_parens():
    parts = cli.split_roster(
        "projection(zero), random_theta(seed=3,n_switches=4), extremal(+-)"
    )
    assert parts == [
        "projection(zero)",
        "random_theta(seed=3,n_switches=4)",
        "extremal(+-)",
    ]


def test_split_roster_unbalanced():
    with pytest.raises(cli.ConfigError):
        cli.split_roster("projection(zero")


def test_strategy_descriptor_roundtrip():
    for strat in funnel.default_roster():
        d = strat.descriptor()
        again = cli.strategy_from_descriptor(d)
        assert again.descriptor() == d


def test_strategy_descriptor_rejects_unknown():
    with pytest.raises(cli.ConfigError):
        cli.strategy_from_descriptor("wat(1)")
    with pytest.raises(cli.ConfigError):
        cli.strategy_from_descriptor("constant_theta(two)")


# ---------------------------------------------------------- validation


def make_rc(text, command="solve", **kw):
    return cli.RunConfig(cli.parse_config(text), command, **kw)


def test_runconfig_defaults():
    rc = make_rc("")
    assert rc.levels == [3, 4, 5, 6, 7]
    assert rc.tau == 1e-3
    assert rc.h_const is None  # resolved to 0.1 inside make_problem
    prob = rc.make_problem()
    assert prob.T == 1.0
    sp = prob.space(3)
    assert np.allclose(prob.radius_values(sp), 0.1)


def test_runconfig_rejections():
    with pytest.raises(cli.ConfigError, match="eps"):
        make_rc("[problem]\neps = 0.5\n")
    with pytest.raises(cli.ConfigError, match="eps"):
        make_rc("[problem]\nnonlinearity = eps_power\n")
    with pytest.raises(cli.ConfigError, match="not both"):
        make_rc("[problem]\nh_const = 0.1\nh_file = x.csv\n")
    with pytest.raises(cli.ConfigError, match="u0_file"):
        make_rc("[problem]\nu0 = file\n")
    with pytest.raises(cli.ConfigError, match="fine_level"):
        make_rc("[track]\nfine_level = 2\n")
    with pytest.raises(cli.ConfigError, match="levels"):
        make_rc("[discretization]\nlevels = 0\n")


def test_seed_override_rewrites_all_seeds():
    rc = make_rc("", seed_override=42)
    assert rc.seed == 42 and rc.verify_seed == 42 and rc.bounds_seed == 42
    descs = [s.descriptor() for s in rc.make_roster()]
    assert any("seed=42" in d for d in descs)
    assert any("seed=51" in d for d in descs)


def test_eps_power_problem_construction():
    rc = make_rc("[problem]\nnonlinearity = eps_power\neps = 0.5\n")
    prob = rc.make_problem()
    assert "0.5" in prob.nonlinearity.tag


# ------------------------------------------------------------ commands


def test_solve_writes_parseable_trajectories(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert names == ["manifest.txt", "traj_L3_00.csv", "traj_L3_01.csv",
                     "traj_L3_02.csv"]
    lines = (out / "traj_L3_01.csv").read_text().splitlines()
    traj = solver.trajectory_from_lines(lines)
    rc = make_rc(SMALL)
    prob = rc.make_problem()
    direct = solver.solve(
        prob, prob.space(3), solver.ConstantTheta(0.5), rc.solver_config()
    )
    np.testing.assert_array_equal(traj.states, direct.states)
    assert traj.strategy == "constant_theta(0.5)"


def test_funnel_command_distances(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["funnel", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "distances.csv").read_text().splitlines()
    assert lines[0] == "i,j,distance"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 9
    for i, j, d in rows:
        if i == j:
            assert float(d) == 0.0
        else:
            assert float(d) > 0.0


def test_track_command_certificates(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["track", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "certificates.csv").read_text().splitlines()
    assert lines[0] == tracking.CERT_CSV_HEADER
    assert len(lines) == 3
    for ln, lvl in zip(lines[1:], (3, 4)):
        vals = [float(t) for t in ln.split(",")]
        assert vals[1] == lvl
        assert vals[2] == pytest.approx(np.exp(0.5))
        assert vals[8] == 0.0 and vals[9] == 0.0


def test_verify_command(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "checks.csv").read_text().splitlines()
    assert lines[0] == problem.CHECK_CSV_HEADER
    assert len(lines) == 6
    assert all(ln.endswith(",true") for ln in lines[1:])


def test_bounds_command_ledger_formula(tmp_path):
    text = SMALL + "\n[bounds]\nc_VH_hat = 0.31\nC_P_hat = 1.02\nn_samples = 40\n"
    cfg = write_config(tmp_path, text)
    out = tmp_path / "o"
    assert cli.main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    rows = dict(
        ln.split(",") for ln in (out / "ledger.csv").read_text().splitlines()[1:]
    )
    K1 = float(rows["K1"])
    assert K1 == np.exp(float(rows["ell_L1"])) * (
        float(rows["C0"]) + float(rows["alpha_L1"])
    )
    assert float(rows["c_VH"]) == pytest.approx(1.05 * 0.31)


def test_bounds_spot_value_e(tmp_path):
    text = (
        "[problem]\nh_const = 0.0\n[discretization]\nlevels = 3\n"
        "[bounds]\nC0_override = 1.0\nc_VH_hat = 0.3\nC_P_hat = 1.0\n"
        "c_inf_hat = 0.5\n"
    )
    cfg = write_config(tmp_path, text)
    out = tmp_path / "o"
    assert cli.main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "ledger.csv").read_text().splitlines()
    assert "K1,2.7182818284590451" in lines


def test_table_command_and_rerun_identical(tmp_path):
    cfg = write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli.main(["table", "--config", cfg, "--out", str(out_a)]) == 0
    assert cli.main(["table", "--config", cfg, "--out", str(out_b)]) == 0
    ta = (out_a / "table.csv").read_bytes()
    tb = (out_b / "table.csv").read_bytes()
    assert ta == tb
    skip = ("timestamp = ", "output.dir = ")
    ma = [ln for ln in (out_a / "manifest.txt").read_text().splitlines()
          if not ln.startswith(skip)]
    mb = [ln for ln in (out_b / "manifest.txt").read_text().splitlines()
          if not ln.startswith(skip)]
    assert ma == mb
    header = (out_a / "table.csv").read_text().splitlines()[0]
    assert header == funnel.TABLE_CSV_HEADER


def test_manifest_timestamp_isolated(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "manifest.txt").read_text().splitlines()
    stamps = [ln for ln in lines if ln.startswith("timestamp = ")]
    assert len(stamps) == 1
    assert lines[1] == stamps[0]
    assert not any(name.startswith(".tmp-") for name in os.listdir(out))


def test_u0_file_round_trip(tmp_path):
    prob = problem.default_problem()
    sp = prob.space(3)
    nf = prob.initial_state(sp)
    u0_path = tmp_path / "u0.csv"
    u0_path.write_text(fem.to_csv_line(nf) + "\n")
    text = (
        "[problem]\nT = 0.1\nu0 = file\nu0_file = %s\n"
        "[discretization]\ntau = 5e-3\nlevels = 3\n"
        "[strategies]\nroster = projection(zero)\n" % u0_path
    )
    cfg = write_config(tmp_path, text)
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "traj_L3_00.csv").read_text().splitlines()
    traj = solver.trajectory_from_lines(lines)
    np.testing.assert_allclose(traj.states[0], nf.coeffs, atol=1e-12)


# ----------------------------------------------------------- exit codes


def test_exit_one_on_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path, "[problem]\nwat = 1\n")
    assert cli.main(["solve", "--config", cfg]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_exit_one_on_missing_config(tmp_path, capsys):
    missing = str(tmp_path / "nope.ini")
    assert cli.main(["solve", "--config", missing]) == 1
    assert "config error" in capsys.readouterr().err


def test_exit_two_on_numeric_failure(tmp_path, capsys):
    bad_nodal = tmp_path / "h.csv"
    bad_nodal.write_text("3,0,1,-0.5,-0.5,-0.5\n")
    text = (
        "[problem]\nT = 0.5\nh_file = %s\n"
        "[discretization]\ntau = 5e-3\nlevels = 3\n" % bad_nodal
    )
    cfg = write_config(tmp_path, text)
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "numeric failure" in capsys.readouterr().err
