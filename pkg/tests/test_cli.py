import csv
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from shockfit.cli import EXIT_CONFIG, EXIT_DIVERGE, EXIT_OK, EXIT_SOLVE, fmt, run
from shockfit.config import ConfigError, RunConfig

from oracles import REF

BASE = textwrap.dedent("""\
    gas:
      gamma: 1.4
      c_v: 2.5
      q_e: 1.0
      kappa: 0.005
      ignition: {T0: 0.5, a: 1.0, activation_energy: 1.0, R0: 1.0}
    inflow: {p: 1.0, rho: 1.0, mach: 2.0, Z: 1.0}
    nozzle:
      L: 1.0
      sigma: 0.005
      theta_profile: {polynomial: [0, 0, 0, 1]}
    exit:
      p_sigma: {constant: %(ps)r}
      p_kappa: {constant: %(pk)r}
    hypothesis: %(hyp)s
    numerics: {nx_up: 128, nx_down: 96, ny: 32}
    """)
PS = (0.25 - 17.0 / 36.0 * 0.5 ** 4) / REF["c_plus"]
PK = (-REF["f1_plus"] + REF["K2"] * 0.5) / REF["c_plus"]


def write(tmp_path, extra="", name="run.yaml", ps=1.6, pk=-0.25, hyp="{case: H3, A: 1.0}"):
    path = tmp_path / name
    path.write_text(BASE % {"ps": ps, "pk": pk, "hyp": hyp} + extra)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cli(*args, out=None):
    argv = list(args) + (["--out", str(out)] if out is not None else [])
    return run(argv)


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(np.pi)) == np.pi
    assert fmt(3) == "3" and fmt(True) == "true"


def test_background_report(tmp_path, capsys):
    assert cli("background", "--config", str(write(tmp_path)), out=tmp_path) == EXIT_OK
    text = capsys.readouterr().out
    report = dict(line.split(" = ") for line in text.strip().splitlines())
    assert float(report["p_ratio"]) == pytest.approx(4.5, rel=1e-14)
    assert float(report["K1"]) == pytest.approx(17.0 / 9.0, rel=1e-13)
    rows = read_csv(tmp_path / "background.csv")
    assert {r["quantity"] for r in rows} >= {"p_ratio", "K2", "rh_residual_max"}


def test_bad_gamma_names_field_and_line(tmp_path, capsys):
    path = write(tmp_path)
    path.write_text(path.read_text().replace("gamma: 1.4", "gamma: 0.9"))
    assert cli("background", "--config", str(path)) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "gas.gamma" in err and "line 2" in err


def test_inert_background(tmp_path, capsys):
    path = write(tmp_path)
    path.write_text(path.read_text().replace("q_e: 1.0", "q_e: 0.0"))
    assert cli("background", "--config", str(path), out=tmp_path) == EXIT_OK
    report = dict(l.split(" = ") for l in capsys.readouterr().out.strip().splitlines())
    assert float(report["K2"]) == 0.0


def test_locate_and_out_of_range(tmp_path, capsys):
    assert cli("locate", "--config", str(write(tmp_path)), out=tmp_path) == EXIT_OK
    row = read_csv(tmp_path / "locate.csv")[0]
    assert float(row["xi_dot"]) == pytest.approx(0.538222561739184, rel=1e-12)
    assert row["status"] == "ok"
    capsys.readouterr()
    assert cli("locate", "--config", str(write(tmp_path, ps=50.0))) == EXIT_SOLVE
    err = capsys.readouterr().err
    assert "R range" in err and "P*" in err


def test_h4_sweep_constant(tmp_path):
    extra = "sweep: {sigma: [0.001, 0.002, 0.004], kappa: [0.001, 0.003]}\n"
    path = write(tmp_path, extra, ps=PS, pk=PK, hyp="{case: H4}")
    assert cli("sweep", "--config", str(path), out=tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 6
    xs = np.array([float(r["xi_dot"]) for r in rows])
    assert np.ptp(xs) < 1e-10 and xs[0] == pytest.approx(0.5, abs=1e-10)
    assert [(float(r["sigma"]), float(r["kappa"])) for r in rows][:2] == [(0.001, 0.001),
                                                                         (0.001, 0.003)]


def test_h2_sweep_monotone(tmp_path):
    extra = "sweep: {p_scale: [0.6, 0.8, 1.0, 1.2, 1.4]}\n"
    path = write(tmp_path, extra, ps=0.0, pk=-0.2, hyp="{case: H2, A2: 1.0, s: 2.0}")
    path.write_text(path.read_text().replace("sigma: 0.005", "sigma: 0.000025"))
    assert cli("sweep", "--config", str(path), out=tmp_path) == EXIT_OK
    xs = [float(r["xi_dot"]) for r in read_csv(tmp_path / "sweep.csv")]
    # p_kappa < 0 scaled up lowers P*, so the front retreats from the exit
    assert np.all(np.diff(xs) < 0)


def test_h2_scale_sweep_and_failures(tmp_path):
    extra = "sweep: {scale: [0.01, 0.02]}\n"
    path = write(tmp_path, extra, ps=0.0, pk=5.0, hyp="{case: H2, A2: 1.0, s: 2.0}")
    assert cli("sweep", "--config", str(path), out=tmp_path) == EXIT_SOLVE
    rows = read_csv(tmp_path / "sweep.csv")
    assert [r["status"] for r in rows] == ["no_solution"] * 2
    assert float(rows[0]["sigma"]) == pytest.approx(1e-4)


def test_parallel_sweep_matches_serial(tmp_path):
    extra = "sweep: {sigma: [0.001, 0.002, 0.003], kappa: [0.001, 0.002]}\n"
    path = write(tmp_path, extra, hyp="{case: H4}")
    cli("sweep", "--config", str(path), out=tmp_path / "a")
    cli("sweep", "--config", str(path), "--workers", "3", out=tmp_path / "b")
    assert (tmp_path / "a/sweep.csv").read_bytes() == (tmp_path / "b/sweep.csv").read_bytes()


def test_linear_and_solve_outputs(tmp_path, capsys):
    path = write(tmp_path)
    assert cli("linear", "--config", str(path), out=tmp_path) == EXIT_OK
    assert cli("solve", "--config", str(path), out=tmp_path) == EXIT_OK
    report = dict(l.split(" = ") for l in capsys.readouterr().out.strip().splitlines()
                  if " = " in l)
    assert float(report["slope_distance"]) < 0.5 * (0.01) ** 1.5
    assert report["within_ball"] == "true"
    log = read_csv(tmp_path / "convergence.csv")
    assert list(log[0]) == ["sweep", "dxi", "field_delta_norm", "slope_delta_norm",
                            "contraction_ratio", "rh_residual_max"]
    fields = read_csv(tmp_path / "solve_downstream.csv")
    assert len(fields) == 97 * 33
    assert list(fields[0]) == ["y1", "y2", "dp", "dtheta", "dq", "dS", "dZ"]
    front = read_csv(tmp_path / "solve_front.csv")
    assert list(front[0]) == ["y2", "psi", "psi_prime"]
    assert float(front[0]["y2"]) == 0.0


def test_tight_tolerance_diverges(tmp_path, capsys):
    path = write(tmp_path)
    path.write_text(path.read_text().replace("ny: 32}", "ny: 32, max_sweeps: 10}"))
    assert cli("solve", "--config", str(path), "--tol", "1e-30") == EXIT_DIVERGE
    assert "numerical failure" in capsys.readouterr().err


def test_csv_deterministic(tmp_path):
    path = write(tmp_path)
    for d in ("a", "b"):
        cli("linear", "--config", str(path), out=tmp_path / d)
    for name in ("linear_upstream.csv", "linear_downstream.csv", "linear_front.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("SHOCKFIT_OUT", str(tmp_path / "env"))
    cli("background", "--config", str(write(tmp_path)), out=tmp_path / "flag")
    assert (tmp_path / "env/background.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_root_policy_flag(tmp_path):
    path = write(tmp_path, ps=0.0, pk=-0.1006, hyp="{case: H4}")
    path.write_text(path.read_text().replace("sigma: 0.005", "sigma: 0.01")
                    .replace("kappa: 0.005", "kappa: 0.2"))
    xs = []
    for pol in ("smallest", "largest"):
        assert cli("locate", "--config", str(path), "--root-policy", pol,
                   out=tmp_path / pol) == EXIT_OK
        xs.append(float(read_csv(tmp_path / pol / "locate.csv")[0]["xi_dot"]))
    assert xs[0] < xs[1]


# ---------------------------------------------------------------- configuration

def test_config_roundtrip(tmp_path):
    cfg = RunConfig.from_file(write(tmp_path, "sweep: {scale: [0.01]}\n"))
    again = RunConfig.from_text(cfg.to_text())
    assert again.data == cfg.data
    assert again.to_text() == cfg.to_text()
    RunConfig.from_text(RunConfig.default().to_text())


@pytest.mark.parametrize("edit, needle", [
    (("nozzle:", "nozzel:"), "unknown section"),
    (("mach: 2.0", "mach: fast"), "inflow.mach"),
    (("rho: 1.0, ", ""), "exactly one of rho, S"),
    (("case: H3, A: 1.0", "case: H9"), "hypothesis"),
    (("polynomial: [0, 0, 0, 1]", "polynomial: [0, 1, 0, 1]"), "Theta"),
    (("nx_up: 128", "nx_up: -3"), "numerics.nx_up"),
    (("p_kappa: {constant: -0.25}", "p_kappa: {spline: 1}"), "unknown profile"),
])
def test_config_errors(tmp_path, edit, needle):
    path = write(tmp_path)
    path.write_text(path.read_text().replace(*edit))
    with pytest.raises(ConfigError, match=needle) as exc:
        RunConfig.from_file(path)
    assert exc.value.line is not None


def test_config_malformed_yaml():
    with pytest.raises(ConfigError, match="line 2"):
        RunConfig.from_text("gas:\n  gamma: [1.4\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("- just a list\n")


def test_sample_table_profile(tmp_path):
    x = np.linspace(0, 1, 41)
    np.savetxt(tmp_path / "pk.txt", np.column_stack([x, -0.25 + 0 * x]))
    path = write(tmp_path)
    path.write_text(path.read_text().replace("p_kappa: {constant: -0.25}",
                                             "p_kappa: {samples: pk.txt}"))
    cfg = RunConfig.from_file(path)
    *_, pert, _, _ = cfg.build()
    assert pert.exit_p_kappa.integral(0.0, 1.0) == pytest.approx(-0.25, rel=1e-12)
    path.write_text(path.read_text().replace("pk.txt", "missing.txt"))
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.from_file(path)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "shockfit.cli", "background", "--config",
                        str(write(tmp_path)), "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "p_ratio = 4.499999999999999" in r.stdout
