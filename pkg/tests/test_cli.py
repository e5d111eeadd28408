import csv
import hashlib
import json
import subprocess
import sys

import pytest

from ultradian.cli import EXIT_CERT, EXIT_CONFIG, EXIT_OK, PRESETS, load_config, main


def _manifest_ok(out):
    m = json.loads((out / "manifest.json").read_text())
    for name, digest in m["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert m["version"] and "effective_config.ini" in m["files"]
    return m


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_fig1b(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["simulate", "--preset", "fig1b", "--out", str(out)]) == EXIT_OK
    m = _manifest_ok(out)
    assert m["status"] == 0 and m["command"] == "simulate"
    assert set(m["files"]) >= {"timeseries.csv", "summary.csv", "summary.txt"}
    row = _rows(out / "summary.csv")[0]
    assert row["label"] == "periodic"
    assert float(row["period"]) / 60 == pytest.approx(2.2, rel=0.05)
    ts = _rows(out / "timeseries.csv")
    assert list(ts[0]) == ["t", "G", "I", "G_in_rate"]
    assert "h)" in capsys.readouterr().out


def test_simulate_fig1c_steady(tmp_path):
    out = tmp_path / "c"
    assert main(["simulate", "--preset", "fig1c", "--out", str(out)]) == EXIT_OK
    assert _rows(out / "summary.csv")[0]["label"] == "steady"


def test_classify_fig1d(tmp_path):
    out = tmp_path / "d"
    assert main(["classify", "--preset", "fig1d", "--out", str(out)]) == EXIT_OK
    assert _rows(out / "summary.csv")[0]["label"] == "quasi-periodic"
    assert not (out / "timeseries.csv").exists()


def test_simulate_fig1e_runs(tmp_path):
    out = tmp_path / "e"
    assert main(["simulate", "--preset", "fig1e", "--out", str(out)]) == EXIT_OK
    ts = _rows(out / "timeseries.csv")
    assert max(float(r["G_in_rate"]) for r in ts) == pytest.approx(24.3, rel=0.01)


def test_equilibrium_command(tmp_path):
    out = tmp_path / "eq"
    assert main(["equilibrium", "--out", str(out)]) == EXIT_OK
    row = _rows(out / "equilibrium.csv")[0]
    assert float(row["G_star"]) == pytest.approx(85.71616709238259, rel=1e-12)
    assert float(row["omega_I"]) < float(row["omega_G"])


def test_hopf_family_preset(tmp_path, capsys):
    out = tmp_path / "h"
    assert main(["hopf", "--preset", "fig3", "--set", "hopf.n=300", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "hopf.csv")
    g = sorted({float(r["G_in"]) for r in rows})
    assert g == pytest.approx([round(0.1 * k, 1) for k in range(17)])
    assert max(float(r["residual"]) for r in rows) < 1e-9
    text = capsys.readouterr().out
    # printed-order approximation gap at G_in = 0 stays under 3 min
    line = next(l for l in text.splitlines() if l.split() and l.split()[0] == "0.00")
    assert float(line.split()[-1]) < 3.0


def test_default_hopf(tmp_path):
    out = tmp_path / "h0"
    assert main(["hopf", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "hopf.csv")
    assert list(rows[0]) == ["omega", "tau_I", "tau_G", "residual", "G_in"]
    assert len(rows) >= 2000


def _sweep_args(out, workers):
    return ["sweep", "--preset", "fig5", "--out", str(out), "--workers", str(workers),
            "--set", "sweep.x_min=30", "--set", "sweep.x_max=60", "--set", "sweep.x_count=2",
            "--set", "sweep.y_min=0.2", "--set", "sweep.y_max=0.4", "--set", "sweep.y_count=2"]


def test_sweep_identical_across_workers(tmp_path, capsys):
    a, b = tmp_path / "w1", tmp_path / "w2"
    assert main(_sweep_args(a, 1)) == EXIT_OK
    assert main(_sweep_args(b, 2)) == EXIT_OK
    assert (a / "fieldmap.csv").read_bytes() == (b / "fieldmap.csv").read_bytes()
    m = _manifest_ok(a)
    assert {"fieldmap.csv", "fieldmap.svg", "provenance.json"} <= set(m["files"])
    head = (a / "fieldmap.csv").read_text().splitlines()[0]
    assert head == "t_in,G_bar,classification,p,q,period_min,g_max,g_min,flags,infusion_max"
    assert "max G =" in capsys.readouterr().out


@pytest.mark.parametrize("argv, msg", [
    (["--set", "model.nope=1"], "model.nope"),
    (["--set", "protocol.g_max=abc"], "protocol.g_max"),
    (["--set", "protocol.kind=on-off", "--set", "protocol.t_period=60",
      "--set", "protocol.t_on=40", "--set", "protocol.g_max=1"], "protocol"),
    (["--set", "model.d=-1"], "model"),
    (["--set", "bad"], "--set"),
    (["--set", "analysis.n_strobe=6.5"], "analysis.n_strobe"),
])
def test_config_errors_exit_2(tmp_path, capsys, argv, msg):
    assert main(["simulate", "--out", str(tmp_path / "x")] + argv) == EXIT_CONFIG
    assert msg in capsys.readouterr().err


def test_config_file_and_precedence(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[protocol]\ng_max = 0.7\n[model]\ntau_I = 6\n")
    cp = load_config("fig1c", str(f), ["model.tau_I=7"])
    assert cp["protocol"]["g_max"] == "0.7"          # file beats preset
    assert cp["model"]["tau_I"] == "7"               # flag beats file
    f.write_text("[extras]\na = 1\n")
    assert main(["simulate", "--config", str(f), "--out", str(tmp_path / "y")]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.ini"),
                 "--out", str(tmp_path / "y")]) == EXIT_CONFIG


def test_certification_failure_exit_3(tmp_path):
    # beta2 <= alpha0 leaves no Hopf curve: the existence condition fails
    code = main(["hopf", "--set", "model.R_g=1", "--out", str(tmp_path / "z")])
    assert code == EXIT_CERT
    m = json.loads((tmp_path / "z" / "manifest.json").read_text())
    assert m["status"] == EXIT_CERT


def test_presets_cover_figures():
    assert set(PRESETS) == {"fig1b", "fig1c", "fig1d", "fig1e", "fig2", "fig3", "fig4", "fig5"}


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ultradian", "equilibrium", "--out", str(tmp_path / "m")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "G_star" in r.stdout
