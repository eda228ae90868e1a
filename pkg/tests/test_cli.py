import csv
import json

import numpy as np
import pytest

from shearmix.cli import ExperimentConfig, emit_plots, main
from shearmix.errors import MissingData
from shearmix.shear import write_profile_table


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main(["run", "--out", str(out), *args])
    return code, out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def critical_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "crit"
    code = main(["run", "--profile", "sine", "--nu", "1e-3", "--data", "critical_bump",
                 "--out", str(out)])
    return code, out


def test_run_critical_bump(critical_run):
    code, out = critical_run
    assert code == 0
    d = out / "nu_0.001"
    for name in ("trajectory.bin", "trajectory.bin.json", "ledger.csv", "rates.csv",
                 "spectral.csv", "streamline.csv", "summary.json", "logW.svg", "decay.svg"):
        assert (d / name).exists(), name
    summary = json.loads((d / "summary.json").read_text())
    for key in ("delta_fit", "beta_used", "scaling_slopes", "gronwall_pass", "lemmaA2_pass",
                "equivalence_pass"):
        assert key in summary
    assert summary["gronwall_pass"] is True
    assert summary["lemmaA2_pass"] and summary["equivalence_pass"]
    assert summary["checks"]["enabled"] == ["gronwall", "equivalence", "lemmaA2", "spectral", "scaling"]
    assert summary["delta_fit"] > 0
    assert list(_rows(d / "rates.csv")[0]) == ["nu", "data_kind", "lambda", "r2", "window"]
    assert list(_rows(d / "spectral.csv")[0]) == ["nu", "t", "c_min", "n"]
    assert list(_rows(d / "streamline.csv")[0]) == ["y", "rate", "predicted", "ratio"]


def test_plot_data_oracles(critical_run):
    _, out = critical_run
    d = out / "nu_0.001"
    summary = json.loads((d / "summary.json").read_text())
    sigma = summary["sigma_used"]
    # logW plateau in the critical layer
    rows = _rows(d / "logW.csv")
    band = [float(r["logW"]) for r in rows if abs(float(r["y"]) - np.pi / 2) < 0.5 * 1e-3 ** 0.25]
    assert band and np.allclose(band, sigma, rtol=1e-14)
    # Phi at t=0 is e^(2 sigma) ||f0||^2 with ||f0|| = 1
    first = _rows(d / "ledger.csv")[0]
    assert float(first["t"]) == 0.0
    assert float(first["phi"]) == pytest.approx(np.exp(2 * sigma), rel=1e-12)


def test_svg_has_config_hash(critical_run):
    _, out = critical_run
    summary = json.loads((out / "summary.json").read_text())
    text = (out / "nu_0.001" / "logW.svg").read_text()
    assert f"<!-- config-hash: {summary['config_hash']} -->" in text


def test_run_is_byte_reproducible(tmp_path):
    args = ["--profile", "sine", "--nu", "1e-2", "--data", "random", "--seed", "5"]
    _, a = _run(tmp_path, "a", *args)
    _, b = _run(tmp_path, "b", *args)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_no_critical_points_with_spectral(tmp_path, capsys):
    y = np.linspace(0, 2 * np.pi, 33)
    path = tmp_path / "couette.csv"
    write_profile_table(path, y, np.full_like(y, 0.5))
    code, _ = _run(tmp_path, "c", "--profile", f"table:{path}", "--nu", "1e-3")
    assert code == 2
    assert "Lemma A.1 requires nondegenerate critical points" in capsys.readouterr().err


def test_spectral_disabled_is_listed(tmp_path):
    code, out = _run(tmp_path, "z", "--profile", "zero", "--nu", "1e-2",
                     "--checks", "gronwall,equivalence", "--no-plots")
    summary = json.loads((out / "nu_0.01" / "summary.json").read_text())
    assert code == 0
    assert summary["checks"]["disabled"] == ["lemmaA2", "spectral", "scaling"]
    assert summary["lemmaA2_pass"] is None


def test_audit_failure_exit_code(tmp_path, capsys):
    # too-short run: nothing after nu^(-1/2) to certify decay
    code, _ = _run(tmp_path, "f", "--nu", "1e-2", "--t-end", "5", "--beta", "0.5",
                   "--checks", "gronwall", "--no-plots")
    assert code == 3
    assert "gronwall" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["--nu", "0"],
    ["--nu", "2"],
    ["--beta", "3"],
    ["--checks", "bogus"],
    ["--data", "nope"],
    ["--profile", "nope"],
])
def test_config_errors(tmp_path, args):
    code, _ = _run(tmp_path, "e", *args)
    assert code == 2


def test_toml_config(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('profile = "sine"\nnu = [1e-2]\nbeta = 0.25\ndata = "constant"\n'
                   'checks = ["equivalence"]\nplots = false\n')
    out = tmp_path / "toml"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    summary = json.loads((out / "nu_0.01" / "summary.json").read_text())
    assert summary["beta_used"] == 0.25 and summary["equivalence_pass"]
    bad = tmp_path / "bad.toml"
    bad.write_text("colour = 1\n")
    assert main(["run", "--config", str(bad)]) == 2


def test_sweep_heat(tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--profile", "zero", "--nu", "1e-1", "--nu", "1e-2", "--nu", "1e-3",
                 "--nu", "1e-4", "--out", str(out), "--workers", "2"])
    assert code == 0
    report = json.loads((out / "scaling.json").read_text())
    res = report["results"]["random"]
    assert res["slope"] == pytest.approx(1.0, abs=1e-3) and res["pass"]
    assert [p["status"] for p in res["points"]] == ["ok"] * 4


def test_sweep_needs_decades(tmp_path):
    assert main(["sweep", "--nu", "1e-2", "--nu", "1e-3", "--out", str(tmp_path / "s")]) == 2
    assert main(["sweep", "--nu", "1e-2", "--nu", "2e-2", "--nu", "3e-2", "--nu", "4e-2",
                 "--out", str(tmp_path / "s")]) == 2


def test_plots_missing_data(tmp_path):
    with pytest.raises(MissingData):
        emit_plots(tmp_path)
    assert main(["plots", str(tmp_path)]) == 2


def test_plots_rerender_identical(critical_run, tmp_path):
    _, out = critical_run
    d = out / "nu_0.001"
    before = (d / "decay.svg").read_bytes()
    emit_plots(out)
    assert (d / "decay.svg").read_bytes() == before


def test_digest_ignores_workers():
    a = ExperimentConfig(workers=1, output_dir="x")
    b = ExperimentConfig(workers=4, output_dir="y")
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(seed=1).digest()
