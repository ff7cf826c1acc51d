from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from eulercert.cli import main, output_dir, read_points
from eulercert.config import OUTPUT_ENV, RunConfig, load_config
from eulercert.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def _small(**over):
    doc = json.loads((CONFIGS / "small.json").read_text())
    doc.update(over)
    return doc


def _csv_column(path, name):
    with open(path) as fh:
        return np.array([float(r[name]) for r in csv.DictReader(fh)])


# config ---------------------------------------------------------------------------

def test_shipped_configs_validate():
    for p in CONFIGS.glob("*.json"):
        load_config(p)


def test_round_trip():
    cfg = load_config(CONFIGS / "radial.json")
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).validate()
    assert again == cfg
    assert again.hash == cfg.hash


def test_hash_ignores_output_dir():
    a = RunConfig()
    b = RunConfig(output_dir="elsewhere")
    assert a.hash == b.hash
    assert RunConfig(seed=1).hash != a.hash


@pytest.mark.parametrize("bad", [
    {"mu": 0.4},
    {"ode_tol": 0},
    {"basis": {"kind": "mixed-eigen", "N": 0}},
    {"h_spec": {"coefficients": [[0, 1.0]], "support": [0.0, 7.0]}},
    {"unknown_key": 1},
    {"domain": {"kind": "annulus", "R_outer": 1.0, "R_inner": 1.0}},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**RunConfig().to_dict(), **bad}).validate()


def test_mu_message_cites_bound():
    with pytest.raises(ConfigError, match=r"mu > 1/2"):
        RunConfig(mu=0.4).validate()


def test_output_dir_precedence(monkeypatch):
    cfg = RunConfig(output_dir="from-config")
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert output_dir(cfg) == Path("from-config")
    monkeypatch.setenv(OUTPUT_ENV, "from-env")
    assert output_dir(cfg) == Path("from-env")
    assert output_dir(cfg, "from-flag") == Path("from-flag")


def test_read_points_skips_header(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("x,y\n1.0,0.0\n# comment\n0.5,0.5\n")
    np.testing.assert_array_equal(read_points(p), [[1.0, 0.0], [0.5, 0.5]])


# exit codes -----------------------------------------------------------------------

def test_exit_config_error(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", _small(mu=0.4))
    assert main(["certify", "--config", cfg, "--output-dir", str(tmp_path / "o")]) == 2
    assert "mu > 1/2" in capsys.readouterr().err


def test_exit_missing_config(tmp_path):
    assert main(["certify", "--config", str(tmp_path / "none.json")]) == 2


def test_exit_numerical_failure(tmp_path, capsys):
    doc = _small(basis={"kind": "mixed-eigen", "N": 5000})
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["certify", "--config", cfg, "--output-dir", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_exit_failed_transversality(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["certify", "--config", str(CONFIGS / "reversed.json"), "--output-dir", str(out)]) == 1
    doc = json.loads((out / "certificate.json").read_text())
    assert doc["verdict"] == "failed"
    assert [c["name"] for c in doc["checks"] if not c["pass"]] == ["(A1) transversality"]
    assert "failing check: (A1) transversality" in capsys.readouterr().out


def test_certify_small_fixture(tmp_path):
    out = tmp_path / "o"
    assert main(["certify", "--config", str(CONFIGS / "small.json"), "--output-dir", str(out)]) == 0
    doc = json.loads((out / "certificate.json").read_text())
    assert doc["verdict"] == "conditionally-certified"
    rep = json.loads((out / "report.json").read_text())
    for name, path in rep["manifest"].items():
        assert Path(path).exists(), name
    assert rep["config_hash"] == load_config(CONFIGS / "small.json").hash
    assert RunConfig.from_dict(rep["config"]).validate() == load_config(CONFIGS / "small.json")
    for name in ("history.csv", "Omega0.csv", "Omega_bar.csv", "fields.vtk", "A.csv"):
        assert (out / name).exists()


def test_unacknowledged_conditional_exits_one(tmp_path, capsys):
    doc = _small(acknowledgments={"sampled_bounds": False, "user_supplied": False})
    cfg = _write(tmp_path / "c.json", doc)
    assert main(["certify", "--config", cfg, "--output-dir", str(tmp_path / "o")]) == 1
    assert "without acknowledgment" in capsys.readouterr().out


# solve, trace, report --------------------------------------------------------------

def test_solve_zero_inflow(tmp_path):
    doc = _small(h_spec={"coefficients": [[0, 1.0]], "scale": 0.0})
    cfg = _write(tmp_path / "c.json", doc)
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == 0
    assert np.all(_csv_column(out / "Omega_bar.csv", "value") == 0)
    assert (out / "Phi_bar.csv").exists() and (out / "fields.vtk").exists()


def test_solve_radial_and_deterministic(tmp_path):
    cfg = str(CONFIGS / "small.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--output-dir", str(a)]) == 0
    assert main(["solve", "--config", cfg, "--output-dir", str(b)]) == 0
    scale = load_config(cfg).h_spec["scale"]
    with open(a / "vertices.csv") as fh:
        rows = list(csv.DictReader(fh))
    r = np.array([math.hypot(float(row["x"]), float(row["y"])) for row in rows])
    om = _csv_column(a / "Omega_bar.csv", "value")
    assert np.max(np.abs(om - scale * 2 / r)) <= 1e-5 * scale
    for name in ("Omega0.csv", "Omega_bar.csv", "Phi_bar.csv", "history.csv", "fields.vtk"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_trace_command(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    pts.write_text("x,y\n1.0,0.0\n0.5,0.0\n3.0,0.0\n0.0,-1.5\n")
    out = tmp_path / "o"
    assert main(["trace", "--config", str(CONFIGS / "small.json"), "--points", str(pts),
                 "--output-dir", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "error: point outside the domain" in printed
    with open(out / "traces.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["tau"]) == pytest.approx(math.log(2), abs=1e-8)
    assert rows[1]["forward"] == "hit_sigma2" and float(rows[1]["T"]) == 0.0
    assert rows[2]["error"] and not rows[2]["tau"]
    assert float(rows[3]["tau"]) == pytest.approx(math.log(2 / 1.5), abs=1e-8)
    assert (out / "trace_0_backward.csv").exists() and not (out / "trace_2_backward.csv").exists()


def test_report_command(tmp_path, capsys):
    out = tmp_path / "o"
    main(["certify", "--config", str(CONFIGS / "reversed.json"), "--output-dir", str(out)])
    capsys.readouterr()
    assert main(["report", "--certificate", str(out / "certificate.json"), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "failed"
    assert main(["report", "--config", str(CONFIGS / "reversed.json"), "--output-dir", str(out)]) == 0
    assert capsys.readouterr().out.startswith("verdict: failed")
    assert main(["report", "--certificate", str(tmp_path / "missing.json")]) == 2
