import csv
import json

import numpy as np
import pytest

from tdho.cli import build_parser, main
from tdho.config import ConfigError, SCHEMA, default_config, load_config, schema_document, validate

FREE = "scenario:\n  model: free\n  params: {m: 1.0}\n"
PROFILE = "scenario:\n  model: profile\n  params: {lambda: 0.25, m: 1.0}\n"


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# config -------------------------------------------------------------------
def test_defaults_fill_every_key():
    cfg = default_config()
    for sec, keys in SCHEMA.items():
        assert set(cfg[sec]) == set(keys)


def test_missing_mass_names_field(tmp_path):
    with pytest.raises(ConfigError, match="'m'"):
        load_config(_write(tmp_path, "scenario:\n  model: free\n  params: {}\n"))


def test_unknown_field_reports_line(tmp_path):
    with pytest.raises(ConfigError, match=r"grid\.pionts.*line 5"):
        load_config(_write(tmp_path, FREE + "grid:\n  pionts: 64\n"))


def test_type_error_and_int_promotion():
    with pytest.raises(ConfigError, match="grid.points"):
        validate({"scenario": {"model": "free", "params": {"m": 1}}, "grid": {"points": 1.5}})
    cfg = validate({"scenario": {"model": "free", "params": {"m": 1}}, "ode": {"T_ode": 100}})
    assert isinstance(cfg["ode"]["T_ode"], float)


def test_schema_document_versioned():
    doc = schema_document()
    assert doc["version"] == 1
    assert doc["sections"]["scenario"]["params"]["required"]


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve-ode", "--help"])
    out = capsys.readouterr().out
    assert "ode.T_ode = 1000.0" in out and "--workers" in out


# commands ------------------------------------------------------------------
def test_schema_command(tmp_path):
    assert main(["schema", "--out", str(tmp_path / "s.json")]) == 0
    assert json.loads((tmp_path / "s.json").read_text()) == schema_document()


def test_solve_ode_free(tmp_path):
    cfg = _write(tmp_path, FREE)
    assert main(["solve-ode", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    rows = _rows(tmp_path / "a" / "factors.csv")
    assert abs(float(rows[-1]["A"]) - np.pi / 2) <= 1e-6
    for name in ("config.echo", "summary.json", "schema.json", "asymptotics.json"):
        assert (tmp_path / "a" / name).exists()
    assert main(["solve-ode", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("factors.csv", "summary.json", "asymptotics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_mass_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "scenario:\n  model: free\n  params: {}\n")
    assert main(["solve-ode", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "'m'" in capsys.readouterr().err


def test_evolve_free(tmp_path):
    cfg = _write(tmp_path, FREE + "grid: {points: 512}\n")
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    rows = _rows(tmp_path / "e" / "evolve.csv")
    assert float(rows[0]["t"]) == 0.0 and float(rows[0]["l2_vs_oracle"]) <= 1e-12
    norms = [float(r["norm"]) for r in rows]
    assert max(norms) - min(norms) <= 1e-8
    assert max(float(r["l2_vs_oracle"]) for r in rows) <= 1e-6


def test_json_format(tmp_path):
    cfg = _write(tmp_path, FREE + "grid: {points: 256}\n")
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "j"), "--format", "json"]) == 0
    rows = json.loads((tmp_path / "j" / "evolve.json").read_text())
    assert isinstance(rows[0]["norm"], float)


def test_dispersive_scan_profile(tmp_path):
    cfg = _write(tmp_path, PROFILE)
    assert main(["dispersive-scan", "--config", str(cfg), "--out", str(tmp_path / "d"), "--workers", "4"]) == 0
    summ = json.loads((tmp_path / "d" / "summary.json").read_text())
    for key in ("fitted_slope", "fit_r2", "expected", "tolerance", "passed", "status"):
        assert key in summ
    assert summ["fitted_slope"] == pytest.approx(-0.375, abs=0.05)
    assert len(_rows(tmp_path / "d" / "dispersive.csv")) == 64


def test_empty_scan_reports_status(tmp_path):
    cfg = _write(tmp_path, FREE + "scan: {samples: 0, region: Omega0_plus}\n")
    assert main(["dispersive-scan", "--config", str(cfg), "--out", str(tmp_path / "z")]) == 1
    summ = json.loads((tmp_path / "z" / "summary.json").read_text())
    assert summ["status"].startswith("insufficient samples")
    assert not summ["passed"]


def test_resonance_command(tmp_path):
    cfg = _write(tmp_path, PROFILE)
    assert main(["resonance", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    summ = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert summ["n_tilde"] == 1 and summ["passed"]


def test_strichartz_and_duhamel_commands(tmp_path):
    cfg = _write(tmp_path, PROFILE + "grid: {points: 256}\nscan: {T: 5.0, family_size: 2}\n")
    for cmd in ("strichartz", "duhamel"):
        assert main([cmd, "--config", str(cfg), "--out", str(tmp_path / cmd)]) == 0
        summ = json.loads((tmp_path / cmd / "summary.json").read_text())
        assert len(summ["pairs"]) == 2


def test_magnetic_command(tmp_path):
    text = PROFILE + ("  magnetic: landau\n"
                      "  magnetic_params: {b0: 0.8660254037844386, beta: 0.5, q: 1.0, m: 1.0, j: 2}\n")
    cfg = _write(tmp_path, text)
    assert main(["magnetic", "--config", str(cfg), "--out", str(tmp_path / "m"), "--workers", "4"]) == 0
    summ = json.loads((tmp_path / "m" / "summary.json").read_text())
    slopes = [s["fitted_slope"] for s in summ["scans"]]
    assert slopes[0] == pytest.approx(-1.0, abs=0.07) and slopes[1] == pytest.approx(-0.75, abs=0.07)


def test_magnetic_needs_scenario(tmp_path):
    cfg = _write(tmp_path, PROFILE)
    assert main(["magnetic", "--config", str(cfg), "--out", str(tmp_path / "n")]) == 2


def test_seed_changes_samples(tmp_path):
    cfg = _write(tmp_path, PROFILE + "scan: {samples: 52}\n")
    outs = []
    for seed, tag in ((1, "s1"), (1, "s1b"), (2, "s2")):
        main(["dispersive-scan", "--config", str(cfg), "--out", str(tmp_path / tag), "--seed", str(seed)])
        outs.append((tmp_path / tag / "dispersive.csv").read_bytes())
    assert outs[0] == outs[1] != outs[2]
