import csv
import json
from pathlib import Path

import numpy as np
import pytest

from mildns.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VERIFY_FAILED, main
from mildns.config import ConfigurationError, default_config, from_raw, load_config, parse_text
from mildns.runner import column_schema, expand_sweep, rerun_manifest, run
from mildns.snapshot import save_field
from mildns.spectral import TorusGrid
from mildns.presets import taylor_green

SMALL = """[grid]
M = 8
[time]
T = 0.02
dt = 0.005
T_total = 0.04
[initial]
amplitude = 0.5
density = sinusoidal
density_amplitude = 0.2
"""


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "run.ini"
    path.write_text(SMALL)
    return path


def test_defaults_valid():
    cfg = default_config()
    assert cfg["lp"]["p"] == 3.0 and cfg.solver_config().dim == 2


@pytest.mark.parametrize("raw,fragment", [
    ({"lp": {"p": "2"}}, "N < p <= 6"),
    ({"grid": {"dim": "3"}, "lp": {"p": "3"}}, "N < p <= 6"),
    ({"picard": {"window": "weekly"}}, "fixed, auto_formula"),
    ({"noise": {"preset": "white"}}, "none, eigenmode"),
    ({"grid": {"colour": "1"}}, "accepted keys"),
    ({"mesh": {}}, "accepted sections"),
    ({"time": {"dt": "0.003"}}, "does not divide"),
    ({"grid": {"M": "7"}}, "even"),
])
def test_rejections_name_the_problem(raw, fragment):
    with pytest.raises(ConfigurationError, match=fragment.replace("(", r"\(")):
        from_raw(raw)


def test_hash_stable_and_sensitive():
    a, b = parse_text(SMALL), parse_text(SMALL)
    assert a.hash() == b.hash()
    assert a.with_overrides({"lp.p": "4"}).hash() != a.hash()
    assert parse_text(a.to_ini()).hash() == a.hash()


def test_sweep_expansion_and_gate():
    cfg = parse_text(SMALL + "[sweep]\nlp.p = 2.5, 3, 4\n")
    assert [c[1]["lp.p"] for c in expand_sweep(cfg)] == ["2.5", "3", "4"]
    bad = parse_text(SMALL + "[sweep]\nlp.p = 2, 3\n")
    with pytest.raises(ConfigurationError, match="sweep cell lp.p=2 rejected"):
        expand_sweep(bad)


def test_run_twice_byte_identical(tmp_path):
    cfg = parse_text(SMALL)
    first, second = run(cfg, tmp_path / "a"), run(cfg, tmp_path / "b")
    for name in ("timeseries.csv", "energy.csv", "report.json"):
        assert (first.outdir / name).read_bytes() == (second.outdir / name).read_bytes()


def test_manifest_reproduces(tmp_path):
    first = run(parse_text(SMALL), tmp_path / "a")
    again = rerun_manifest(first.outdir / "manifest.json", tmp_path / "b")
    assert (first.outdir / "timeseries.csv").read_bytes() == (again.outdir / "timeseries.csv").read_bytes()
    manifest = json.loads((first.outdir / "manifest.json").read_text())
    assert manifest["config_hash"] == parse_text(SMALL).hash()


def test_timeseries_columns_documented(tmp_path):
    res = run(parse_text(SMALL), tmp_path / "a")
    with open(res.outdir / "timeseries.csv") as fh:
        header = next(csv.reader(fh))
    assert header == list(column_schema()["timeseries.csv"])
    rows = list(csv.reader(open(res.outdir / "timeseries.csv")))
    assert len(rows) == 1 + 9


def test_file_initial_condition(tmp_path):
    g = TorusGrid((8, 8))
    save_field(tmp_path / "u0.npz", taylor_green(g, 0.5))
    text = SMALL.replace("amplitude = 0.5", "preset = file\nfile = u0.npz")
    (tmp_path / "f.ini").write_text(text)
    res = run(load_config(tmp_path / "f.ini"), tmp_path / "out")
    assert np.allclose(res.trajectory.u[0], taylor_green(g, 0.5).values)


def test_cli_run_and_report(config_file, tmp_path, capsys):
    assert main(["run", str(config_file), "--out", str(tmp_path / "r1")]) == EXIT_OK
    assert main(["run", str(config_file), "--out", str(tmp_path / "r2"), "--set", "lp.p=4"]) == EXIT_OK
    out = tmp_path / "summary.csv"
    assert main(["report", str(tmp_path), "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().strip().splitlines()) == 3


def test_cli_sweep_three_cells(config_file, tmp_path):
    config_file.write_text(SMALL + "[sweep]\nlp.p = 2.5, 3, 4\n")
    assert main(["sweep", str(config_file), "--out", str(tmp_path / "s"), "--workers", "2"]) == EXIT_OK
    cells = sorted(p.name for p in (tmp_path / "s").iterdir() if p.is_dir())
    assert cells == ["cell_000", "cell_001", "cell_002"]
    rows = list(csv.DictReader(open(tmp_path / "s" / "summary.csv")))
    assert [r["status"] for r in rows] == ["ok"] * 3


def test_cli_exit_codes(config_file, tmp_path, capsys):
    config_file.write_text(SMALL + "[sweep]\nlp.p = 2, 3\n")
    assert main(["sweep", str(config_file), "--out", str(tmp_path / "s")]) == EXIT_CONFIG
    assert "rejected" in capsys.readouterr().err
    assert main(["run", str(config_file), "--out", str(tmp_path / "x"), "--set", "lp.p=1.5"]) == EXIT_CONFIG
    assert main(["run", str(config_file), "--out", str(tmp_path / "x"), "--set", "nope"]) == EXIT_CONFIG
    assert main(["verify", "--check", "forward_transform"]) == EXIT_OK


def test_cli_verify_failure_exit(monkeypatch):
    import mildns.verify as verify
    monkeypatch.setattr(verify, "REGISTRY", [("demo", "always_fails", lambda: (False, "no", {}))])
    assert main(["verify"]) == EXIT_VERIFY_FAILED


def test_cli_numerical_failure_exit(tmp_path, capsys):
    path = tmp_path / "blow.ini"
    path.write_text("[grid]\nM = 8\n[time]\nT = 0.05\ndt = 0.005\n[physics]\nmu = 1e-6\n"
                    "[initial]\npreset = random_divfree\namplitude = 1e8\n")
    with np.errstate(over="ignore"):
        assert main(["run", str(path), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
    assert "DivergenceError" in capsys.readouterr().err
