"""Run orchestration: single runs, parameter sweeps and manifest reports."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_text
from .energy import EnergyLedger, build_ledger, energy_audit
from .errors import ConfigurationError, MildNSError
from .fixed_point import Trajectory, divergence_residuals, global_march
from .noise import NoiseModel, eigenmode_noise
from .presets import constant_density, random_divfree, sinusoidal_density, taylor_green
from .rng import named_stream
from .snapshot import atomic_write_bytes, load_field
from .spectral import ScalarField, TorusGrid, VectorField, lp_norm, sobolev_norm

log = logging.getLogger(__name__)

TIMESERIES_COLUMNS = ("t", "u_Lp", "u_L2p", "H1", "H3", "a_L2p", "div_residual")
SUMMARY_COLUMNS = ("cell", "config_hash", "overrides", "status", "windows", "max_levels", "max_ratio",
                   "final_kinetic", "energy_audit")
MANIFEST = "manifest.json"


def column_schema() -> dict:
    text = resources.files("mildns").joinpath("schema/columns.json").read_text(encoding="utf-8")
    return json.loads(text)


# ------------------------------------------------------------------ inputs
def _resolve(cfg: RunConfig, name: str) -> Path:
    path = Path(name)
    return path if path.is_absolute() else Path(cfg.base_dir) / path


def build_inputs(cfg: RunConfig) -> tuple[TorusGrid, ScalarField, VectorField, NoiseModel | None]:
    g = cfg["grid"]
    grid = TorusGrid.uniform(g["dim"], g["M"])
    ini = cfg["initial"]
    seed = cfg["noise"]["seed"]
    if ini["preset"] == "taylor_green":
        u0 = taylor_green(grid, ini["amplitude"])
    elif ini["preset"] == "random_divfree":
        u0 = random_divfree(grid, named_stream(seed, "initial"), ini["slope"], ini["amplitude"], ini["kmax"])
    elif ini["preset"] == "zero":
        u0 = VectorField.zeros(grid)
    else:
        u0 = load_field(_resolve(cfg, ini["file"]))
        if not isinstance(u0, VectorField) or u0.grid != grid:
            raise ConfigurationError("[initial] file must hold a vector field on the configured grid")
    if ini["density"] == "constant":
        a0 = constant_density(grid, ini["density_amplitude"])
    elif ini["density"] == "sinusoidal":
        a0 = sinusoidal_density(grid, ini["density_amplitude"])
    else:
        a0 = load_field(_resolve(cfg, ini["density_file"]))
        if not isinstance(a0, ScalarField) or a0.grid != grid:
            raise ConfigurationError("[initial] density_file must hold a scalar field on the configured grid")
    nz = cfg["noise"]
    noise = None
    if nz["preset"] == "eigenmode" and nz["amplitude"] != 0.0:
        noise = eigenmode_noise(grid, nz["K"], nz["amplitude"], nz["decay"], seed=seed)
    return grid, a0, u0, noise


# ------------------------------------------------------------------ outputs
def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _csv_bytes(header: tuple, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _clean(obj):
    """JSON-safe copy: NaN and infinities become ``None``, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _json_bytes(obj) -> bytes:
    return (json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n").encode("utf-8")


def timeseries_rows(traj: Trajectory) -> list[tuple]:
    grid, p = traj.grid, traj.cfg.p
    u_hat = grid.fft(traj.u)
    u_p = lp_norm(traj.u, p, grid, vector=True)
    u_2p = lp_norm(traj.u, 2 * p, grid, vector=True)
    h1 = sobolev_norm(grid, u_hat, 1, components=True)
    h3 = sobolev_norm(grid, u_hat, 3, components=True)
    a_2p = lp_norm(traj.a, 2 * p, grid)
    div = divergence_residuals(grid, traj.u)
    return list(zip(traj.times, u_p, u_2p, h1, h3, a_2p, div))


@dataclass
class RunResult:
    outdir: Path
    manifest: dict
    trajectory: Trajectory
    ledger: EnergyLedger


def run(cfg: RunConfig, outdir: str | Path) -> RunResult:
    """Execute one global march and write its artifacts into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    grid, a0, u0, noise = build_inputs(cfg)
    solver = cfg.solver_config()
    timings["setup"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    traj = global_march(solver, a0, u0, noise, T_total=cfg.T_total, sample_index=cfg["noise"]["sample"])
    timings["march"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    deterministic = noise is None
    if deterministic:
        ledger, verdict = energy_audit(traj)
        audit = verdict.as_dict()
    else:
        ledger = build_ledger(traj)
        audit = {"passed": None, "note": "single stochastic path; balance is audited in expectation"}
    report = {
        "config_hash": cfg.hash(),
        "windows": [{
            "index": w.index, "start_step": w.start_step, "steps": w.steps,
            "t_start": w.t_start, "t_end": w.t_end,
            "selection": w.selection.as_dict() if w.selection is not None else None,
            "contraction": w.report.as_dict(),
        } for w in traj.windows],
        "seam_jumps": traj.seam_jumps,
        "energy_audit": audit,
    }
    files = {
        "config": ("config.ini", cfg.to_ini().encode("utf-8")),
        "timeseries": ("timeseries.csv", _csv_bytes(TIMESERIES_COLUMNS, timeseries_rows(traj))),
        "energy": ("energy.csv", _csv_bytes(EnergyLedger.CSV_HEADER, ledger.rows())),
        "report": ("report.json", _json_bytes(report)),
    }
    for name, data in files.values():
        atomic_write_bytes(outdir / name, data)
    timings["output"] = time.perf_counter() - t0
    manifest = {
        "config_hash": cfg.hash(),
        "seed": cfg["noise"]["seed"],
        "sample": cfg["noise"]["sample"],
        "version": __version__,
        "grid": {"dim": grid.dim, "resolution": list(grid.resolution)},
        "config": cfg.to_ini(),
        "timings": timings,
        "outputs": {key: name for key, (name, _) in files.items()} | {"manifest": MANIFEST},
        "summary": summary_fields(traj, ledger, audit),
    }
    atomic_write_bytes(outdir / MANIFEST, _json_bytes(manifest))
    return RunResult(outdir, manifest, traj, ledger)


def summary_fields(traj: Trajectory, ledger: EnergyLedger, audit: dict) -> dict:
    ratios = [r for w in traj.windows for r in w.report.ratios]
    passed = audit.get("passed")
    return {
        "windows": len(traj.windows),
        "max_levels": max(w.report.levels for w in traj.windows),
        "max_ratio": max(ratios) if ratios else 0.0,
        "final_kinetic": float(ledger.kinetic[-1]),
        "energy_audit": "n.a." if passed is None else ("pass" if passed else "fail"),
    }


def rerun_manifest(manifest_path: str | Path, outdir: str | Path) -> RunResult:
    """Re-execute a run from the configuration stored in its manifest."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    cfg = parse_text(manifest["config"], str(manifest_path.parent))
    if cfg.hash() != manifest["config_hash"]:
        raise ConfigurationError("manifest configuration does not match its hash")
    return run(cfg, outdir)


# ------------------------------------------------------------------ sweep
def expand_sweep(cfg: RunConfig) -> list[tuple[str, dict[str, str], RunConfig]]:
    """Cartesian product of the ``[sweep]`` lists; every cell is validated before any run starts."""
    keys = sorted(cfg.sweep)
    cells = []
    for i, combo in enumerate(itertools.product(*(cfg.sweep[k] for k in keys))):
        overrides = dict(zip(keys, combo))
        try:
            cell_cfg = cfg.with_overrides(overrides)
        except ConfigurationError as exc:
            desc = ", ".join(f"{k}={v}" for k, v in overrides.items())
            raise ConfigurationError(f"sweep cell {desc} rejected: {exc}") from None
        cells.append((f"cell_{i:03d}", overrides, cell_cfg))
    if not cells:
        cells.append(("cell_000", {}, cfg))
    return cells


def _run_cell(args: tuple[str, dict, str, str, str]) -> dict:
    name, overrides, ini_text, base_dir, outdir = args
    cfg = parse_text(ini_text, base_dir)
    row = {"cell": name, "config_hash": cfg.hash(),
           "overrides": ";".join(f"{k}={v}" for k, v in sorted(overrides.items()))}
    try:
        result = run(cfg, Path(outdir) / name)
        row.update(status="ok", **result.manifest["summary"])
    except MildNSError as exc:
        row.update(status=type(exc).__name__, windows=0, max_levels=0, max_ratio=float("nan"),
                   final_kinetic=float("nan"), energy_audit="n.a.")
    return row


def summary_bytes(rows: list[dict]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) if isinstance(row[c], float) else row[c] for c in SUMMARY_COLUMNS])
    return buf.getvalue().encode("utf-8")


def sweep(cfg: RunConfig, outdir: str | Path, workers: int = 1) -> list[dict]:
    """Run every sweep cell in its own directory and write ``summary.csv`` in cell order."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cells = expand_sweep(cfg)
    jobs = [(name, ov, c.to_ini(), c.base_dir, str(outdir)) for name, ov, c in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    atomic_write_bytes(outdir / "summary.csv", summary_bytes(rows))
    return rows


# ------------------------------------------------------------------ report
def find_manifests(paths: list[str | Path]) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_file() and p.name == MANIFEST:
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(p.rglob(MANIFEST)))
    return sorted(set(found))


def report(paths: list[str | Path], out: str | Path | None = None) -> list[dict]:
    """Collect manifests into one summary table, sorted by path."""
    rows = []
    for m in find_manifests(paths):
        data = json.loads(m.read_text(encoding="utf-8"))
        missing = [n for n in data["outputs"].values() if not (m.parent / n).exists()]
        row = {"cell": str(m.parent), "config_hash": data["config_hash"], "overrides": "",
               "status": "ok" if not missing else "missing:" + ",".join(missing)}
        row.update(data["summary"])
        rows.append(row)
    if out is not None:
        atomic_write_bytes(out, summary_bytes(rows))
    return rows


def load_and_run(config_path: str | Path, outdir: str | Path, overrides: dict[str, str] | None = None) -> RunResult:
    return run(load_config(config_path, overrides), outdir)
