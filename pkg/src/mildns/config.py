"""INI run configuration: parsing, validation, overrides and hashing."""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigurationError
from .fixed_point import PRESSURE_FORMS, WINDOW_MODES, SolverConfig


def _choice(*options: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        value = raw.strip()
        if value not in options:
            raise ValueError(f"one of {', '.join(options)}")
        return value
    parse.accepted = ", ".join(options)
    return parse


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError("a boolean (true/false)")


def _opt_int(raw: str) -> int | None:
    return None if raw.strip().lower() in ("", "none") else int(raw)


def _opt_float(raw: str) -> float | None:
    return None if raw.strip().lower() in ("", "none") else float(raw)


def _str(raw: str) -> str:
    return raw.strip()


# section -> key -> (parser, default, description of accepted values)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any, str]]] = {
    "grid": {
        "dim": (int, 2, "1, 2 or 3"),
        "M": (int, 32, "even integer >= 8"),
    },
    "physics": {
        "mu": (float, 0.01, "positive float"),
        "rho_bar": (float, 1.0, "positive float"),
        "nonlinear": (_bool, True, "true/false"),
        "pressure_form": (_choice(*PRESSURE_FORMS), "rho_inv_sq", ", ".join(PRESSURE_FORMS)),
    },
    "lp": {
        "p": (float, 3.0, "float with dim < p <= 6"),
    },
    "time": {
        "T": (float, 0.1, "positive float (window length)"),
        "dt": (float, 1e-3, "positive float dividing T"),
        "T_total": (_opt_float, None, "positive float or none (defaults to T)"),
    },
    "noise": {
        "preset": (_choice("none", "eigenmode"), "none", "none, eigenmode"),
        "K": (int, 8, "positive integer"),
        "amplitude": (float, 0.0, "float"),
        "decay": (float, 2.0, "float"),
        "seed": (int, 0, "integer"),
        "sample": (int, 0, "non-negative integer"),
    },
    "initial": {
        "preset": (_choice("taylor_green", "random_divfree", "zero", "file"), "taylor_green",
                   "taylor_green, random_divfree, zero, file"),
        "amplitude": (float, 1.0, "float"),
        "slope": (float, 3.0, "float"),
        "kmax": (_opt_int, None, "integer or none"),
        "file": (_str, "", "path to a vector field snapshot"),
        "density": (_choice("constant", "sinusoidal", "file"), "constant", "constant, sinusoidal, file"),
        "density_amplitude": (float, 0.0, "float"),
        "density_file": (_str, "", "path to a scalar field snapshot"),
    },
    "picard": {
        "tol": (float, 1e-8, "positive float"),
        "max_levels": (int, 20, "positive integer"),
        "window": (_choice(*WINDOW_MODES), "fixed", ", ".join(WINDOW_MODES)),
        "M_const": (float, 2.0, "positive float"),
    },
}

SWEEP_SECTION = "sweep"


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values[section][key]`` holds typed entries."""

    values: dict
    sweep: dict
    base_dir: str = "."

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def canonical(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in sorted(self.values.items())}

    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(
            mu=v["physics"]["mu"], rho_bar=v["physics"]["rho_bar"], p=v["lp"]["p"], dim=v["grid"]["dim"],
            T=v["time"]["T"], dt=v["time"]["dt"], picard_tol=v["picard"]["tol"],
            max_levels=v["picard"]["max_levels"], restart_window=v["picard"]["window"],
            M_const=v["picard"]["M_const"], pressure_form=v["physics"]["pressure_form"],
            nonlinear=v["physics"]["nonlinear"],
        )

    @property
    def T_total(self) -> float:
        t = self.values["time"]["T_total"]
        return self.values["time"]["T"] if t is None else t

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        raw = to_raw(self)
        for dotted, value in overrides.items():
            section, key = _split_key(dotted)
            raw.setdefault(section, {})[key] = str(value)
        return from_raw(raw, self.base_dir, sweep=self.sweep)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, entries in to_raw(self).items():
            cp[section] = entries
        if self.sweep:
            cp[SWEEP_SECTION] = {k: ", ".join(v) for k, v in self.sweep.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _split_key(dotted: str) -> tuple[str, str]:
    if "." not in dotted:
        raise ConfigurationError(f"override {dotted!r} must look like section.key")
    section, key = dotted.split(".", 1)
    if section not in SCHEMA:
        raise ConfigurationError(f"unknown section [{section}]; accepted sections: {', '.join(SCHEMA)}")
    if key not in SCHEMA[section]:
        raise ConfigurationError(
            f"unknown key {key!r} in [{section}]; accepted keys: {', '.join(SCHEMA[section])}")
    return section, key


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_raw(cfg: RunConfig) -> dict[str, dict[str, str]]:
    return {s: {k: _format(v) for k, v in entries.items()} for s, entries in cfg.values.items()}


def _validate(values: dict) -> None:
    dim, p = values["grid"]["dim"], values["lp"]["p"]
    if dim not in (1, 2, 3):
        raise ConfigurationError("[grid] dim must be 1, 2 or 3")
    if not dim < p <= 6:
        raise ConfigurationError(
            f"[lp] p = {p} is outside the admissible range N < p <= 6 for N = {dim}")
    m = values["grid"]["M"]
    if m < 8 or m % 2:
        raise ConfigurationError("[grid] M must be an even integer >= 8")
    if values["noise"]["preset"] != "none" and values["noise"]["K"] < 1:
        raise ConfigurationError("[noise] K must be positive")
    if values["initial"]["preset"] == "file" and not values["initial"]["file"]:
        raise ConfigurationError("[initial] preset = file requires the key 'file'")
    if values["initial"]["density"] == "file" and not values["initial"]["density_file"]:
        raise ConfigurationError("[initial] density = file requires the key 'density_file'")
    if values["initial"]["preset"] == "taylor_green" and dim == 1:
        raise ConfigurationError("[initial] taylor_green needs dim >= 2")
    t_total = values["time"]["T_total"]
    if t_total is not None and t_total <= 0:
        raise ConfigurationError("[time] T_total must be positive")


def from_raw(raw: dict[str, dict[str, str]], base_dir: str = ".", sweep: dict | None = None) -> RunConfig:
    values: dict[str, dict[str, Any]] = {}
    for section, entries in raw.items():
        if section == SWEEP_SECTION:
            continue
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown section [{section}]; accepted sections: {', '.join(SCHEMA)}")
        for key in entries:
            if key not in SCHEMA[section]:
                raise ConfigurationError(
                    f"unknown key {key!r} in [{section}]; accepted keys: {', '.join(SCHEMA[section])}")
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = raw.get(section, {})
        for key, (parse, default, accepted) in keys.items():
            if key not in given:
                values[section][key] = default
                continue
            try:
                values[section][key] = parse(given[key])
            except ValueError:
                raise ConfigurationError(
                    f"invalid value {given[key]!r} for [{section}] {key}; accepted values: {accepted}") from None
    _validate(values)
    cfg = RunConfig(values, dict(sweep or {}), base_dir)
    cfg.solver_config()
    return cfg


def parse_sweep(entries: dict[str, str]) -> dict[str, list[str]]:
    out = {}
    for dotted, listing in entries.items():
        _split_key(dotted)
        items = [x.strip() for x in listing.split(",") if x.strip()]
        if not items:
            raise ConfigurationError(f"sweep key {dotted!r} has no values")
        out[dotted] = items
    return out


def parse_text(text: str, base_dir: str = ".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    raw = {s: dict(cp[s]) for s in cp.sections()}
    sweep = parse_sweep(raw.pop(SWEEP_SECTION, {}))
    return from_raw(raw, base_dir, sweep)


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    cfg = parse_text(text, str(path.parent))
    return cfg.with_overrides(overrides) if overrides else cfg


def default_config() -> RunConfig:
    return from_raw({})
