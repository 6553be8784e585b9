"""Scenario configuration, presets, surface evaluation and export."""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .constrained import Branch, evaluate_arrays
from .errors import ConfigError, ParameterError
from .market_model import MarketParams, Preference, SimConfig, validate_params, validate_sim_config
from .unconstrained import Mode
from .var_risk import RiskSpec, classify_case, feasible_set, validate_risk

# Reference N, M quoted with the presets (reported only); the definitions give
# N = 37.5112..., M = 5.21 for the same inputs.
PRINTED_N_M = {"N": 37.74, "M": 5.273}

CSV_HEADER = "t,x,f_star,f_var,V_unc,V_con,branch,active"


@dataclass(frozen=True)
class GridSpec:
    t_min: float = 0.0
    t_max: float = 10.0
    x_min: float = 0.0
    x_max: float = 1.0
    nt: int = 101
    nx: int = 101

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.t_min, self.t_max, self.nt), np.linspace(self.x_min, self.x_max, self.nx)


@dataclass(frozen=True)
class OutputSpec:
    path: str = ""
    format: str = "csv"


@dataclass(frozen=True)
class ScenarioConfig:
    market: MarketParams
    preference: Preference
    risk: RiskSpec
    simulation: SimConfig = field(default_factory=SimConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    mode: Mode = Mode.PAPER
    output: OutputSpec = field(default_factory=OutputSpec)
    name: str = "custom"

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_TABLE1 = ScenarioConfig(
    market=MarketParams(mu=0.05, sigma=0.3, alpha=0.01, beta=0.14, rho=0.2),
    preference=Preference(gamma=1.0, T=10.0, x0=1.0),
    risk=RiskSpec(p=0.01, tau=1.0 / 260.0, var_cap=0.02),
    name="table1",
)

PRESETS = {
    "table1": _TABLE1,
    "table2": _TABLE1.replace(market=dataclasses.replace(_TABLE1.market, mu=0.8, sigma=0.02), name="table2"),
}

# section -> (dataclass field on ScenarioConfig, key -> converter)
_SECTIONS = {
    "market": ("market", {"mu": float, "sigma": float, "alpha": float, "beta": float, "rho": float}),
    "preference": ("preference", {"gamma": float, "T": float, "x0": float}),
    "risk": ("risk", {"p": float, "tau": float, "var_cap": float}),
    "simulation": ("simulation", {"n_paths": int, "dt": float, "master_seed": int, "chunk_size": int,
                                  "workers": int}),
    "grid": ("grid", {"t_min": float, "t_max": float, "x_min": float, "x_max": float, "nt": int, "nx": int}),
    "output": ("output", {"path": str, "format": str}),
}
_SCENARIO_KEYS = {"name", "mode", "preset"}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _to_float(text) -> float:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    s = str(text).strip()
    if "/" in s:
        return float(Fraction(s))
    return float(s)


def _to_int(text) -> int:
    if isinstance(text, bool):
        raise ValueError("boolean is not an integer")
    if isinstance(text, int):
        return text
    if isinstance(text, float):
        if not text.is_integer():
            raise ValueError(f"{text!r} is not an integer")
        return int(text)
    return int(str(text).strip().replace("_", ""))


_CONVERT = {float: _to_float, int: _to_int, str: str}


def _build(raw: dict, origin: str) -> ScenarioConfig:
    """Assemble a validated config from {section: {key: value}}."""
    unknown = set(raw) - set(_SECTIONS) - {"scenario"}
    if unknown:
        raise ConfigError(f"{origin}: unknown section(s) {sorted(unknown)}")
    head = raw.get("scenario", {})
    bad = set(head) - _SCENARIO_KEYS
    if bad:
        raise ConfigError(f"{origin}: unknown key(s) in [scenario]: {sorted(bad)}")
    base = preset(str(head["preset"])) if "preset" in head else None

    parts = {}
    for section, (attr, keys) in _SECTIONS.items():
        values = raw.get(section, {})
        extra = set(values) - set(keys)
        if extra:
            raise ConfigError(f"{origin}: unknown key(s) in [{section}]: {sorted(extra)}")
        converted = {}
        for key, value in values.items():
            try:
                converted[key] = _CONVERT[keys[key]](value)
            except (ValueError, ZeroDivisionError, TypeError) as exc:
                raise ConfigError(f"{origin}: [{section}] {key} = {value!r}: {exc}") from None
        cls = {"market": MarketParams, "preference": Preference, "risk": RiskSpec,
               "simulation": SimConfig, "grid": GridSpec, "output": OutputSpec}[section]
        if base is not None:
            current = dataclasses.asdict(getattr(base, attr))
        elif section in ("simulation", "grid", "output"):
            current = dataclasses.asdict(cls())
        else:
            current = {}
        current.update(converted)
        missing = [f.name for f in dataclasses.fields(cls) if f.name not in current
                   and f.default is dataclasses.MISSING]
        if missing:
            raise ConfigError(f"{origin}: [{section}] missing key(s) {missing}")
        try:
            parts[attr] = cls(**current)
        except ParameterError as exc:
            raise ConfigError(f"{origin}: [{section}] {exc}") from None

    try:
        mode = Mode(head.get("mode", base.mode.value if base else Mode.PAPER.value))
    except ValueError:
        raise ConfigError(f"{origin}: [scenario] mode must be 'paper' or 'rederived'") from None
    name = str(head.get("name", base.name if base else "custom"))
    cfg = ScenarioConfig(mode=mode, name=name, **parts)
    return validate_config(cfg, origin)


def validate_config(cfg: ScenarioConfig, origin: str = "config") -> ScenarioConfig:
    try:
        validate_params(cfg.market, cfg.preference)
        validate_risk(cfg.market, cfg.risk)
        validate_sim_config(cfg.simulation, cfg.preference.T)
    except ParameterError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    g = cfg.grid
    if not all(math.isfinite(v) for v in (g.t_min, g.t_max, g.x_min, g.x_max)):
        raise ConfigError(f"{origin}: [grid] ranges must be finite")
    if g.nt < 2 or g.nx < 2:
        raise ConfigError(f"{origin}: [grid] nt and nx must be at least 2")
    if not (0.0 <= g.t_min <= g.t_max <= cfg.preference.T):
        raise ConfigError(f"{origin}: [grid] need 0 <= t_min <= t_max <= T")
    if g.x_min > g.x_max:
        raise ConfigError(f"{origin}: [grid] need x_min <= x_max")
    if cfg.output.format not in ("csv", "json"):
        raise ConfigError(f"{origin}: [output] format must be 'csv' or 'json'")
    return cfg


def _parse_ini(text: str, origin: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys such as T are case sensitive
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    if parser.defaults():
        raise ConfigError(f"{origin}: keys outside a section: {sorted(parser.defaults())}")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _parse_json(text: str, origin: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{origin}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
        raise ConfigError(f"{origin}: expected an object of sections")
    return raw


def load_config(source: str) -> ScenarioConfig:
    """Load a scenario from a preset name, a file path, or inline INI/JSON text."""
    if source in PRESETS:
        return PRESETS[source]
    if "\n" not in source and os.path.exists(source):
        origin = source
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{source}: {exc.strerror}") from None
    else:
        origin, text = "<inline>", source
    if text.lstrip().startswith("{"):
        return _build(_parse_json(text, origin), origin)
    return _build(_parse_ini(text, origin), origin)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "scenario": {"name": cfg.name, "mode": cfg.mode.value},
        "market": dataclasses.asdict(cfg.market),
        "preference": dataclasses.asdict(cfg.preference),
        "risk": dataclasses.asdict(cfg.risk),
        "simulation": dataclasses.asdict(cfg.simulation),
        "grid": dataclasses.asdict(cfg.grid),
        "output": dataclasses.asdict(cfg.output),
    }


def serialize_config(cfg: ScenarioConfig, fmt: str = "ini") -> str:
    """Text form that `load_config` reads back to an equal config."""
    data = config_to_dict(cfg)
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True) + "\n"
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, values in data.items():
        parser[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- evaluation ---------------------------------------------------------------

@dataclass
class SurfaceGrid:
    t: np.ndarray
    x: np.ndarray
    layers: dict  # name -> (nt, nx) array

    LAYERS = ("f_star", "f_var", "V_unc", "V_con", "branch", "active")


@dataclass
class ScenarioResult:
    summary: dict
    surface: SurfaceGrid | None


def _window(mask: np.ndarray, axis_vals: np.ndarray, axis: int):
    hit = mask.any(axis=1 - axis)
    if not hit.any():
        return None
    vals = axis_vals[hit]
    return [float(vals.min()), float(vals.max())]


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Classify the admissible set and evaluate every layer on the grid.

    An empty admissible set yields a summary with ``feasible: false`` and no
    surface.
    """
    diag = classify_case(cfg.market, cfg.risk)
    fs = feasible_set(cfg.market, cfg.risk, diag)
    summary = {"scenario": cfg.name, "mode": cfg.mode.value, "feasible": not fs.is_empty}
    summary.update(diag.as_dict())
    summary["lower_bound"] = fs.lower if not fs.is_empty and math.isfinite(fs.lower) else None
    summary["upper_bound"] = fs.upper if not fs.is_empty and math.isfinite(fs.upper) else None
    summary["f2"], summary["f1"] = fs.roots if fs.roots else (None, None)
    if cfg.name in PRESETS:
        summary["printed_N_M"] = dict(PRINTED_N_M)
    if fs.is_empty:
        summary["notice"] = "infeasible: the VaR ceiling admits no strategy"
        return ScenarioResult(summary, None)

    t, x = cfg.grid.axes()
    tt, xx = np.meshgrid(t, x, indexing="ij")
    layers = evaluate_arrays(cfg.market, cfg.preference, cfg.risk, tt, xx, cfg.mode, fs)
    active = layers["active"]
    summary["active_fraction"] = float(active.mean())
    summary["inactive_t_window"] = _window(~active, t, 0)
    summary["inactive_x_window"] = _window(~active, x, 1)
    summary["branch_counts"] = {b.name: int((layers["branch"] == b).sum()) for b in Branch}
    return ScenarioResult(summary, SurfaceGrid(t, x, layers))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def surface_csv(grid: SurfaceGrid) -> str:
    L = grid.layers
    lines = [CSV_HEADER]
    for i, t in enumerate(grid.t):
        for j, x in enumerate(grid.x):
            lines.append(",".join((
                _fmt(t), _fmt(x), _fmt(L["f_star"][i, j]), _fmt(L["f_var"][i, j]),
                _fmt(L["V_unc"][i, j]), _fmt(L["V_con"][i, j]),
                str(int(L["branch"][i, j])), "1" if L["active"][i, j] else "0",
            )))
    return "\n".join(lines) + "\n"


def surface_json(grid: SurfaceGrid) -> str:
    L = grid.layers
    data = {
        "t": [float(v) for v in grid.t],
        "x": [float(v) for v in grid.x],
        "layers": {
            "f_star": L["f_star"].tolist(),
            "f_var": L["f_var"].tolist(),
            "V_unc": L["V_unc"].tolist(),
            "V_con": L["V_con"].tolist(),
            "branch": L["branch"].astype(int).tolist(),
            "active": L["active"].astype(int).tolist(),
        },
        "branch_codes": {b.name: int(b) for b in Branch},
    }
    return json.dumps(data, sort_keys=True) + "\n"


def export_surface(grid: SurfaceGrid, fmt: str, path: str) -> str:
    """Write the surface as CSV or JSON; returns the path written."""
    if fmt == "csv":
        text = surface_csv(grid)
    elif fmt == "json":
        text = surface_json(grid)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write surface to {path}: {exc.strerror}") from exc
    return path


def read_surface_csv(path: str) -> dict:
    """Columns of an exported CSV as float arrays (branch/active as ints)."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    return {name: data[name] for name in data.dtype.names}
