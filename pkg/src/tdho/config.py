"""Run configuration: YAML file -> validated RunConfig.

Every knob has an entry in SCHEMA (type, default, description); the
schema is emitted as JSON by ``tdho schema`` and into every run
directory, so runs are self-describing.  Errors name the offending field
and, when known, its line in the file.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

SCHEMA_VERSION = 1

# section -> key -> (type, default, description); default REQUIRED marks mandatory keys
REQUIRED = object()

SCHEMA = {
    "scenario": {
        "model": (str, "profile", "coefficient model: free | profile | constant"),
        "params": (dict, REQUIRED, "model parameters, all required (free: m; profile: lambda, m; constant: omega, m)"),
        "magnetic": (str, None, "optional magnetic scenario name: landau"),
        "magnetic_params": (dict, None, "landau: b0, beta, q, m, j"),
    },
    "grid": {
        "points": (int, 1024, "points per axis (power of two)"),
        "scale": (float, 1.0, "stretch of the natural grid extent sqrt(2 pi N)"),
        "dim": (int, 1, "spatial dimension for evolve/strichartz"),
    },
    "ode": {
        "T_ode": (float, 1000.0, "half-width of the solved time span"),
        "tol": (float, 1e-11, "relative local error target of the integrator"),
        "samples": (int, 2001, "rows of the solve-ode table"),
    },
    "evolve": {
        "times": (list, [0.0, 0.5, 1.0, 2.0], "evaluation times"),
        "center": (list, [0.5], "Gaussian centre per axis"),
        "momentum": (list, [0.3], "Gaussian momentum per axis"),
        "width": (list, [1.0], "Gaussian standard deviation per axis"),
    },
    "scan": {
        "region": (str, "OmegaLambda_plus", "region for dispersive-scan / magnetic slope scans"),
        "samples": (int, 64, "sample pairs per slope scan"),
        "points": (int, 256, "probe grid points per axis in slope scans"),
        "T_scan": (float, 50000.0, "ODE span used for slope scans"),
        "refine_check": (bool, True, "reject samples whose sup norm moves > 2% under grid refinement"),
        "r": (float, None, "spatial exponent of dispersive-scan (>= 2); unset means the L^1 -> L^inf endpoint"),
        "N_max": (int, 3, "largest resonance index scanned"),
        "resonance_samples": (int, 50, "samples per resonance index"),
        "delta": (float, 0.39269908169872414, "resonance half-width delta~ (< pi/4)"),
        "T": (float, 50.0, "Strichartz horizon; ratios are compared on [-T, T] and [-2T, 2T]"),
        "dt": (float, 0.1, "Strichartz time step"),
        "family_size": (int, 10, "number of Gaussians in the homogeneous family"),
        "seed": (int, 0, "seed for all random choices (overridden by --seed)"),
    },
    "norms": {
        "pairs": (list, [[8, 4], [12, 3]], "admissible (q, r) pairs"),
        "lambda_w": (float, None, "time-weight index; defaults to the model's lambda"),
    },
    "duhamel": {
        "s0": (float, 1.0, "centre of the forcing in time"),
        "width": (float, 0.5, "temporal width of the forcing"),
        "dt": (float, 0.05, "time step of the Duhamel quadrature"),
    },
    "output": {
        "format": (str, "csv", "csv | json"),
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: dict
    source: str = "<defaults>"
    lines: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.data[section]

    def echo(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)


def schema_document() -> dict:
    doc = {"version": SCHEMA_VERSION, "sections": {}}
    for sec, keys in SCHEMA.items():
        doc["sections"][sec] = {
            k: {"type": t.__name__, "required": d is REQUIRED, "default": None if d is REQUIRED else d, "doc": desc}
            for k, (t, d, desc) in keys.items()
        }
    return doc


def write_schema(path) -> None:
    Path(path).write_text(json.dumps(schema_document(), indent=2, sort_keys=True) + "\n")


def _line_map(text: str) -> dict:
    """(section, key) -> 1-based line of the key in the YAML source."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if not isinstance(root, yaml.MappingNode):
        return out
    for knode, vnode in root.value:
        out[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                out[(knode.value, k2.value)] = k2.start_mark.line + 1
    return out


def _where(lines, *path) -> str:
    ln = lines.get(tuple(path))
    return f" (line {ln})" if ln else ""


def _coerce(value, typ, name):
    if value is None:
        return None
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if typ is bool and isinstance(value, bool):
        return value
    if typ in (str, list, dict) and isinstance(value, typ):
        return value
    raise ConfigError(f"{name}: expected {typ.__name__}, got {type(value).__name__} ({value!r})")


def validate(raw: dict, lines: dict = None, source: str = "<dict>") -> RunConfig:
    lines = lines or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"{source}: unknown section '{k}'{_where(lines, k)}")
    data = {}
    for sec, keys in SCHEMA.items():
        given = raw.get(sec) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"{source}: section '{sec}' must be a mapping{_where(lines, sec)}")
        extra = set(given) - set(keys)
        if extra:
            k = sorted(extra)[0]
            raise ConfigError(f"{source}: unknown field '{sec}.{k}'{_where(lines, sec, k)}")
        out = {}
        for k, (typ, default, _) in keys.items():
            if k in given:
                try:
                    out[k] = _coerce(given[k], typ, f"{sec}.{k}")
                except ConfigError as e:
                    raise ConfigError(f"{source}: {e}{_where(lines, sec, k)}") from None
            elif default is REQUIRED:
                raise ConfigError(f"{source}: missing required field '{sec}.{k}'{_where(lines, sec)}")
            else:
                out[k] = copy.deepcopy(default)
        data[sec] = out
    cfg = RunConfig(data, source, lines)
    _check_scenario(cfg)
    return cfg


def _check_scenario(cfg: RunConfig) -> None:
    from tdho.classical import MODEL_REGISTRY
    from tdho.magnetic import MAGNETIC_REGISTRY

    sc = cfg["scenario"]
    where = _where(cfg.lines, "scenario", "params")
    if sc["model"] not in MODEL_REGISTRY:
        raise ConfigError(f"{cfg.source}: scenario.model: unknown model {sc['model']!r}{_where(cfg.lines, 'scenario', 'model')}")
    keys = MODEL_REGISTRY[sc["model"]][1]
    for k in keys:
        if k not in sc["params"]:
            raise ConfigError(f"{cfg.source}: scenario.params: model '{sc['model']}' is missing field '{k}'{where}")
    extra = set(sc["params"]) - set(keys)
    if extra:
        raise ConfigError(f"{cfg.source}: scenario.params: unknown field '{sorted(extra)[0]}'{where}")
    if sc["magnetic"] is not None:
        if sc["magnetic"] not in MAGNETIC_REGISTRY:
            raise ConfigError(f"{cfg.source}: scenario.magnetic: unknown scenario {sc['magnetic']!r}")
        mp = sc["magnetic_params"] or {}
        for k in MAGNETIC_REGISTRY[sc["magnetic"]][1]:
            if k not in mp:
                raise ConfigError(f"{cfg.source}: scenario.magnetic_params: missing field '{k}'"
                                  f"{_where(cfg.lines, 'scenario', 'magnetic_params')}")
    if cfg["output"]["format"] not in ("csv", "json"):
        raise ConfigError(f"{cfg.source}: output.format must be csv or json")


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: YAML parse error: {e}") from None
    return validate(raw, _line_map(text), str(path))


def default_config(**scenario) -> RunConfig:
    """Defaults with a scenario filled in (for the acceptance run and tests)."""
    raw = {"scenario": scenario or {"model": "profile", "params": {"lambda": 0.25, "m": 1.0}}}
    return validate(raw, source="<defaults>")
