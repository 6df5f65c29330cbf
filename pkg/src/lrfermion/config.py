"""Job and model configuration files.

Configs are INI files read with :mod:`configparser`.  Values are parsed as
JSON when possible (numbers, lists, booleans) and kept as strings otherwise.

    [job]
    kind = fig2
    seed = 7

    [model]
    dimension = 1
    side = 500
    boundary = antiperiodic

    [params]
    lambdas = [0.25, 0.5, 0.75]

    [tolerances]
    slope = 0.15

Every key is checked against the defaults of its job kind, so a misspelled
key is reported with its line number instead of being silently ignored.
"""

from __future__ import annotations

import configparser
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .lattice import BOUNDARIES, LatticeSpec
from .operators import BlockOperator, build_power_law_model, damp_exponential

JOB_KINDS = ("verify-lr", "clustering", "bound-state", "gap-scan", "fig2", "filter-check", "lemma-suite")

MODEL_KEYS = {
    "dimension": 1,
    "side": 16,
    "boundary": "open",
    "alpha": 2.5,
    "J": 1.0,
    "internal_dim": 1,
    "internal_coupling": None,
    "impurities": [],
    "kappa": 0.0,
}

# per-kind defaults: model overrides, job parameters and tolerances
DEFAULTS: dict[str, dict[str, dict[str, Any]]] = {
    "verify-lr": {
        "model": {"dimension": 1, "side": 400, "alpha": 2.5, "J": 1.0},
        "params": {"model": "random", "times": None, "n_times": 8, "t_max": 10.0, "pairs": "all", "mu": 0.5},
        "tolerances": {"ratio_slack": 1e-12},
    },
    "clustering": {
        "model": {"dimension": 1, "side": 800, "alpha": 3.0, "J": 1.0},
        "params": {"mu": 1.0, "reference": None, "window": [40, 200], "z": 0.0},
        "tolerances": {"covariance_slope": 0.3, "green_slope_max": -2.7, "ratio_slack": 0.0},
    },
    "bound-state": {
        "model": {"dimension": 1, "side": 2000, "boundary": "periodic", "J": 1.0},
        "params": {"alphas": [2.0, 3.0], "V": 3.0, "site": 0, "window": [50, 500]},
        "tolerances": {"residual": 1e-8, "slope": 0.25},
    },
    "gap-scan": {
        "model": {},
        "params": {"dimensions": [1, 2, 3], "sides": [100, 40, 16], "lambda_points": 101},
        "tolerances": {"floor_slack": 1e-9, "quarter_match": 1e-6},
    },
    "fig2": {
        "model": {"dimension": 1, "side": None, "boundary": "antiperiodic"},
        "params": {"lambdas": [0.25, 0.5, 0.75], "window": None, "min_points": None},
        "tolerances": {"slope": None},
    },
    "filter-check": {
        "model": {},
        "params": {"erf_samples": 20, "green_samples": 20, "sign_instances": 10, "monotone_grids": 20},
        "tolerances": {"fourier": 1e-6, "sign_slack": 1e-8},
    },
    "lemma-suite": {
        "model": {},
        "params": {"trials": 1000},
        "tolerances": {"ratio_slack": 1e-12},
    },
}

# fig2 desk-scale defaults, per dimension
FIG2_SIDES = {1: 500, 2: 100, 3: 40}
FIG2_SLOPE_TOL = {1: 0.15, 2: 0.3, 3: 0.5}
FIG2_MIN_POINTS = {1: 5, 2: 5, 3: 4}

NUMERIC_TOLERANCES = ("ratio_slack", "covariance_slope", "residual", "slope", "floor_slack", "quarter_match", "fourier", "sign_slack")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, path: str | None = None):
        self.key, self.line, self.path = key, line, path
        where = ""
        if path:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        if key:
            where += f" [{key}]" if where else f"[{key}]"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass
class JobConfig:
    kind: str
    seed: int = 0
    out: str | None = None
    model: dict[str, Any] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    tolerances: dict[str, Any] = field(default_factory=dict)

    def scaled_tolerances(self, scale: float) -> dict[str, Any]:
        """Tolerances with every slack or width multiplied by ``scale``."""
        out = {}
        tolerances = dict(self.tolerances)
        if self.kind == "fig2" and tolerances.get("slope") is None:
            tolerances["slope"] = FIG2_SLOPE_TOL[int(self.model["dimension"])]
        for k, v in tolerances.items():
            out[k] = v * scale if (k in NUMERIC_TOLERANCES and isinstance(v, (int, float))) else v
        return out

    def echo(self) -> dict[str, Any]:
        return {"kind": self.kind, "seed": self.seed, "model": self.model, "params": self.params}


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        low = raw.strip().lower()
        if low in ("none", "null", ""):
            return None
        if low in ("true", "false"):
            return low == "true"
        return raw.strip()


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number, for diagnostics."""
    index: dict[tuple[str, str], int] = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and s and not s.startswith(("#", ";")):
            for sep in ("=", ":"):
                if sep in s:
                    index[(section, s.split(sep, 1)[0].strip())] = n
                    break
    return index


def default_config(kind: str) -> JobConfig:
    if kind not in JOB_KINDS:
        raise ConfigError(f"unknown job kind {kind!r}; expected one of {', '.join(JOB_KINDS)}", key="kind")
    base = DEFAULTS[kind]
    model = copy.deepcopy(MODEL_KEYS)
    model.update(copy.deepcopy(base["model"]))
    return JobConfig(
        kind=kind,
        model=model,
        params=copy.deepcopy(base["params"]),
        tolerances=copy.deepcopy(base["tolerances"]),
    )


def parse_config(text: str, kind: str | None = None, path: str | None = None) -> JobConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (J vs j)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", path=path, line=getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)

    file_kind = parser.get("job", "kind", fallback=None) if parser.has_section("job") else None
    if kind and file_kind and file_kind != kind:
        raise ConfigError(
            f"config is for job {file_kind!r} but {kind!r} was requested", key="kind", line=lines.get(("job", "kind")), path=path
        )
    kind = kind or file_kind
    if kind is None:
        raise ConfigError("job kind missing: set [job] kind or use a subcommand", key="kind", path=path)
    try:
        cfg = default_config(kind)
    except ConfigError as exc:
        raise ConfigError(str(exc), key="kind", line=lines.get(("job", "kind")), path=path) from None

    for section in parser.sections():
        if section not in ("job", "model", "params", "tolerances"):
            raise ConfigError(f"unknown section [{section}]", path=path, line=_section_line(text, section))
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            value = _parse_value(raw)
            if section == "job":
                if key == "kind":
                    continue
                if key == "seed":
                    if not isinstance(value, int) or isinstance(value, bool):
                        raise ConfigError(f"seed must be an integer, got {raw!r}", key=key, line=line, path=path)
                    cfg.seed = value
                elif key == "out":
                    cfg.out = str(value)
                else:
                    raise ConfigError("unknown key in [job]", key=key, line=line, path=path)
                continue
            target = getattr(cfg, section)
            if key not in target:
                known = ", ".join(sorted(target))
                raise ConfigError(f"unknown key in [{section}] (known: {known})", key=key, line=line, path=path)
            default = target[key]
            if isinstance(default, (int, float)) and not isinstance(default, bool) and value is not None:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ConfigError(f"expected a number, got {raw!r}", key=key, line=line, path=path)
            target[key] = value
    _validate_model(cfg.model, lambda k: lines.get(("model", k)), path)
    return cfg


def _section_line(text: str, section: str) -> int | None:
    for n, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return n
    return None


def _validate_model(model: dict[str, Any], line_of, path) -> None:
    def fail(key, msg):
        raise ConfigError(msg, key=key, line=line_of(key), path=path)

    if model.get("dimension") not in (1, 2, 3):
        fail("dimension", f"dimension must be 1, 2 or 3, got {model.get('dimension')!r}")
    side = model.get("side")
    if side is not None and (not isinstance(side, int) or side < 2):
        fail("side", f"side must be an integer >= 2, got {side!r}")
    if model.get("boundary") not in BOUNDARIES:
        fail("boundary", f"boundary must be one of {BOUNDARIES}, got {model.get('boundary')!r}")
    alpha = model.get("alpha")
    if alpha is not None and not alpha > 0:
        fail("alpha", f"alpha must be > 0, got {alpha!r}")
    if (model.get("kappa") or 0.0) < 0:
        fail("kappa", "kappa must be >= 0")
    imps = model.get("impurities") or []
    if not isinstance(imps, list) or any(not isinstance(i, list) or len(i) != 2 for i in imps):
        fail("impurities", "impurities must be a list of [site, V] pairs")


def load_config(path: str | Path, kind: str | None = None) -> JobConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(p)) from exc
    return parse_config(text, kind=kind, path=str(p))


# ---------------------------------------------------------------------------
# model serialization
# ---------------------------------------------------------------------------


def _decode_matrix(value, k: int) -> np.ndarray:
    """Internal matrix from JSON: a number, a real nested list, or {"re": ..., "im": ...}."""
    if value is None:
        return np.eye(k)
    if isinstance(value, dict):
        return np.asarray(value["re"], dtype=float) + 1j * np.asarray(value.get("im", 0.0), dtype=float)
    return np.asarray(value, dtype=complex)


def _encode_matrix(m) -> Any:
    m = np.asarray(m)
    if np.iscomplexobj(m) and np.any(m.imag):
        return {"re": m.real.tolist(), "im": m.imag.tolist()}
    return np.real(m).tolist()


def model_spec(model: dict[str, Any]) -> LatticeSpec:
    return LatticeSpec(int(model["dimension"]), int(model["side"]), model["boundary"], int(model.get("internal_dim", 1)))


def build_model(model: dict[str, Any]) -> BlockOperator:
    """Power-law model from a [model] section, damped by ``kappa`` when nonzero."""
    spec = model_spec(model)
    k = spec.internal_dim
    coupling = _decode_matrix(model.get("internal_coupling"), k)
    imps = [(int(s), _decode_matrix(v, k) if isinstance(v, (list, dict)) else float(v)) for s, v in model.get("impurities") or []]
    H = build_power_law_model(spec, float(model["J"]), float(model["alpha"]), internal_coupling=coupling, impurities=imps)
    kappa = float(model.get("kappa") or 0.0)
    return damp_exponential(H, kappa) if kappa else H


def model_to_ini(model: dict[str, Any]) -> str:
    """[model] section text that ``parse_config`` reads back to the same dict."""
    out = ["[model]"]
    for key in MODEL_KEYS:
        if key not in model:
            continue
        value = model[key]
        if key == "internal_coupling" and value is not None:
            value = _encode_matrix(value)
        if key == "impurities":
            value = [[s, _encode_matrix(v) if np.ndim(v) else v] for s, v in value]
        out.append(f"{key} = {json.dumps(value)}")
    return "\n".join(out) + "\n"
