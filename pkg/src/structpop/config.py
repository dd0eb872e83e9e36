"""JSON run configuration: defaults, schema checks, hashing and rate building.

A configuration has the top-level sections ``model``, ``grid``,
``equilibrium``, ``stability``, ``simulate``, ``verify`` and ``output``,
plus an optional integer ``seed``.  Missing sections and keys are filled
from :data:`DEFAULTS`.  See ``configs/baseline.json`` for a complete file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .numerics import SizeGrid
from .rates import P_MAX_DEFAULT, VitalRates, make_fertility, make_rate_surface

__all__ = ["DEFAULTS", "RunConfig", "load_config", "parse_config", "build_rates",
           "config_hash", "set_path", "get_path"]

DEFAULTS: dict = {
    "seed": 42,
    "model": {"P_max": P_MAX_DEFAULT},
    "grid": {"m": 1.0, "n_cells": 200},
    "equilibrium": {"route": "auto", "P_range": None},
    "stability": {
        "region": None,                 # [re_lo, re_hi, im_lo, im_hi] or null for the default
        "check_jacobian": True,
        "tolerances": {"verdict": None, "max_disagreement": 0.5},
    },
    "simulate": {
        "t_end": 6.0,
        "cadence": 1.0,
        "initial": {"kind": "perturbation", "mode": "uniform", "amplitude": 0.01},
        "fit_window": [2.0, 6.0],
    },
    "verify": {
        "route_agreement": 2e-2,
        "grid_agreement": 2e-2,
        "growth_rate": None,            # null: max(0.05, 10 h) on each grid
        "jacobian": 1e-5,
        "mass_balance": 1e-4,
    },
    "output": {"directory": None, "formats": ["csv", "json"]},
}

_SECTIONS = set(DEFAULTS) - {"seed"}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "initial":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not allowed")


def _check_finite(obj, path="config"):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return
    if isinstance(obj, (int, float)):
        if not math.isfinite(obj):
            raise ConfigurationError(f"{path} must be finite", field=path)
        return
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


@dataclass(frozen=True)
class RunConfig:
    """A fully defaulted, schema-checked configuration."""

    data: dict

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def __getitem__(self, key):
        return self.data[key]

    def grid(self) -> SizeGrid:
        g = self.data["grid"]
        return SizeGrid.uniform(float(g["m"]), int(g["n_cells"]))

    def rates(self) -> VitalRates:
        return build_rates(self.data)

    def with_overrides(self, n_cells: int | None = None, seed: int | None = None) -> "RunConfig":
        data = copy.deepcopy(self.data)
        if n_cells is not None:
            data["grid"]["n_cells"] = int(n_cells)
        if seed is not None:
            data["seed"] = int(seed)
        return parse_config(data)

    def hash(self) -> str:
        return config_hash(self.data)


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a JSON object", field="config")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigurationError(f"unknown top-level key {name!r}", field=name)
    if "model" not in raw:
        raise ConfigurationError("configuration needs a 'model' section", field="model")
    data = _merge(DEFAULTS, raw)
    _check_finite(data)
    for sec in _SECTIONS:
        if not isinstance(data[sec], dict):
            raise ConfigurationError(f"'{sec}' must be an object", field=sec)

    g = data["grid"]
    n = g.get("n_cells")
    if isinstance(n, bool) or not isinstance(n, int) or n < 8:
        raise ConfigurationError("grid.n_cells must be an integer >= 8", field="grid.n_cells")
    if not isinstance(g.get("m"), (int, float)) or not g["m"] > 0:
        raise ConfigurationError("grid.m must be positive", field="grid.m")
    if isinstance(data["seed"], bool) or not isinstance(data["seed"], int):
        raise ConfigurationError("seed must be an integer", field="seed")

    route = data["equilibrium"]["route"]
    if route not in ("auto", "separable", "general"):
        raise ConfigurationError(f"unknown equilibrium route {route!r}", field="equilibrium.route")
    pr = data["equilibrium"]["P_range"]
    if pr is not None and (not isinstance(pr, list) or len(pr) != 2 or not 0 < pr[0] < pr[1]):
        raise ConfigurationError("equilibrium.P_range must be [lo, hi] with 0 < lo < hi",
                                 field="equilibrium.P_range")
    region = data["stability"]["region"]
    if region is not None and (not isinstance(region, list) or len(region) != 4
                               or not region[0] < region[1] or not region[2] < region[3]):
        raise ConfigurationError("stability.region must be [re_lo, re_hi, im_lo, im_hi]",
                                 field="stability.region")
    sim = data["simulate"]
    if not isinstance(sim["t_end"], (int, float)) or sim["t_end"] < 0:
        raise ConfigurationError("simulate.t_end must be nonnegative", field="simulate.t_end")
    w = sim["fit_window"]
    if not isinstance(w, list) or len(w) != 2 or not 0 <= w[0] < w[1]:
        raise ConfigurationError("simulate.fit_window must be [t0, t1] with t0 < t1",
                                 field="simulate.fit_window")
    kind = sim["initial"].get("kind") if isinstance(sim["initial"], dict) else None
    if kind not in ("perturbation", "profile"):
        raise ConfigurationError("simulate.initial.kind must be 'perturbation' or 'profile'",
                                 field="simulate.initial.kind")
    fmts = data["output"]["formats"]
    if not isinstance(fmts, list) or not set(fmts) <= {"csv", "json"}:
        raise ConfigurationError("output.formats must list 'csv' and/or 'json'",
                                 field="output.formats")
    # building the rates catches unknown families and missing parameters early
    build_rates(data)
    return RunConfig(data)


def load_config(path) -> RunConfig:
    """Read and check a JSON configuration file.

    Raises ConfigurationError for a missing file or malformed JSON (with
    line and column).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {str(path)!r}: {exc.strerror}",
                                 field="config") from None
    try:
        raw = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {str(path)!r} at line {exc.lineno}, "
                                 f"column {exc.colno}: {exc.msg}", field="config") from None
    except ValueError as exc:
        raise ConfigurationError(f"malformed JSON in {str(path)!r}: {exc}",
                                 field="config") from None
    return parse_config(raw)


def build_rates(data: dict) -> VitalRates:
    model = data["model"]
    m = float(data["grid"]["m"])
    P_max = float(model.get("P_max", P_MAX_DEFAULT))
    for key in ("gamma", "mu", "beta"):
        if key not in model:
            raise ConfigurationError(f"model needs {key!r}", field=f"model.{key}")

    def surface(spec, name):
        if not isinstance(spec, dict) or "family" not in spec:
            raise ConfigurationError(f"model.{name} needs a 'family'", field=f"model.{name}")
        try:
            return make_rate_surface(spec["family"], spec.get("params", {}))
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), field=f"model.{name}.{exc.field}") from None

    beta = model["beta"]
    if not isinstance(beta, dict):
        raise ConfigurationError("model.beta must be an object", field="model.beta")
    kind = beta.get("kind", "separable")
    comps = {k: v for k, v in beta.items() if k != "kind"}
    try:
        kernel = make_fertility(kind, comps, m=m, P_max=P_max)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), field=f"model.beta.{exc.field}") from None
    return VitalRates(surface(model["gamma"], "gamma"), surface(model["mu"], "mu"), kernel,
                      m=m, P_max=P_max)


def config_hash(data: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _walk(data, path: str):
    parts = path.split(".")
    node = data
    for part in parts[:-1]:
        node = _child(node, part, path)
    return node, parts[-1]


def _child(node, part, path):
    if isinstance(node, dict) and part in node:
        return node[part]
    if isinstance(node, list) and part.isdigit() and int(part) < len(node):
        return node[int(part)]
    raise ConfigurationError(f"unknown parameter path {path!r}", field=path)


def get_path(data: dict, path: str):
    node, last = _walk(data, path)
    return _child(node, last, path)


def set_path(data: dict, path: str, value: float) -> dict:
    """Copy of ``data`` with the numeric field at dotted ``path`` replaced."""
    data = copy.deepcopy(data)
    node, last = _walk(data, path)
    old = _child(node, last, path)
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ConfigurationError(f"{path!r} does not address a numeric field", field=path)
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return data
