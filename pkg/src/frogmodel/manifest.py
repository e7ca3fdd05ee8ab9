"""Experiment manifests: JSON schema, defaults and output-path resolution."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .lattice import default_directions
from .randomness import InitialConfigSpec

OUTPUT_ROOT_ENV = "FROGMODEL_OUTPUT_ROOT"

KINDS = ("run", "mu", "shape", "full_diamond", "m_good", "growth_probe", "tail_curve", "oracle", "check")

_site = {"type": "array", "items": {"type": "integer"}, "minItems": 1, "maxItems": 4}
_site_count = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 5}
_pos_int = {"type": "integer", "minimum": 1}
_schedule = {"type": "array", "items": _pos_int, "minItems": 1}

SPEC_SCHEMA = {
    "type": "object",
    "required": ["dimension"],
    "additionalProperties": False,
    "properties": {
        "dimension": {"type": "integer", "minimum": 1, "maximum": 4},
        "family": {"enum": ["constant", "bernoulli", "geometric", "poisson", "heavy_tail"]},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "condition_origin": {"type": "boolean"},
        "overrides": {"type": ["array", "null"], "items": _site_count},
        "extra": {"type": ["array", "null"], "items": _site_count},
    },
}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "frogmodel experiment manifest",
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "spec": SPEC_SCHEMA,
        "output_dir": {"type": "string"},
        "mode": {"enum": ["identity", "aggregate"]},
        "horizon": {"type": "integer", "minimum": 0},
        "replicas": _pos_int,
        "first_replica": {"type": "integer", "minimum": 0},
        "n_schedule": _schedule,
        "mu_schedule": _schedule,
        "directions": {"type": "array", "items": _site, "minItems": 1},
        "source": _site,
        "ray": {"type": "boolean"},
        # full diamond
        "tail_delta": {"type": "number", "exclusiveMinimum": 0},
        "heavy_cap": {"type": "integer", "minimum": 1},
        "baseline": SPEC_SCHEMA,
        # m-good
        "m": {"oneOf": [_pos_int, {"type": "array", "items": _pos_int, "minItems": 1}]},
        "h_d": {"type": "number", "exclusiveMinimum": 0},
        "window": _pos_int,
        # growth probe
        "probe_points": {"type": "array", "items": _site, "minItems": 1},
        "delta_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                       "minItems": 1},
        "threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        # tail curve
        "x0": _site,
        "m_grid": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        # oracle
        "occupancy": {"type": "array", "items": _site_count, "minItems": 1},
        "budget": _pos_int,
        # check
        "triples": {"type": "integer", "minimum": 0},
        "pairs": {"type": "integer", "minimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": k}}},
         "then": {"required": req}}
        for k, req in [
            ("run", ["spec", "horizon"]),
            ("mu", ["spec", "n_schedule", "replicas", "horizon"]),
            ("shape", ["spec", "n_schedule", "replicas", "horizon"]),
            ("full_diamond", ["spec", "n_schedule", "replicas", "tail_delta"]),
            ("m_good", ["spec", "m"]),
            ("growth_probe", ["spec", "n_schedule", "replicas", "horizon"]),
            ("tail_curve", ["spec", "x0", "m_grid", "replicas"]),
            ("oracle", ["occupancy", "horizon"]),
            ("check", ["spec", "horizon"]),
        ]
    ],
}


class ManifestError(ValueError):
    """Invalid manifest; the message names the offending field path."""


DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {"mode": "identity"},
    "mu": {"mode": "identity", "ray": True, "first_replica": 0},
    "shape": {"mode": "identity", "first_replica": 0},
    "full_diamond": {"mode": "aggregate", "first_replica": 0},
    "m_good": {"h_d": 1.0, "replicas": 1, "window": 5_000_000},
    "growth_probe": {"mode": "identity", "threshold": 0.99,
                     "delta_grid": [round(0.05 * i, 2) for i in range(1, 20)]},
    "tail_curve": {"mode": "identity"},
    "oracle": {"budget": 10**7},
    "check": {"mode": "identity", "triples": 100, "pairs": 20},
}


@dataclass
class ExperimentManifest:
    """A validated manifest with kind-specific defaults filled in."""

    data: dict

    @property
    def kind(self) -> str:
        return self.data["kind"]

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def spec(self, key: str = "spec") -> InitialConfigSpec:
        return InitialConfigSpec.from_dict(self.data[key])

    def output_dir(self) -> Path:
        out = Path(self.data.get("output_dir") or f"out/{self.kind}")
        if not out.is_absolute():
            root = os.environ.get(OUTPUT_ROOT_ENV)
            out = Path(root) / out if root else out
        return out

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def heavy_spec(self) -> InitialConfigSpec:
        base = self.data["spec"]
        params = {"delta": float(self.data["tail_delta"])}
        if "heavy_cap" in self.data:
            params["cap"] = int(self.data["heavy_cap"])
        return InitialConfigSpec.from_dict({**base, "family": "heavy_tail", "params": params})

    def baseline_spec(self) -> InitialConfigSpec:
        """The comparison spec: bernoulli with p matched to the heavy-tail p1, same seed."""
        heavy = self.heavy_spec()
        if "baseline" in self.data:
            return InitialConfigSpec.from_dict({**self.data["baseline"], "master_seed": heavy.master_seed})
        return heavy.replace(family="bernoulli", params={"p": heavy.p1})


def _path_of(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


def validate_manifest(data: Mapping) -> ExperimentManifest:
    """Schema check, defaults, and semantic checks (family parameters, delta < d, ...)."""
    validator = jsonschema.Draft202012Validator(MANIFEST_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ManifestError(f"{_path_of(err)}: {err.message}")
    out = copy.deepcopy(dict(data))
    for k, v in DEFAULTS[out["kind"]].items():
        out.setdefault(k, copy.deepcopy(v))
    m = ExperimentManifest(out)
    try:
        _semantic_checks(m)
    except ManifestError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(str(exc)) from exc
    return m


def _semantic_checks(m: ExperimentManifest) -> None:
    kind = m.kind
    spec = m.spec() if "spec" in m.data else None
    d = spec.dimension if spec else None
    for key in ("directions", "probe_points"):
        for i, x in enumerate(m.get(key) or []):
            if len(x) != d:
                raise ManifestError(f"$.{key}[{i}]: expected {d} coordinates")
            if not any(x):
                raise ManifestError(f"$.{key}[{i}]: must be nonzero")
    for key in ("source", "x0"):
        if key in m.data and len(m[key]) != d:
            raise ManifestError(f"$.{key}: expected {d} coordinates")
    for key in ("n_schedule", "mu_schedule"):
        sched = m.get(key)
        if sched and any(b <= a for a, b in zip(sched, sched[1:])):
            raise ManifestError(f"$.{key}: must be strictly increasing")
    if kind in ("shape", "mu") and "directions" not in m.data:
        m.data["directions"] = [list(x) for x in default_directions(d)]
    if kind == "shape" and max(m["n_schedule"]) > m["horizon"]:
        raise ManifestError("$.n_schedule: entries must not exceed the horizon")
    if kind == "full_diamond":
        delta = float(m["tail_delta"])
        if not delta < d:
            raise ManifestError(f"$.tail_delta: must satisfy 0 < tail_delta < d = {d}, got {delta}")
        m.data.setdefault("horizon", max(m["n_schedule"]))
        if max(m["n_schedule"]) > m["horizon"]:
            raise ManifestError("$.n_schedule: entries must not exceed the horizon")
        m.heavy_spec()  # parameter validation
        if "baseline" in m.data:
            InitialConfigSpec.from_dict(m["baseline"])
    if kind == "growth_probe":
        if not spec.condition_origin:
            raise ManifestError("$.spec.condition_origin: the growth probe needs an origin-conditioned spec")
        m.data.setdefault("probe_points", [[1 if i == j else 0 for j in range(d)] for i in range(d)])
    if kind == "tail_curve" and not spec.condition_origin:
        raise ManifestError("$.spec.condition_origin: tail curves need an origin-conditioned spec")
    if kind == "oracle":
        dims = {len(row) - 1 for row in m["occupancy"]}
        if len(dims) != 1:
            raise ManifestError("$.occupancy: all sites need the same dimension")
        if "source" in m.data and len(m["source"]) != dims.pop():
            raise ManifestError("$.source: dimension does not match the occupancy")


def load_manifest(path) -> ExperimentManifest:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    return validate_manifest(data)
