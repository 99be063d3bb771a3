"""Scenario files: JSON schema, validation and conversion to library objects."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from .maxweight import SchedulingScenario, to_fpcs
from .perturbation import PATH_KINDS, PerturbationPath, make_path
from .system import PwlPotential, Tolerances

_vector = {"type": "array", "items": {"type": "number"}}
_num = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "system", "initial_state", "horizon"],
    "properties": {
        "version": {"const": 1},
        "name": {"type": "string"},
        "system": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["pieces"],
                    "properties": {
                        "pieces": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["mu"],
                                "properties": {"mu": _vector, "b": _num},
                            },
                        },
                        "lambda": _vector,
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["maxweight"],
                    "properties": {
                        "maxweight": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["services"],
                            "properties": {
                                "services": {"type": "array", "minItems": 1,
                                             "items": {"type": "array", "minItems": 1,
                                                       "items": {"type": "number", "minimum": 0}}},
                                "idle": {"type": "boolean"},
                                "lambda": {"type": "array", "items": {"type": "number", "minimum": 0}},
                                "weights": {"type": "array",
                                            "items": {"type": "number", "exclusiveMinimum": 0}},
                            },
                        }
                    },
                },
            ]
        },
        "initial_state": _vector,
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "perturbation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(PATH_KINDS)},
                "params": {"type": "object"},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "active": {"type": "number", "exclusiveMinimum": 0},
                "zero": {"type": "number", "exclusiveMinimum": 0},
                "event": {"type": "number", "exclusiveMinimum": 0},
                "merge": {"type": "number", "exclusiveMinimum": 0},
                "consistency": {"type": "number", "exclusiveMinimum": 0},
                "min_norm": {"type": "number", "exclusiveMinimum": 0},
                "max_segments": {"type": "integer", "minimum": 1},
                "subset_budget": {"type": "integer", "minimum": 1},
            },
        },
        "gamma_override": {"type": "number", "minimum": 1},
    },
}


class ScenarioError(ValueError):
    """Schema or consistency problem, with the offending line when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<scenario>"):
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _locate(text: str, path) -> int | None:
    """Best-effort line of the value at ``path`` (keys searched in order)."""
    pos, line = 0, None
    for key in path:
        if isinstance(key, str):
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
            if m is None:
                break
            pos = m.end()
        else:
            # skip to the key-th element of the array opening at pos
            depth, count, i = 0, 0, text.find("[", pos)
            if i < 0:
                break
            j = i + 1
            while j < len(text) and count < key:
                ch = text[j]
                if ch in "[{":
                    depth += 1
                elif ch in "]}":
                    depth -= 1
                elif ch == "," and depth == 0:
                    count += 1
                j += 1
            pos = j
        line = text.count("\n", 0, pos) + 1
    return line


@dataclass(frozen=True, eq=False)
class Scenario:
    raw: dict
    name: str
    potential: PwlPotential
    initial_state: Any
    horizon: float
    perturbation: dict | None
    tolerances: Tolerances
    subset_budget: int
    gamma_override: float | None

    @property
    def dim(self) -> int:
        return self.potential.dim

    def path(self, seed: int | None = None) -> PerturbationPath:
        """The scenario perturbation (zero when absent); ``seed`` overrides the file."""
        if self.perturbation is None:
            return PerturbationPath.zero(self.dim)
        s = self.perturbation.get("seed", 0) if seed is None else seed
        return make_path(self.perturbation["kind"], self.perturbation_params(), s)

    def perturbation_params(self) -> dict:
        params = dict(self.perturbation.get("params", {}))
        params.setdefault("dim", self.dim)
        if self.perturbation["kind"] in ("square_wave", "discretized_wiener"):
            params.setdefault("horizon", self.horizon)
        return params


def parse(text: str, source: str = "<scenario>") -> Scenario:
    """Validate scenario JSON text and build the library objects."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg}", e.lineno, source) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = list(validator.iter_errors(raw))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        path = list(err.absolute_path)
        label = "/".join(map(str, path)) or "(root)"
        where = path
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            where = path + extra[:1]
        raise ScenarioError(f"{label}: {err.message}", _locate(text, where), source)

    def bad(msg, *path):
        return ScenarioError(msg, _locate(text, list(path)), source)

    sysd = raw["system"]
    try:
        if "pieces" in sysd:
            mus = [p["mu"] for p in sysd["pieces"]]
            n = len(mus[0])
            if any(len(mu) != n for mu in mus):
                raise bad("all drifts must have the same dimension", "system", "pieces")
            lam = sysd.get("lambda")
            if lam is not None and len(lam) != n:
                raise bad(f"lambda has dimension {len(lam)}, expected {n}", "system", "lambda")
            phi = PwlPotential(mus, [p.get("b", 0.0) for p in sysd["pieces"]], lam, dim=n)
        else:
            mw = sysd["maxweight"]
            n = len(mw["services"][0])
            if any(len(s) != n for s in mw["services"]):
                raise bad("all service vectors must have the same dimension",
                          "system", "maxweight", "services")
            for key in ("lambda", "weights"):
                if key in mw and len(mw[key]) != n:
                    raise bad(f"{key} has dimension {len(mw[key])}, expected {n}",
                              "system", "maxweight", key)
            phi = to_fpcs(SchedulingScenario(mw["services"], mw.get("lambda"),
                                              mw.get("idle", True), mw.get("weights")))
    except ScenarioError:
        raise
    except ValueError as e:
        raise bad(str(e), "system") from None

    if len(raw["initial_state"]) != n:
        raise bad(f"initial_state has dimension {len(raw['initial_state'])}, expected {n}",
                  "initial_state")
    tol_raw = dict(raw.get("tolerances", {}))
    budget = tol_raw.pop("subset_budget", 2 ** 16)
    tol = Tolerances(**tol_raw)
    if "active" in tol_raw:
        phi = PwlPotential(phi.drifts, phi.offsets, phi.field, tol.active, dim=n)
    sc = Scenario(raw, raw.get("name", Path(source).stem), phi, raw["initial_state"],
                  float(raw["horizon"]), raw.get("perturbation"), tol, int(budget),
                  raw.get("gamma_override"))
    if sc.perturbation is not None:
        try:
            U = sc.path()
        except ValueError as e:
            raise bad(str(e), "perturbation") from None
        if U.dim != n:
            raise bad(f"perturbation has dimension {U.dim}, expected {n}", "perturbation")
        if len(U) and U.times[-1] > sc.horizon:
            raise bad("perturbation jumps beyond the horizon", "perturbation")
    return sc


def load(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror}", None, str(p)) from None
    return parse(text, str(p))
