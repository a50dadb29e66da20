"""Scenario files: JSON input for the command line driver."""

from __future__ import annotations

import copy
import csv
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ParseError, UnknownParameter
from .profile import ProfileSpec, make_profile

ANALYSIS_DEFAULTS = {"r_cap": 50.0, "tol": 1e-10, "grid_points": 1000, "tail_tol": 1e-6}
MC_DEFAULTS = {"n_paths": 100_000, "dt": 1e-5, "seed": 0, "R_list": [1.0], "rho0": 0.0,
               "antithetic": False, "adaptive": False, "t_cap": None}
OUTPUT_DEFAULTS = {"format": "json", "dump_tables": False}
ASSUMPTION_DEFAULTS = {"proper": False, "minimal": None, "stochastically_complete_M": False}

SWEEPABLE = ("k", "H0", "r_phi", "m", "l", "p[i]", "q[i]", "coeffs[i]")
_COEF = re.compile(r"^(p|q|coeffs)\[(\d+)\]$")


def load_schema(name: str) -> dict:
    return json.loads(resources.files("radialbounds").joinpath("data", name).read_text())


@dataclass
class Scenario:
    raw: dict
    profile: ProfileSpec
    analysis: dict
    mc: dict
    output: dict
    assumptions: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def echo(self) -> dict:
        """Normalized input echo (defaults filled in, JSON-safe)."""
        out = copy.deepcopy(self.raw)
        out["analysis"] = dict(self.analysis)
        out["output"] = dict(self.output)
        out["declared_assumptions"] = dict(self.assumptions)
        if "mc" in self.raw:
            out["mc"] = dict(self.mc)
        out.setdefault("l", 0)
        out.setdefault("r_phi", "inf")
        out.setdefault("H", 0.0)
        return out


def _resolve_files(raw: dict, base: Path) -> None:
    params = raw.get("profile", {}).get("params", {})
    if isinstance(params, dict) and "file" in params:
        path = base / params["file"]
        if not path.is_file():
            raise ParseError(f"table file not found: {path}")
        t, v = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    t.append(float(row[0]))
                    v.append(float(row[1]))
                except (ValueError, IndexError):
                    if t:
                        raise ParseError(f"bad row in {path}: {row}") from None
        params.pop("file")
        params["t"], params["values"] = t, v


def scenario_from_dict(raw: dict, base_dir: Path | None = None) -> Scenario:
    """Validate a decoded scenario and build its profile."""
    raw = copy.deepcopy(raw)
    try:
        jsonschema.validate(raw, load_schema("scenario.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"scenario invalid at {where}: {exc.message}") from None
    base = base_dir or Path.cwd()
    _resolve_files(raw, base)
    profile = make_profile(raw)
    return Scenario(
        raw=raw,
        profile=profile,
        analysis={**ANALYSIS_DEFAULTS, **raw.get("analysis", {})},
        mc={**MC_DEFAULTS, **raw.get("mc", {})},
        output={**OUTPUT_DEFAULTS, **raw.get("output", {})},
        assumptions={**ASSUMPTION_DEFAULTS, **raw.get("declared_assumptions", {})},
        base_dir=base,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a JSON object")
    return scenario_from_dict(raw, path.parent)


def parse_value(text: str) -> Any:
    t = text.strip()
    if t.lower() in ("inf", "+inf", "infinity"):
        return "inf"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        x = float(t)
    except ValueError:
        raise ParseError(f"not a number: {text!r}") from None
    if not math.isfinite(x):
        raise ParseError(f"not a finite number: {text!r}")
    return x


def apply_parameter(raw: dict, name: str, value: Any) -> dict:
    """Return a copy of ``raw`` with one sweepable parameter replaced."""
    out = copy.deepcopy(raw)
    prof = out.setdefault("profile", {})
    params = prof.setdefault("params", {})
    if name == "k":
        if prof.get("kind") == "closed_form_G" and prof.get("family") == "constant":
            params.pop("value", None)
        elif prof.get("family") not in ("hyperbolic", "spherical"):
            raise UnknownParameter(f"profile family {prof.get('family')!r} has no parameter k")
        params["k"] = float(value)
    elif name in ("H0", "H"):
        out["H"] = float(value)
    elif name == "r_phi":
        out["r_phi"] = value if value == "inf" else float(value)
    elif name in ("m", "l"):
        if isinstance(value, float) and not value.is_integer():
            raise ParseError(f"{name} must be an integer")
        out[name] = int(value)
    else:
        m = _COEF.match(name)
        if not m:
            raise UnknownParameter(f"cannot sweep {name!r}; choose from {', '.join(SWEEPABLE)}")
        key, i = m.group(1), int(m.group(2))
        if key not in params:
            raise UnknownParameter(f"profile has no coefficient list {key!r}")
        coeffs = list(params[key])
        coeffs.extend([0.0] * (i + 1 - len(coeffs)))
        coeffs[i] = float(value)
        params[key] = coeffs
    return out
