"""Shared profile builders and cached solutions."""

from __future__ import annotations

import functools
from pathlib import Path

import pytest

from radialbounds.isoperimetric import build_ratio_table
from radialbounds.jacobi import solve_sigma
from radialbounds.profile import make_profile

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

WORKED_P = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]
WORKED_Q = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 6.0]


def profile(kind, family=None, params=None, m=2, l=0, r_phi="inf", H=0.0, tail=None):
    prof = {"kind": kind, "params": params or {}}
    if family is not None:
        prof["family"] = family
    if tail is not None:
        prof["tail_majorant"] = tail
    return make_profile({"profile": prof, "m": m, "l": l, "r_phi": r_phi, "H": H})


def hyperbolic(k=1.0, **kw):
    return profile("closed_form_sigma", "hyperbolic", {"k": k}, **kw)


def euclidean(**kw):
    return profile("closed_form_sigma", "euclidean", {}, **kw)


def spherical(k=1.0, **kw):
    return profile("closed_form_sigma", "spherical", {"k": k}, **kw)


def worked(**kw):
    return profile("closed_form_sigma", "poly_exp", {"p": WORKED_P, "q": WORKED_Q}, **kw)


def constant_G(value, **kw):
    return profile("closed_form_G", "constant", {"value": value}, **kw)


# Presets used by the property suites: name -> (profile builder, window R)
PRESETS = {
    "euclidean": (euclidean, 20.0),
    "hyperbolic": (hyperbolic, 20.0),
    "hyperbolic_k2": (functools.partial(hyperbolic, 2.0), 10.0),
    "worked_example": (worked, 32.0),
    "constant_G": (functools.partial(constant_G, 1.0), 10.0),
    "polynomial_G": (lambda **kw: profile("closed_form_G", "polynomial", {"coeffs": [1.0, 0.0, 0.5]}, **kw), 4.0),
}


@functools.lru_cache(maxsize=None)
def preset_table(name: str, d: int = 2):
    build, R = PRESETS[name]
    w = solve_sigma(build(m=d), R, 1e-10)
    return build_ratio_table(w, d, R, tol=1e-10)


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k[1:])):
        terminalreporter.write_line(results[key])
