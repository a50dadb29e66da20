"""Spectral bounds, verdicts and obstructions assembled from a ratio table.

All quantities are computed at the effective dimension ``d = m - l`` so a
product target ``N x L`` and the plain case ``l = 0`` share one code path.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy import optimize

from .errors import DimensionMismatch
from .isoperimetric import (
    InfResult,
    RatioTable,
    TailStatus,
    build_ratio_table,
    check_script_I_monotone,
    inf_I,
)
from .jacobi import R_CAP_DEFAULT, WarpingFunction, check_positivity_monotonicity, solve_sigma
from .profile import HEnvelope, ProfileSpec, kneser_check

# Printed values that disagree with the stated formulas.  Keyed by a
# predicate on the profile; each entry is echoed into the report.
WORKED_EXAMPLE_P = (0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5)
WORKED_EXAMPLE_Q = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 6.0)
PRINTED_INF_BRANCH = 1.64  # (36/25) (2/3)^(-1/3) as printed; the minimizer gives base 2/5


# ---------------------------------------------------------------------------
# product reduction


@dataclass(frozen=True)
class EffectiveConfig:
    """Inputs of the ratio machinery after reducing a product target."""

    d: int
    m: int
    l: int
    r_phi: float
    H: HEnvelope
    note: str


def product_reduce(p: ProfileSpec) -> EffectiveConfig:
    """Reduce ``(m, l)`` to the effective dimension ``d = m - l``.

    ``r_phi`` is read as the extrinsic radius of the projection onto the
    factor carrying the curvature bound.  ``l = 0`` is the identity.

    Raises
    ------
    DimensionMismatch
        ``d < 2``: with ``d = 1`` the ratio is ``1/r`` and the formulas
        degenerate, so the case is rejected rather than extended.
    """
    d = p.m - p.l
    if d < 2:
        raise DimensionMismatch(f"effective dimension m - l = {d} < 2 is not supported")
    note = "identity (no product factor)" if p.l == 0 else (
        f"product target: dimension {p.m} - {p.l} = {d}; r_phi is the radius of the projected image")
    return EffectiveConfig(d=d, m=p.m, l=p.l, r_phi=p.r_phi, H=p.H, note=note)


# ---------------------------------------------------------------------------
# elementary operations


def _window_end(t: RatioTable, r_phi: float) -> float:
    return min(r_phi, t.R)


def compute_A(t: RatioTable, H: HEnvelope, r_phi: float | None = None,
              inf: InfResult | None = None) -> tuple[float, float | None]:
    """``A = sup H(r) / I_d(r)`` over ``[0, r_phi]``; returns ``(A, arg_sup)``.

    For a constant envelope ``A = H0 / inf I_d`` exactly, with ``arg_sup`` the
    argmin of ``I_d`` (``None`` when that is a limit).
    """
    r_phi = t.r_phi if r_phi is None else r_phi
    if H.is_constant:
        inf = inf if inf is not None else inf_I(t, r_phi)
        if H.H0 == 0.0:
            return 0.0, None
        if inf.bound_value == 0.0:
            return math.inf, inf.argmin
        return H.H0 / inf.bound_value, inf.argmin
    end = _window_end(t, r_phi)
    mask = t.grid <= end * (1 + 1e-12)
    g = t.grid[mask]
    ratio = H(g) * t.y[mask]
    k = int(np.argmax(ratio))
    best, arg = float(ratio[k]), float(g[k])
    if 0 < k < g.size - 1:
        lo, hi = g[max(k - 2, 0)], g[min(k + 2, g.size - 1)]
        res = optimize.minimize_scalar(lambda x: -float(H(x) * t.inv_I_at(x)), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12})
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


def discreteness_verdict(tail: TailStatus, A: float, proper: bool,
                         structural_ok: bool = True) -> str:
    """Three-valued discreteness verdict.

    ``yes`` needs properness, a converged integral and ``A < 1``.  ``A >= 1``
    or a failed structural hypothesis gives ``hypotheses-violated``; an
    undecided or divergent integral, or undeclared properness, gives
    ``no-inference``.
    """
    if A >= 1.0 or not structural_ok:
        return "hypotheses-violated"
    if proper and tail.kind == "converged":
        return "yes"
    return "no-inference"


def stochastic_and_exit_time(t: RatioTable, r_phi: float | None = None) -> dict:
    """Stochastic classification of the model and the mean exit time bound."""
    r_phi = t.r_phi if r_phi is None else r_phi
    tail = t.tail_status
    E = tail.value if tail.kind == "converged" else None
    if math.isfinite(r_phi):
        kind = "not-applicable-finite-radius"
    else:
        kind = {"converged": "incomplete", "divergent": "complete"}.get(tail.kind, "inconclusive")
    return {"incomplete_model": kind, "E_upper": E, "integral_status": tail.kind}


def inv_I_tends_to_zero(t: RatioTable) -> bool:
    """Heuristic detection of ``I^{-1} -> 0``: decay by at least 4x over the last two windows."""
    R = t.R
    if R < 4.0:
        return False
    y = t.inv_I_at(np.array([R / 4, R / 2, R]))
    return bool(y[2] < y[1] < y[0] and y[2] <= 0.25 * y[0])


def mean_curvature_obstruction(t: RatioTable, r_phi: float, A: float, monotone_ok: bool,
                               kneser_ok: bool) -> dict:
    """Contrapositive form of the mean curvature estimate.

    Under (i) script I nondecreasing and (ii) integrable ``I^{-1}``, a
    stochastically complete submanifold must have ``sup |H|/I >= 1``.  So
    ``A < 1`` rules stochastic completeness out.  If moreover ``r_phi = inf``
    and ``I^{-1} -> 0``, no bounded ``|H|`` is compatible with it.
    """
    integrable = t.tail_status.kind == "converged"
    hyp = {"script_I_nondecreasing": monotone_ok, "inv_I_integrable": integrable, "kneser": kneser_ok}
    out = {"hypotheses": hyp, "sup_H_over_I": A, "unbounded_H_required": False,
           "conditional": not kneser_ok}
    if not (monotone_ok and integrable):
        out["verdict"] = "not-applicable"
        return out
    out["verdict"] = ("incompatible-with-stochastic-completeness" if A < 1.0
                      else "no-obstruction")
    if not math.isfinite(r_phi) and inv_I_tends_to_zero(t):
        out["unbounded_H_required"] = True
    return out


# ---------------------------------------------------------------------------
# the report


def _enc(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
    if isinstance(x, dict):
        return {k: _enc(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_enc(v) for v in x]
    if isinstance(x, np.generic):
        return _enc(x.item())
    return x


def _dec(x):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    if isinstance(x, dict):
        return {k: _dec(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_dec(v) for v in x]
    return x


@dataclass
class EstimateReport:
    """All bounds and verdicts for one profile, with provenance.

    Numbers that are absent (an integral branch when the integral diverges)
    are ``None``.  Infinite values serialize as the string ``"inf"``.
    """

    m: int
    l: int
    effective_dim: int
    r_phi: float
    A: float
    A_arg_sup: float | None
    hypothesis_checks: dict
    conditional: bool
    inf_I: dict
    analytic_floor: float | None
    lambda_branch_integral: float | None
    lambda_branch_inf: float
    lambda_inf_floor: float | None
    lambda_lower: float
    discrete_spectrum: str
    stochastically_incomplete_model: str
    mean_exit_time_upper: float | None
    integral_inv_I: dict
    mean_curvature_verdict: dict
    not_l1_liouville: bool | None
    discrepancies: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _enc(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "EstimateReport":
        return cls(**_dec(data))


def _discrepancies(p: ProfileSpec, d: int, inf_branch: float, inf_res: InfResult) -> list:
    out = []
    if (p.kind == "closed_form_sigma" and p.family == "poly_exp" and d == 2
            and _same(p.params.get("p"), WORKED_EXAMPLE_P) and _same(p.params.get("q"), WORKED_EXAMPLE_Q)):
        out.append({
            "quantity": "inf I_2^2/4 for sigma = (t + t^7/2) exp(t^6/6)",
            "printed": PRINTED_INF_BRANCH,
            "computed": inf_branch,
            "closed_form": 36.0 / 25.0 * (2.0 / 5.0) ** (-1.0 / 3.0),
            "explanation": "the minimum of 2/r + r^5 sits at r^6 = 2/5; the printed value uses 2/3",
        })
    if (p.kind == "closed_form_sigma" and p.family == "hyperbolic" and math.isinf(p.r_phi)
            and abs(float(p.params.get("k", 1.0)) - 1.0) < 1e-15):
        out.append({
            "quantity": "inf I_m^2/4 for hyperbolic space of curvature -1",
            "printed": "(m-1)/4",
            "printed_value": (d - 1) / 4.0,
            "computed": inf_res.bound_value ** 2 / 4.0,
            "closed_form": (d - 1) ** 2 / 4.0,
            "explanation": "inf I_m = m - 1, so the square over four is (m-1)^2/4",
        })
    return out


def _same(a, b) -> bool:
    if a is None:
        return False
    a = np.trim_zeros(np.asarray(a, dtype=float), "b")
    b = np.trim_zeros(np.asarray(b, dtype=float), "b")
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=1e-12, atol=0))


def spectral_lower_bound(t: RatioTable, r_phi: float, H: HEnvelope,
                         inf: InfResult | None = None) -> dict:
    """Both branches of the bottom-of-spectrum estimate.

    ``(1 - A)`` is clipped at zero; when ``A > 1`` the estimate has no content
    and the caller marks it conditional.
    """
    inf = inf if inf is not None else inf_I(t, r_phi)
    A, arg = compute_A(t, H, r_phi, inf)
    one = max(1.0 - A, 0.0)
    tail = t.tail_status
    integral = one / tail.value if tail.kind == "converged" else None
    inf_branch = one * one * inf.bound_value ** 2 / 4.0
    floor = inf.analytic_floor
    floor_branch = None
    if floor is not None and math.isfinite(floor):
        floor_branch = max(floor - H.H0, 0.0) ** 2 / 4.0 if H.is_constant else None
    branches = [b for b in (integral, inf_branch) if b is not None]
    return {"A": A, "A_arg_sup": arg, "lambda_branch_integral": integral,
            "lambda_branch_inf": inf_branch, "lambda_inf_floor": floor_branch,
            "lambda_lower": max(branches), "inf": inf}


def analyze(p: ProfileSpec, *, tol: float = 1e-10, r_cap: float = R_CAP_DEFAULT,
            n_grid: int = 1000, tail_tol: float = 1e-6, proper: bool = True,
            minimal: bool | None = None, w: WarpingFunction | None = None,
            return_table: bool = False):
    """Run warping function, ratio table and every bound for one profile.

    Parameters
    ----------
    p : ProfileSpec
    tol : float
        ODE tolerance (also the sign threshold of the hypothesis checks).
    r_cap : float
        Window length used when ``r_phi`` is infinite.
    proper : bool
        Declared properness of the immersion (cannot be checked from data).
    minimal : bool, optional
        Declared minimality; defaults to ``H == 0``.
    w : WarpingFunction, optional
        Reuse an existing solution (it is extended if too short).

    Returns
    -------
    EstimateReport, or ``(EstimateReport, RatioTable)`` with ``return_table``.
    """
    eff = product_reduce(p)
    d, r_phi = eff.d, eff.r_phi
    R = r_phi if math.isfinite(r_phi) else r_cap
    notes = [eff.note]
    if w is None:
        w = solve_sigma(p, R, tol, on_vanish="truncate")
    elif w.r_max < R and w.status == "ok":
        w = w.extended(R, r_cap=R)
    R_eff = R
    if w.status == "sigma_vanished" and w.vanished_at <= R:
        R_eff = w.vanished_at * (1.0 - 1e-6)
        notes.append(f"sigma vanishes at r* = {w.vanished_at:.12g}; quantities restricted to [0, r*)")
    table = build_ratio_table(w, d, R_eff, tol=tol, r_phi=r_phi, n_grid=n_grid, tail_tol=tail_tol)

    sign = check_positivity_monotonicity(w, R_eff)
    if w.status == "sigma_vanished" and w.vanished_at <= R:
        sign = check_positivity_monotonicity(w, w.r_max)
    mono = check_script_I_monotone(table)
    kn = kneser_check(p, R_eff)
    inf = inf_I(table, r_phi)
    spec = spectral_lower_bound(table, r_phi, eff.H, inf)
    A = spec["A"]
    structural = sign.sigma_prime_nonneg and sign.sigma_positive and mono.nondecreasing
    checks = {
        "sigma_prime_nonneg": sign.to_dict(),
        "script_I_nondecreasing": mono.to_dict(),
        "kneser": kn.to_dict(),
        "A_le_1": {"ok": A <= 1.0, "A": A},
        "proper_assumed": {"ok": bool(proper), "source": "declared"},
    }
    conditional = not (structural and A <= 1.0)
    if conditional:
        notes.append("conditional: hypotheses violated; bounds shown for exploration only")
    notes.append("sigma' >= 0 and script I monotonicity are checked on [0, r_phi] "
                 "(the diameter of the image may differ)")
    if not math.isfinite(r_phi):
        notes.append(f"r_phi = inf: numerical window [0, {R_eff:.6g}]")

    stoch = stochastic_and_exit_time(table, r_phi)
    mc = mean_curvature_obstruction(table, r_phi, A, mono.nondecreasing, kn.guaranteed)
    is_minimal = (eff.H.is_constant and eff.H.H0 == 0.0) if minimal is None else bool(minimal)
    l1 = True if (is_minimal and mono.nondecreasing and table.tail_status.kind == "converged") else None
    verdict = discreteness_verdict(table.tail_status, A, proper, structural)

    inputs = {"m": p.m, "l": p.l, "d": d, "r_phi": r_phi, "H": eff.H.to_json(), "tol": tol,
              "r_cap": r_cap, "profile": p.to_json()["profile"]}
    flags = {"structural_ok": structural, "A_le_1": A <= 1.0, "proper": bool(proper)}
    prov = {
        "A": {"source": "sup of |H| / I_d over the image radii", "inputs": inputs, "hypotheses": flags},
        "lambda_branch_integral": {"source": "bottom of spectrum estimate, integral branch (1-A)/int I_d^-1",
                                   "inputs": inputs, "hypotheses": flags},
        "lambda_branch_inf": {"source": "bottom of spectrum estimate, infimum branch (1-A)^2 inf I_d^2/4",
                              "inputs": inputs, "hypotheses": flags},
        "lambda_inf_floor": {"source": "infimum branch with inf I_d replaced by (d-1) sigma'/sigma at r_phi",
                             "inputs": inputs, "hypotheses": flags},
        "discrete_spectrum": {"source": "discreteness criterion: proper, integrable I_d^-1, A < 1",
                              "inputs": inputs, "hypotheses": flags},
        "mean_exit_time_upper": {"source": "exit time comparison E <= int_0^r_phi I_d^-1",
                                 "inputs": inputs, "hypotheses": flags},
        "mean_curvature_verdict": {"source": "mean curvature estimate sup |H|/I_d >= 1 (contrapositive)",
                                   "inputs": inputs, "hypotheses": mc["hypotheses"]},
        "not_l1_liouville": {"source": "minimal immersion with (i), (ii): not L1-Liouville",
                             "inputs": inputs, "hypotheses": {"minimal": is_minimal}},
        "inf_I": {"source": "grid scan plus golden-section refinement; an upper estimate for the "
                            "Cheeger constant of the model", "inputs": inputs, "hypotheses": {}},
    }
    report = EstimateReport(
        m=p.m, l=p.l, effective_dim=d, r_phi=r_phi, A=A, A_arg_sup=spec["A_arg_sup"],
        hypothesis_checks=checks, conditional=conditional, inf_I=inf.to_dict(),
        analytic_floor=inf.analytic_floor, lambda_branch_integral=spec["lambda_branch_integral"],
        lambda_branch_inf=spec["lambda_branch_inf"], lambda_inf_floor=spec["lambda_inf_floor"],
        lambda_lower=spec["lambda_lower"], discrete_spectrum=verdict,
        stochastically_incomplete_model=stoch["incomplete_model"],
        mean_exit_time_upper=stoch["E_upper"], integral_inv_I=table.tail_status.to_dict(),
        mean_curvature_verdict=mc, not_l1_liouville=l1,
        discrepancies=_discrepancies(p, d, spec["lambda_branch_inf"], inf), notes=notes,
        provenance=prov)
    if return_table:
        return report, table
    return report


def numeric_fields(report: EstimateReport) -> dict[str, Any]:
    """Fields that must agree between a product target and its reduced twin."""
    d = report.to_dict()
    for key in ("m", "l", "provenance", "notes"):
        d.pop(key)
    return d
