"""Radial curvature profiles.

A profile is either a lower curvature function ``G`` (the radial sectional
curvature of the target is at most ``-G(rho)``) or the warping function
``sigma`` of the comparison model directly.  Only a fixed family of closed
forms is supported, chosen so that every derivative needed downstream is exact:

========================  =====================================================
kind / family             meaning
========================  =====================================================
closed_form_G / constant  ``G(t) = value`` (or ``k**2`` when given ``k``)
closed_form_G / polynomial ``G(t) = sum_i coeffs[i] |t|**i``
closed_form_G / power     ``G(t) = scale * (1 + |t|)**exponent``
closed_form_sigma / euclidean   ``sigma(t) = t``
closed_form_sigma / hyperbolic  ``sigma(t) = sinh(k t) / k``
closed_form_sigma / spherical   ``sigma(t) = sin(k t) / k``
closed_form_sigma / poly_exp    ``sigma(t) = P(t) exp(Q(t))``, P odd, Q even
tabulated_G / table       monotone cubic (or linear) interpolation of samples
========================  =====================================================

``G`` is always evaluated as an even function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize, special
from scipy.interpolate import PchipInterpolator

from .errors import (
    DimensionMismatch,
    EvalOutsideTable,
    NegativeHEnvelope,
    NonMonotoneTable,
    NonPositiveRadius,
    ProfileError,
)

KINDS = ("closed_form_G", "closed_form_sigma", "tabulated_G")
G_FAMILIES = ("constant", "polynomial", "power")
SIGMA_FAMILIES = ("euclidean", "hyperbolic", "spherical", "poly_exp")

# Truncation order of Taylor data handed to the series head of the IVP.
TAYLOR_ORDER = 10


def _as_float_array(t):
    return np.abs(np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# tail majorants (used by the Kneser check)


@dataclass(frozen=True)
class TailMajorant:
    """Declared bound ``G_-(s) <= coef * (1 + s)**(-exponent)`` beyond ``t_max``."""

    coef: float = 0.0
    exponent: float = 2.0

    def tail_integral(self, t: float) -> float:
        if self.coef == 0.0:
            return 0.0
        if self.exponent <= 1.0:
            return math.inf
        return self.coef * (1.0 + t) ** (1.0 - self.exponent) / (self.exponent - 1.0)

    def sup_product(self, t_max: float) -> float:
        """``sup_{t >= t_max} t * tail_integral(t)``."""
        if self.coef == 0.0:
            return 0.0
        e = self.exponent
        if e <= 2.0:
            return math.inf if e < 2.0 else self.coef
        t_star = max(t_max, 1.0 / (e - 2.0))
        return t_star * self.tail_integral(t_star)

    def to_dict(self) -> dict:
        return {"coef": self.coef, "exponent": self.exponent}


ZERO_TAIL = TailMajorant(0.0, 2.0)


# ---------------------------------------------------------------------------
# curvature forms


class _GForm:
    """Closed-form or tabulated ``G`` evaluated on ``t >= 0``."""

    def G(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def taylor(self, n: int) -> np.ndarray:
        """Right-sided Taylor coefficients ``g_0..g_n`` of ``G`` at 0."""
        raise NotImplementedError

    def default_tail(self, t_max: float) -> tuple[TailMajorant, float, str]:
        raise NotImplementedError

    def nonnegative(self) -> bool:
        return False


class ConstantG(_GForm):
    def __init__(self, value: float):
        self.value = float(value)

    def G(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)

    def taylor(self, n):
        g = np.zeros(n + 1)
        g[0] = self.value
        return g

    def default_tail(self, t_max):
        if self.value >= 0:
            return ZERO_TAIL, t_max, "exact"
        return TailMajorant(-self.value, 0.0), t_max, "exact"

    def nonnegative(self):
        return self.value >= 0


class PolynomialG(_GForm):
    def __init__(self, coeffs):
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        self.poly = Polynomial(c if c.size else [0.0])

    def G(self, t):
        return self.poly(np.asarray(t, dtype=float))

    def taylor(self, n):
        g = np.zeros(n + 1)
        c = self.poly.coef[: n + 1]
        g[: c.size] = c
        return g

    def default_tail(self, t_max):
        c = self.poly.coef
        lead = c[-1]
        if lead < 0:
            return TailMajorant(-lead, -(c.size - 1)), t_max, "exact"
        roots = self.poly.roots()
        real = roots[np.abs(roots.imag) < 1e-12].real
        if real.size and real.max() > t_max:
            t_max = float(real.max()) * 1.01 + 1.0
        return ZERO_TAIL, t_max, "exact"

    def nonnegative(self):
        c = self.poly.coef
        if np.all(c >= 0):
            return True
        return False


class PowerG(_GForm):
    def __init__(self, scale: float, exponent: float):
        self.scale = float(scale)
        self.exponent = float(exponent)

    def G(self, t):
        return self.scale * (1.0 + np.asarray(t, dtype=float)) ** self.exponent

    def taylor(self, n):
        i = np.arange(n + 1)
        return self.scale * special.binom(self.exponent, i)

    def default_tail(self, t_max):
        if self.scale >= 0:
            return ZERO_TAIL, t_max, "exact"
        return TailMajorant(-self.scale, -self.exponent), t_max, "exact"

    def nonnegative(self):
        return self.scale >= 0


class TabulatedG(_GForm):
    def __init__(self, t, values, order: int = 3, extrapolate: bool = False):
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ProfileError("table needs matching 1-D 't' and 'values' with >= 2 knots")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(v)):
            raise ProfileError("table entries must be finite")
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneTable("tabulated t must be strictly increasing")
        if t[0] < 0:
            raise ProfileError("tabulated G is even; supply knots on t >= 0")
        if order not in (1, 3):
            raise ProfileError("interpolation order must be 1 or 3")
        self.t, self.values, self.order, self.extrapolate = t, v, order, bool(extrapolate)
        self._pchip = PchipInterpolator(t, v, extrapolate=False) if order == 3 else None

    def G(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.t[0], self.t[-1]
        if self.extrapolate:
            t = np.clip(t, lo, hi)
        elif np.any((t < lo) | (t > hi)):
            bad = t[(t < lo) | (t > hi)]
            raise EvalOutsideTable(f"|t| = {bad.flat[0]:.6g} outside table [{lo:.6g}, {hi:.6g}]")
        if self._pchip is not None:
            return self._pchip(t)
        return np.interp(t, self.t, self.values)

    def taylor(self, n):
        g = np.zeros(n + 1)
        if self.t[0] != 0.0:
            g[0] = self.values[0]
            return g
        if self._pchip is None:
            g[0] = self.values[0]
            if n >= 1:
                g[1] = (self.values[1] - self.values[0]) / (self.t[1] - self.t[0])
            return g
        for i in range(min(n, 3) + 1):
            g[i] = float(self._pchip.derivative(i)(0.0)) / math.factorial(i) if i else self.values[0]
        return g

    def default_tail(self, t_max):
        if self.extrapolate and self.values[-1] < 0:
            return TailMajorant(-self.values[-1], 0.0), t_max, "clamped-extrapolation"
        return ZERO_TAIL, min(t_max, self.t[-1]) if not self.extrapolate else t_max, "declared-default"

    def nonnegative(self):
        return bool(np.all(self.values >= 0))


class _SigmaForm(_GForm):
    """Closed-form warping function with exact derivatives."""

    def sigma(self, t):
        raise NotImplementedError

    def dsigma(self, t):
        raise NotImplementedError

    def d2sigma(self, t):
        raise NotImplementedError

    def log_sigma(self, t):
        raise NotImplementedError

    def dlog_sigma(self, t):
        raise NotImplementedError

    def sigma_taylor(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def vanish_radius(self) -> float:
        """First positive zero of sigma, or ``inf``."""
        return math.inf

    def taylor(self, n):
        # Taylor data of G = sigma''/sigma from the odd series of sigma.
        a = self.sigma_taylor(n + 3)
        s = Polynomial(a[1:])  # sigma / t
        d2 = Polynomial(a).deriv(2)  # sigma''
        num = Polynomial(d2.coef[1:]) if d2.coef.size > 1 else Polynomial([0.0])  # sigma'' / t
        # power-series division num / s
        out = np.zeros(n + 1)
        nc = np.zeros(n + 1)
        nc[: min(n + 1, num.coef.size)] = num.coef[: n + 1]
        sc = np.zeros(n + 1)
        sc[: min(n + 1, s.coef.size)] = s.coef[: n + 1]
        for k in range(n + 1):
            out[k] = (nc[k] - np.dot(out[:k], sc[k:0:-1])) / sc[0]
        return out


class EuclideanSigma(_SigmaForm):
    def sigma(self, t):
        return np.asarray(t, dtype=float) * 1.0

    def dsigma(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def d2sigma(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def log_sigma(self, t):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(t, dtype=float))

    def dlog_sigma(self, t):
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(t, dtype=float)

    def G(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def sigma_taylor(self, n):
        a = np.zeros(n + 1)
        a[1] = 1.0
        return a

    def default_tail(self, t_max):
        return ZERO_TAIL, t_max, "exact"

    def nonnegative(self):
        return True


class HyperbolicSigma(_SigmaForm):
    def __init__(self, k: float):
        if not k > 0:
            raise ProfileError("hyperbolic family needs k > 0")
        self.k = float(k)

    def sigma(self, t):
        k = self.k
        with np.errstate(over="ignore"):
            return np.sinh(k * np.asarray(t, dtype=float)) / k

    def dsigma(self, t):
        with np.errstate(over="ignore"):
            return np.cosh(self.k * np.asarray(t, dtype=float))

    def d2sigma(self, t):
        return self.k**2 * self.sigma(t)

    def log_sigma(self, t):
        k = self.k
        x = k * np.asarray(t, dtype=float)
        out = np.empty_like(x)
        big = x > 20.0
        out[big] = x[big] - math.log(2.0 * k) + np.log1p(-np.exp(-2.0 * x[big]))
        with np.errstate(divide="ignore"):
            out[~big] = np.log(np.sinh(x[~big]) / k)
        return out

    def dlog_sigma(self, t):
        x = self.k * np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.k / np.tanh(x)

    def G(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.k**2)

    def sigma_taylor(self, n):
        a = np.zeros(n + 1)
        for j in range(1, n + 1, 2):
            a[j] = self.k ** (j - 1) / math.factorial(j)
        return a

    def default_tail(self, t_max):
        return ZERO_TAIL, t_max, "exact"

    def nonnegative(self):
        return True


class SphericalSigma(_SigmaForm):
    def __init__(self, k: float):
        if not k > 0:
            raise ProfileError("spherical family needs k > 0")
        self.k = float(k)

    def sigma(self, t):
        return np.sin(self.k * np.asarray(t, dtype=float)) / self.k

    def dsigma(self, t):
        return np.cos(self.k * np.asarray(t, dtype=float))

    def d2sigma(self, t):
        return -self.k**2 * self.sigma(t)

    def log_sigma(self, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.sigma(t))

    def dlog_sigma(self, t):
        with np.errstate(divide="ignore"):
            return self.k / np.tan(self.k * np.asarray(t, dtype=float))

    def G(self, t):
        return np.full_like(np.asarray(t, dtype=float), -self.k**2)

    def sigma_taylor(self, n):
        a = np.zeros(n + 1)
        for j in range(1, n + 1, 2):
            a[j] = (-1) ** ((j - 1) // 2) * self.k ** (j - 1) / math.factorial(j)
        return a

    def vanish_radius(self):
        return math.pi / self.k

    def default_tail(self, t_max):
        return TailMajorant(self.k**2, 0.0), t_max, "exact"


class PolyExpSigma(_SigmaForm):
    """``sigma = P exp(Q)`` with ``P`` odd, ``P'(0) = 1`` and ``Q`` even, ``Q(0) = 0``."""

    def __init__(self, p, q):
        p = np.trim_zeros(np.asarray(p, dtype=float), "b")
        q = np.trim_zeros(np.asarray(q, dtype=float), "b")
        if p.size < 2 or p[0] != 0.0 or p[1] != 1.0:
            raise ProfileError("poly_exp needs P(0) = 0 and P'(0) = 1")
        if np.any(p[0::2] != 0.0):
            raise ProfileError("poly_exp needs an odd polynomial P")
        if q.size == 0:
            q = np.zeros(1)
        if q[0] != 0.0 or np.any(q[1::2] != 0.0):
            raise ProfileError("poly_exp needs an even polynomial Q with Q(0) = 0")
        self.P, self.Q = Polynomial(p), Polynomial(q)
        self.P1 = Polynomial(p[1:])  # P / t
        self.dP, self.d2P = self.P.deriv(), self.P.deriv(2)
        self.dQ, self.d2Q = self.Q.deriv(), self.Q.deriv(2)
        self.dP1 = self.P1.deriv()
        # sigma''/sigma = N / P with N = P'' + 2P'Q' + PQ'' + P Q'^2; N is odd here.
        N = self.d2P + 2 * self.dP * self.dQ + self.P * self.d2Q + self.P * self.dQ**2
        nc = np.trim_zeros(N.coef, "b")
        self.N1 = Polynomial(nc[1:] if nc.size > 1 else [0.0])
        roots = self.P1.roots()
        pos = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
        self._vanish = min(pos) if pos else math.inf

    def sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return self.P(t) * np.exp(self.Q(t))

    def dsigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return (self.dP(t) + self.P(t) * self.dQ(t)) * np.exp(self.Q(t))

    def d2sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return t * self.N1(t) * np.exp(self.Q(t))

    def log_sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(t) + np.log(self.P1(t)) + self.Q(t)

    def dlog_sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / t + self.dP1(t) / self.P1(t) + self.dQ(t)

    def G(self, t):
        t = np.asarray(t, dtype=float)
        return self.N1(t) / self.P1(t)

    def sigma_taylor(self, n):
        # exp(Q) via E' = Q'E
        q = np.zeros(n + 1)
        qc = self.Q.coef[: n + 1]
        q[: qc.size] = qc
        e = np.zeros(n + 1)
        e[0] = 1.0
        for k in range(1, n + 1):
            e[k] = sum(j * q[j] * e[k - j] for j in range(1, k + 1)) / k
        a = np.convolve(self.P.coef, e)[: n + 1]
        out = np.zeros(n + 1)
        out[: a.size] = a
        return out

    def vanish_radius(self):
        return self._vanish

    def default_tail(self, t_max):
        lead_n, lead_d = self.N1.coef[-1], self.P1.coef[-1]
        extra = [r.real for r in np.concatenate([self.N1.roots(), self.P1.roots()])
                 if abs(r.imag) < 1e-12 and r.real > t_max]
        if extra:
            t_max = max(extra) * 1.01 + 1.0
        ratio = lead_n / lead_d
        if ratio >= 0:
            return ZERO_TAIL, t_max, "exact"
        deg = (self.N1.coef.size - 1) - (self.P1.coef.size - 1)
        return TailMajorant(2.0 * abs(ratio), -deg), t_max, "asymptotic"

    def nonnegative(self):
        return bool(np.all(self.N1.coef >= 0) and np.all(self.P1.coef >= 0))


# ---------------------------------------------------------------------------
# mean curvature envelope


@dataclass(frozen=True)
class HEnvelope:
    """Nonnegative bound on the norm of the mean curvature as a function of r."""

    H0: float | None = 0.0
    r: tuple[float, ...] | None = None
    values: tuple[float, ...] | None = None

    @property
    def is_constant(self) -> bool:
        return self.r is None

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.is_constant:
            return np.full_like(r, self.H0)
        rr, vv = np.asarray(self.r), np.asarray(self.values)
        if rr.size == 1:
            return np.full_like(r, vv[0])
        return PchipInterpolator(rr, vv, extrapolate=False)(np.clip(r, rr[0], rr[-1]))

    def scaled(self, H0: float) -> "HEnvelope":
        return HEnvelope(H0=float(H0))

    def to_json(self):
        if self.is_constant:
            return self.H0
        return {"r": list(self.r), "H": list(self.values)}


def make_envelope(raw) -> HEnvelope:
    if raw is None:
        return HEnvelope(0.0)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        h = float(raw)
        if not math.isfinite(h):
            raise ProfileError("H must be finite")
        if h < 0:
            raise NegativeHEnvelope(f"H0 = {h} < 0")
        return HEnvelope(h)
    if isinstance(raw, Mapping) and "r" in raw and "H" in raw:
        r = np.asarray(raw["r"], dtype=float)
        v = np.asarray(raw["H"], dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size == 0:
            raise ProfileError("H table needs matching 1-D 'r' and 'H'")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ProfileError("H table entries must be finite")
        if np.any(np.diff(r) <= 0):
            raise NonMonotoneTable("H table radii must be strictly increasing")
        if np.any(v < 0):
            raise NegativeHEnvelope("H table has negative entries")
        return HEnvelope(None, tuple(r.tolist()), tuple(v.tolist()))
    raise ProfileError("H must be a number or {'r': [...], 'H': [...]}")


# ---------------------------------------------------------------------------
# the profile itself


@dataclass(frozen=True)
class ProfileSpec:
    kind: str
    family: str
    params: Mapping[str, Any]
    m: int
    l: int = 0
    r_phi: float = math.inf
    H: HEnvelope = field(default_factory=HEnvelope)
    tail_majorant: TailMajorant | None = None
    form: _GForm = field(default=None, repr=False, compare=False)

    @property
    def effective_dim(self) -> int:
        return self.m - self.l

    @property
    def is_sigma(self) -> bool:
        return self.kind == "closed_form_sigma"

    def eval_G(self, t):
        """``G(|t|)``; for closed-form sigma this is ``sigma''/sigma`` in cancellation-free form."""
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ProfileError("eval_G needs finite t")
        out = self.form.G(np.abs(t))
        return float(out) if out.ndim == 0 else out

    def G_taylor(self, n: int = TAYLOR_ORDER) -> np.ndarray:
        return self.form.taylor(n)

    def sigma_taylor(self, n: int = TAYLOR_ORDER) -> np.ndarray:
        """Taylor coefficients of sigma at 0 (``a_0 = 0``, ``a_1 = 1``)."""
        if self.is_sigma:
            return self.form.sigma_taylor(n)
        return sigma_series(self.G_taylor(n), n)

    def with_updates(self, **changes) -> "ProfileSpec":
        raw = self.to_json()
        for key, value in changes.items():
            raw[key] = value
        return make_profile(raw)

    def to_json(self) -> dict:
        prof = {"kind": self.kind, "family": self.family, "params": _jsonable(self.params)}
        if self.tail_majorant is not None:
            prof["tail_majorant"] = self.tail_majorant.to_dict()
        return {
            "profile": prof,
            "m": self.m,
            "l": self.l,
            "r_phi": "inf" if math.isinf(self.r_phi) else self.r_phi,
            "H": self.H.to_json(),
        }


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def sigma_series(g: np.ndarray, n: int) -> np.ndarray:
    """Taylor coefficients of the solution of sigma'' = G sigma, sigma(0)=0, sigma'(0)=1.

    ``g`` holds right-sided Taylor coefficients of ``G``; matching powers gives
    ``k (k-1) a_k = sum_{i+j=k-2} g_i a_j``.
    """
    a = np.zeros(n + 1)
    a[1] = 1.0
    gg = np.zeros(n + 1)
    gg[: min(n + 1, len(g))] = g[: n + 1]
    for k in range(2, n + 1):
        a[k] = sum(gg[i] * a[k - 2 - i] for i in range(k - 1)) / (k * (k - 1))
    return a


def _radius(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ProfileError(f"r_phi must be a number or 'inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProfileError(f"r_phi must be a number or 'inf', got {value!r}")
    r = float(value)
    if math.isnan(r):
        raise ProfileError("r_phi is NaN")
    if r <= 0:
        raise NonPositiveRadius(f"r_phi = {r} must be positive")
    return r


def _finite(x, name):
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProfileError(f"{name} must be numeric") from exc
    if not np.all(np.isfinite(arr)):
        raise ProfileError(f"{name} must be finite")
    return arr


def _build_form(kind: str, family: str, params: Mapping[str, Any]) -> _GForm:
    if kind == "closed_form_G":
        if family == "constant":
            if "k" in params:
                return ConstantG(float(_finite(params["k"], "k")) ** 2)
            return ConstantG(float(_finite(params.get("value", 0.0), "value")))
        if family == "polynomial":
            return PolynomialG(_finite(params["coeffs"], "coeffs"))
        if family == "power":
            return PowerG(float(_finite(params["scale"], "scale")),
                          float(_finite(params["exponent"], "exponent")))
        raise ProfileError(f"unknown G family {family!r}; choose from {G_FAMILIES}")
    if kind == "closed_form_sigma":
        if family == "euclidean":
            return EuclideanSigma()
        if family == "hyperbolic":
            return HyperbolicSigma(float(_finite(params.get("k", 1.0), "k")))
        if family == "spherical":
            return SphericalSigma(float(_finite(params.get("k", 1.0), "k")))
        if family == "poly_exp":
            return PolyExpSigma(_finite(params["p"], "p"), _finite(params.get("q", [0.0]), "q"))
        raise ProfileError(f"unknown sigma family {family!r}; choose from {SIGMA_FAMILIES}")
    if kind == "tabulated_G":
        return TabulatedG(params["t"], params["values"], int(params.get("order", 3)),
                          bool(params.get("extrapolate", False)))
    raise ProfileError(f"unknown profile kind {kind!r}; choose from {KINDS}")


def make_profile(raw_config: Mapping[str, Any]) -> ProfileSpec:
    """Validate a scenario-style mapping and build a :class:`ProfileSpec`.

    Expected keys: ``profile`` (``kind``, ``family``, ``params``, optional
    ``tail_majorant``), ``m``, ``l`` (default 0), ``r_phi`` (number or
    ``"inf"``), ``H`` (number or table).
    """
    if not isinstance(raw_config, Mapping):
        raise ProfileError("scenario must be a mapping")
    prof = raw_config.get("profile")
    if not isinstance(prof, Mapping):
        raise ProfileError("missing 'profile' section")
    kind = prof.get("kind")
    family = prof.get("family", "table" if kind == "tabulated_G" else None)
    params = prof.get("params", {}) or {}
    if not isinstance(params, Mapping):
        raise ProfileError("profile.params must be a mapping")

    m, l = raw_config.get("m"), raw_config.get("l", 0)
    if isinstance(m, bool) or not isinstance(m, int) or isinstance(l, bool) or not isinstance(l, int):
        raise DimensionMismatch("m and l must be integers")
    if m < 2:
        raise DimensionMismatch(f"m = {m} < 2")
    if l < 0:
        raise DimensionMismatch(f"l = {l} < 0")
    if l > 0 and m - l < 1:
        raise DimensionMismatch(f"product factor too large: m - l = {m - l} < 1")

    r_phi = _radius(raw_config.get("r_phi", "inf"))
    H = make_envelope(raw_config.get("H", 0.0))

    try:
        form = _build_form(kind, family, params)
    except KeyError as exc:
        raise ProfileError(f"missing profile parameter {exc}") from exc

    tail = None
    raw_tail = prof.get("tail_majorant")
    if isinstance(raw_tail, Mapping):
        tail = TailMajorant(float(_finite(raw_tail.get("coef", 0.0), "tail coef")),
                            float(_finite(raw_tail.get("exponent", 2.0), "tail exponent")))
        if tail.coef < 0:
            raise ProfileError("tail majorant coefficient must be >= 0")
    elif raw_tail in ("zero",):
        tail = ZERO_TAIL

    return ProfileSpec(kind=kind, family=family, params=_jsonable(dict(params)), m=m, l=l,
                       r_phi=r_phi, H=H, tail_majorant=tail, form=form)


# ---------------------------------------------------------------------------
# Kneser sufficient condition for sigma' >= 0

KNESER_BOUND = 0.25


@dataclass(frozen=True)
class KneserResult:
    guaranteed: bool
    sup_product: float
    arg_sup: float | None
    reason: str
    tail_source: str

    def to_dict(self) -> dict:
        return {"guaranteed": self.guaranteed, "sup_product": self.sup_product,
                "arg_sup": self.arg_sup, "reason": self.reason, "tail_source": self.tail_source}


def kneser_check(p: ProfileSpec, t_max: float, majorant: TailMajorant | None = None,
                 n_grid: int = 8001, rtol: float = 1e-9) -> KneserResult:
    """Evaluate ``sup_t t * int_t^inf G_-(s) ds`` and compare with 1/4.

    The integral is split at ``t_max``: the head is integrated numerically and
    the tail comes from a majorant (declared, or derived from the preset).
    A non-integrable majorant yields ``guaranteed=False`` with reason
    ``"tail-unbounded"``.  Only sufficiency is claimed.  ``rtol`` absorbs
    round-off when the supremum sits exactly on 1/4.
    """
    if majorant is None:
        majorant = p.tail_majorant
    if majorant is None:
        majorant, t_eff, source = p.form.default_tail(t_max)
    else:
        t_eff, source = t_max, "declared"

    if math.isinf(majorant.tail_integral(t_eff)):
        return KneserResult(False, math.inf, None, "tail-unbounded", source)

    if p.form.nonnegative():
        return KneserResult(True, 0.0, 0.0, "G nonnegative", source)

    def g_minus(s):
        return np.maximum(-p.form.G(np.asarray(s, dtype=float)), 0.0)

    tail_beyond = majorant.tail_integral(t_eff)
    grid = np.unique(np.concatenate([np.linspace(0.0, t_eff, n_grid),
                                     np.geomspace(1e-6, t_eff, n_grid // 4)]))
    vals = g_minus(grid)
    # integral from each grid point to t_eff
    head = integrate.cumulative_trapezoid(vals[::-1], -grid[::-1], initial=0.0)[::-1]
    prod = grid * (head + tail_beyond)
    k = int(np.argmax(prod))

    def product(t):
        val, _ = integrate.quad(g_minus, t, t_eff, limit=400, epsabs=1e-15, epsrel=1e-13)
        return t * (val + tail_beyond)

    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo and prod[k] > 0:
        res = optimize.minimize_scalar(lambda t: -product(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, hi)})
        best_t, best = float(res.x), -float(res.fun)
        if product(grid[k]) > best:
            best_t, best = float(grid[k]), product(grid[k])
    else:
        best_t, best = float(grid[k]), float(prod[k])

    beyond = majorant.sup_product(t_eff)
    if beyond > best:
        best, best_t = beyond, (math.inf if majorant.exponent <= 2.0 else
                                max(t_eff, 1.0 / (majorant.exponent - 2.0)))
    ok = best <= KNESER_BOUND * (1.0 + rtol)
    reason = "sup <= 1/4" if ok else "sup > 1/4 (sufficient condition fails; sigma' may still be >= 0)"
    return KneserResult(bool(ok), float(best), best_t, reason, source)
