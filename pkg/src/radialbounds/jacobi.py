"""Warping function: the singular Cauchy problem sigma'' = G sigma, sigma(0)=0, sigma'(0)=1.

Near the origin the odd power series of sigma is used directly.  From the
handover point ``t0`` an adaptive explicit Runge-Kutta method of order 8
(with 7th-order dense output) integrates ``(sigma, sigma')``.  When sigma grows
past :data:`LOG_SWITCH` the state is switched to ``(u, v) = (log sigma,
sigma'/sigma)`` which obeys ``u' = v`` and ``v' = G - v**2``; everything
downstream only needs ``log sigma`` and ``sigma'/sigma``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize
from scipy.integrate import solve_ivp

from .errors import JacobiError, SigmaVanished, StepUnderflow
from .profile import ProfileSpec, sigma_series

LOG_SWITCH = 1e150
T0_CAP = 0.05
R_CAP_DEFAULT = 50.0
SERIES_ORDER = 9  # coefficients a_0..a_9; a_8, a_9 only size the head


@dataclass(frozen=True)
class _Segment:
    """Piece of the solution on ``[a, b]``: ``series``, ``closed``, ``linear`` or ``log``."""

    kind: str
    a: float
    b: float
    sol: object = None


@dataclass(frozen=True)
class WarpingFunction:
    """Dense representation of sigma on ``[0, r_max]``.

    Attributes
    ----------
    grid : ndarray
        Strictly increasing radii starting at 0.
    sigma, sigma_prime : ndarray
        Values at ``grid``; ``sigma`` may be ``inf`` once it exceeds the float
        range, ``log_sigma`` and ``dlog_sigma`` stay finite.
    series_head : ndarray
        Odd Taylor coefficients ``a_0..a_7`` used on ``[0, t0]``.
    status : str
        ``"ok"``, ``"sigma_vanished"`` (then ``r_max == vanished_at``) or
        ``"step_underflow"``.
    """

    profile: ProfileSpec = field(repr=False)
    grid: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    sigma_prime: np.ndarray = field(repr=False)
    log_sigma: np.ndarray = field(repr=False)
    dlog_sigma: np.ndarray = field(repr=False)
    series_head: np.ndarray
    t0: float
    r_max: float
    tol: float
    status: str = "ok"
    vanished_at: float | None = None
    log_switch_at: float | None = None
    max_defect: float = 0.0
    _segments: tuple = field(default=(), repr=False)
    _omitted: np.ndarray = field(default=None, repr=False)

    # -- dense evaluation -------------------------------------------------

    def _pieces(self, r: np.ndarray):
        for seg in self._segments:
            yield seg, (r >= seg.a) & (r <= seg.b)

    def log_sigma_at(self, r) -> np.ndarray:
        """``log sigma(r)``; ``-inf`` at 0."""
        return self._eval(r)[0]

    def dlog_at(self, r) -> np.ndarray:
        """``sigma'(r)/sigma(r)``; ``inf`` at 0."""
        return self._eval(r)[1]

    def sigma_at(self, r) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self._eval(r)[0])

    def sigma_prime_at(self, r) -> np.ndarray:
        ls, dl = self._eval(r)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.exp(ls) * dl
        r = np.asarray(r, dtype=float)
        return np.where(r == 0.0, 1.0, out)

    def _eval(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r < 0) or np.any(r > self.r_max * (1 + 1e-12)):
            raise JacobiError(f"radius outside [0, {self.r_max:.6g}]")
        r = np.minimum(r, self.r_max)
        ls = np.empty_like(r)
        dl = np.empty_like(r)
        done = np.zeros(r.shape, dtype=bool)
        for seg, mask in self._pieces(r):
            mask &= ~done
            if not mask.any():
                continue
            x = r[mask]
            ls[mask], dl[mask] = _segment_eval(self, seg, x)
            done |= mask
        if scalar:
            return ls[0], dl[0]
        return ls, dl

    # -- lazy extension ----------------------------------------------------

    def extended(self, r_needed: float, r_cap: float = R_CAP_DEFAULT) -> "WarpingFunction":
        """Return a solution covering ``r_needed``, doubling ``r_max`` up to ``r_cap``."""
        if r_needed <= self.r_max or self.status != "ok":
            return self
        r_new = self.r_max
        while r_new < r_needed:
            r_new *= 2.0
        r_new = min(r_new, max(r_cap, r_needed))
        return solve_sigma(self.profile, r_new, self.tol)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "sigma", "sigma_prime", "log_sigma", "sigma_prime_over_sigma"])
            for row in zip(self.grid, self.sigma, self.sigma_prime, self.log_sigma, self.dlog_sigma):
                wr.writerow([repr(float(x)) for x in row])


def _series_eval(a: np.ndarray, x: np.ndarray):
    """``log sigma`` and ``sigma'/sigma`` from the odd series ``sum a_j x**j``."""
    s1 = Polynomial(a[1:])  # sigma / x
    ds1 = s1.deriv()
    q = s1(x)
    with np.errstate(divide="ignore"):
        ls = np.log(x) + np.log(q)
        dl = 1.0 / x + ds1(x) / q
    return ls, dl


def _segment_eval(w: WarpingFunction, seg: _Segment, x: np.ndarray):
    if seg.kind == "series":
        return _series_eval(w.series_head, x)
    if seg.kind == "closed":
        f = w.profile.form
        ls, dl = f.log_sigma(x), f.dlog_sigma(x)
        return np.asarray(ls, dtype=float), np.asarray(dl, dtype=float)
    y = seg.sol(x)
    if seg.kind == "linear":
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(y[0]), y[1] / y[0]
    return y[0], y[1]


def series_head(p: ProfileSpec, order: int = SERIES_ORDER) -> np.ndarray:
    """Taylor coefficients ``a_0..a_order`` of sigma at 0.

    Obtained from ``k (k-1) a_k = sum_{i+j=k-2} g_i a_j`` (or directly from the
    closed form), so ``a_1 = 1`` and ``a_3 = G(0)/6``.
    """
    if p.is_sigma:
        return p.form.sigma_taylor(order)
    return sigma_series(p.G_taylor(order), order)


def handover_point(a: np.ndarray, tol: float, cap: float = T0_CAP) -> float:
    """Largest ``t`` with every omitted term ``|a_n| t**(n-1)`` below ``tol``."""
    t0 = cap
    for n in range(8, a.size):
        if a[n] != 0.0:
            t0 = min(t0, (tol / abs(a[n])) ** (1.0 / (n - 1)))
    return t0


def _output_grid(r_lo: float, r_max: float, n: int = 2001) -> np.ndarray:
    g = np.concatenate([[0.0], np.geomspace(min(1e-6, r_max / 10), r_max, n), np.linspace(0.0, r_max, n)])
    return np.unique(g)


def _rtol(tol: float) -> float:
    # The step controller is run 1000x tighter than ``tol`` because the dense
    # interpolant (order 7) is less accurate than the steps themselves and the
    # defect is measured on the interpolant.
    return max(tol * 1e-3, 1e-13)


def _ivp_linear(G, a, b, y0, tol):
    def rhs(t, y):
        return [y[1], G(t) * y[0]]

    def vanish(t, y):
        return y[0]

    vanish.terminal, vanish.direction = True, -1

    def grow(t, y):
        return y[0] - LOG_SWITCH

    grow.terminal, grow.direction = True, 1
    return solve_ivp(rhs, (a, b), y0, method="DOP853", rtol=_rtol(tol), atol=_rtol(tol) * 1e-6,
                     dense_output=True, events=(vanish, grow))


def _ivp_log(G, a, b, y0, tol):
    # v' = G - v**2 is stiff once v is large (Jacobian -2v), hence an implicit method.
    def rhs(t, y):
        return [y[1], G(t) - y[1] * y[1]]

    def jac(t, y):
        return [[0.0, 1.0], [0.0, -2.0 * y[1]]]

    return solve_ivp(rhs, (a, b), y0, method="Radau", rtol=_rtol(tol), atol=_rtol(tol) * 1e-6,
                     dense_output=True, jac=jac)


def solve_sigma(p: ProfileSpec, r_max: float, tol: float = 1e-10,
                on_vanish: str = "raise") -> WarpingFunction:
    """Solve for the warping function on ``[0, r_max]``.

    Parameters
    ----------
    p : ProfileSpec
    r_max : float
        Right end of the requested window.
    tol : float
        Relative local error target in ``[1e-13, 1e-3]``.
    on_vanish : {"raise", "truncate"}
        With ``"truncate"`` a solution that reaches zero at ``r*`` is returned
        restricted to ``[0, r*]`` with ``status="sigma_vanished"`` instead of
        raising :class:`SigmaVanished`.

    Raises
    ------
    SigmaVanished
        sigma reaches zero at some ``r* < r_max`` (``exc.r_star``).
    StepUnderflow
        The integrator could not advance (``exc.last_good``).
    """
    if not (r_max > 0 and math.isfinite(r_max)):
        raise JacobiError("r_max must be positive and finite")
    if not (1e-13 <= tol <= 1e-3):
        raise JacobiError("tol must lie in [1e-13, 1e-3]")

    a = series_head(p)
    t0 = min(handover_point(a, tol), r_max / 2.0)
    if p.kind == "tabulated_G" and p.form.t[0] == 0.0:
        t0 = min(t0, p.form.t[1])
    head = a[:8].copy()
    segments = [_Segment("series", 0.0, t0)]
    status, vanished, log_at = "ok", None, None

    def G(t):
        return float(p.form.G(np.asarray(t)))

    if p.is_sigma:
        r_star = p.form.vanish_radius()
        end = r_max
        if r_star <= r_max:
            if on_vanish == "raise":
                raise SigmaVanished(r_star)
            status, vanished, end = "sigma_vanished", r_star, r_star
        segments.append(_Segment("closed", t0, end))
    else:
        ls0, dl0 = _series_eval(a, np.array([t0]))
        s0 = math.exp(ls0[0])
        y0 = [s0, s0 * dl0[0]]
        res = _ivp_linear(G, t0, r_max, y0, tol)
        if res.status == -1:
            raise StepUnderflow(float(res.t[-1]), f"integrator failed after r = {res.t[-1]:.6g}: {res.message}")
        end = float(res.t[-1])
        segments.append(_Segment("linear", t0, end, res.sol))
        if res.t_events[0].size:
            r_star = float(res.t_events[0][0])
            if on_vanish == "raise":
                raise SigmaVanished(r_star)
            status, vanished, end = "sigma_vanished", r_star, r_star
        elif res.t_events[1].size and end < r_max:
            log_at = end
            s, ds = res.y_events[1][0]
            res2 = _ivp_log(G, end, r_max, [math.log(s), ds / s], tol)
            if res2.status == -1:
                raise StepUnderflow(float(res2.t[-1]))
            end = float(res2.t[-1])
            segments.append(_Segment("log", log_at, end, res2.sol))

    w = WarpingFunction(profile=p, grid=np.zeros(1), sigma=np.zeros(1), sigma_prime=np.ones(1),
                        log_sigma=np.zeros(1), dlog_sigma=np.zeros(1), series_head=head, t0=t0,
                        r_max=end, tol=tol, status=status, vanished_at=vanished,
                        log_switch_at=log_at, _segments=tuple(segments), _omitted=a[8:])
    grid = _output_grid(t0, end)
    ls, dl = w._eval(grid)
    with np.errstate(over="ignore", invalid="ignore"):
        sig = np.exp(ls)
        sp = np.where(grid == 0.0, 1.0, sig * dl)
    w = replace(w, grid=grid, sigma=sig, sigma_prime=sp, log_sigma=ls, dlog_sigma=dl)
    return replace(w, max_defect=defect_norm(w))


def defect_norm(w: WarpingFunction, n: int = 400) -> float:
    """Max normalized ODE defect at midpoints of a uniform probe grid.

    In the direct region the defect is ``|sigma'' - G sigma| / (sigma (1 + |G|))``
    with ``sigma''`` from a fourth-order difference of ``sigma'`` (dense output);
    in the log region it is ``|v' + v**2 - G| / (1 + |G| + v**2)``.  Both are
    relative forms of the same residual.
    """
    p = w.profile
    lo = w.t0
    hi = w.r_max if w.status == "ok" else w.r_max * (1 - 1e-6)
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, n + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    if p.is_sigma:
        f = p.form
        with np.errstate(over="ignore", invalid="ignore"):
            s, s2 = f.sigma(mid), f.d2sigma(mid)
            g = f.G(mid)
            res = np.abs(s2 - g * s) / (np.abs(s2) + np.abs(g * s) + np.abs(s) * 1e-300)
        res = res[np.isfinite(s) & np.isfinite(s2)]
        return float(res.max()) if res.size else 0.0
    G = p.form.G(mid)
    _, v = w._eval(mid)
    h = np.minimum(1e-3 / np.maximum(1.0, np.abs(v)), (edges[1] - edges[0]) / 8)
    worst = 0.0
    for seg in w._segments[1:]:
        m = (mid >= seg.a + 2 * h) & (mid <= seg.b - 2 * h)
        if not m.any():
            continue
        x, hh, g = mid[m], h[m], G[m]
        ys = [seg.sol(x + k * hh) for k in (-2, -1, 1, 2)]
        y = seg.sol(x)
        d = (ys[0][1] - 8 * ys[1][1] + 8 * ys[2][1] - ys[3][1]) / (12 * hh)
        if seg.kind == "linear":
            r = np.abs(d - g * y[0]) / (np.abs(y[0]) * (1.0 + np.abs(g)))
        else:
            r = np.abs(d + y[1] ** 2 - g) / (1.0 + np.abs(g) + y[1] ** 2)
        worst = max(worst, float(r.max()))
    return worst


@dataclass(frozen=True)
class SignCheck:
    sigma_positive: bool
    sigma_prime_nonneg: bool
    first_violation: float | None

    def to_dict(self) -> dict:
        return {"sigma_positive": self.sigma_positive, "sigma_prime_nonneg": self.sigma_prime_nonneg,
                "first_violation": self.first_violation}


def check_positivity_monotonicity(w: WarpingFunction, R: float, n: int = 20001) -> SignCheck:
    """Scan ``(0, R]`` for ``sigma > 0`` and ``sigma' >= 0`` with threshold ``-tol``.

    The sign of ``sigma'`` is read from ``sigma'/sigma`` (same sign while
    sigma is positive), which stays finite in the log region.
    """
    if R > w.r_max * (1 + 1e-12):
        raise JacobiError(f"R = {R} beyond r_max = {w.r_max}")
    R = min(R, w.r_max)
    if w.status == "sigma_vanished" and R >= w.vanished_at:
        first = float(w.vanished_at)
        # sigma' must turn negative before sigma returns to zero
        fv = _first_sign_change(w, lambda x: w.dlog_at(x), min(R, first * (1 - 1e-9)), n)
        return SignCheck(False, False, fv if fv is not None else first)
    r = np.unique(np.concatenate([np.linspace(0.0, R, n)[1:], w.grid[(w.grid > 0) & (w.grid <= R)]]))
    with np.errstate(over="ignore"):
        sp = w.sigma_prime_at(r)
    ok_sigma = bool(np.all(np.isfinite(w.log_sigma_at(r))))
    thresh = -w.tol
    bad = np.where(np.isfinite(sp), sp < thresh, False)
    if not bad.any():
        return SignCheck(ok_sigma, True, None)
    k = int(np.argmax(bad))
    lo = r[k - 1] if k > 0 else 0.0
    fv = float(r[k])
    if k > 0:
        try:
            fv = optimize.brentq(lambda x: float(w.sigma_prime_at(x)) - thresh, lo, r[k], xtol=1e-13)
        except ValueError:
            pass
    return SignCheck(ok_sigma, False, fv)


def _first_sign_change(w, f, R, n):
    r = np.linspace(0.0, R, n)[1:]
    vals = f(r)
    bad = vals < 0
    if not bad.any():
        return None
    k = int(np.argmax(bad))
    if k == 0:
        return float(r[0])
    return optimize.brentq(lambda x: float(f(x)), r[k - 1], r[k], xtol=1e-13)
