"""Isoperimetric ratios of model balls and the exit-time integral.

Everything is driven by the exit-time derivative

    y(r) = V(r) / sigma(r)**(d-1) = 1 / I_d(r),

which obeys ``y' = 1 - phi' y`` with ``phi = (d-1) log sigma``.  Between grid
nodes ``a < b`` the exact update is

    y(b) = y(a) exp(phi(a) - phi(b)) + int_a^b exp(phi(s) - phi(b)) ds,

whose integrand never exceeds one where sigma is increasing, so no overflow
occurs however fast sigma grows.  The integral is taken with Gauss-Legendre
panels graded towards ``b``.  ``V`` is recovered in log form as
``log y + phi``.  The cumulative integral ``F = int_0^r y`` uses the quintic
Hermite rule with ``y'`` and ``y''`` from the ODE.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize

from .errors import DimensionMismatch, SigmaNotPositive
from .jacobi import WarpingFunction

GL_NODES = 20
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)
_GL12_X, _GL12_W = np.polynomial.legendre.leggauss(12)
MAX_PANELS = 60
R_START = 1e-6
PHI_QUINTIC_MAX = 1e4


# ---------------------------------------------------------------------------
# tail classification


@dataclass(frozen=True)
class TailStatus:
    """Three-valued verdict on ``int_0^{r_phi} I^{-1}``.

    ``kind`` is ``"converged"`` (``value`` is the integral including the
    extrapolated tail), ``"divergent"`` (``witness`` is a positive lower bound
    of ``I^{-1}`` on ``window``) or ``"inconclusive"`` (``R_reached``).
    """

    kind: str
    value: float | None = None
    tail_estimate: float | None = None
    witness: float | None = None
    window: tuple[float, float] | None = None
    R_reached: float | None = None
    ratios: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "tail_estimate": self.tail_estimate,
                "witness": self.witness, "window": list(self.window) if self.window else None,
                "R_reached": self.R_reached, "ratios": list(self.ratios)}


# ---------------------------------------------------------------------------
# the table


@dataclass(frozen=True)
class RatioTable:
    """Sampled isoperimetric data of dimension ``dim`` on ``[0, R]``.

    ``grid`` starts at ``R_START > 0``; the origin itself is the limit where
    ``I r -> dim``.  ``log_V`` is always stored; ``V`` is its exponential and
    overflows to ``inf`` for fast-growing sigma.
    """

    w: WarpingFunction = field(repr=False)
    dim: int
    R: float
    r_phi: float
    grid: np.ndarray = field(repr=False)
    log_sigma: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    log_V: np.ndarray = field(repr=False)
    I: np.ndarray = field(repr=False)
    script_I: np.ndarray = field(repr=False)
    inv_I_cum: np.ndarray = field(repr=False)
    tail_status: TailStatus
    tol: float
    tail_tol: float
    _series: tuple = field(repr=False, default=())

    @property
    def V(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_V)

    @property
    def sigma(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_sigma)

    @property
    def log_representation(self) -> bool:
        """True once sigma**(d-1) or V leaves the double range."""
        return bool(np.any(self.log_V > 700.0) or np.any(self.log_sigma * (self.dim - 1) > 700.0))

    # -- off-grid evaluation ---------------------------------------------------

    def inv_I_at(self, r) -> np.ndarray:
        """``I^{-1}(r)``, evaluated from the nearest grid node to the left."""
        return _local(self, r)[0]

    def I_at(self, r) -> np.ndarray:
        return 1.0 / self.inv_I_at(r)

    def F_at(self, r) -> np.ndarray:
        """Exit-time profile ``F(r) = int_0^r I^{-1}``."""
        return _local(self, r)[1]

    def script_I_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(over="ignore"):
            return self.I_at(r) * np.exp(self.w.log_sigma_at(r))

    def to_csv(self, path) -> None:
        """Write r, sigma, sigma'/sigma, V (or log V), I, script I, F."""
        use_log = self.log_representation
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "sigma", "sigma_prime_over_sigma", "V_or_logV", "V_is_log",
                         "I", "script_I", "inv_I_cum"])
            Vcol = self.log_V if use_log else self.V
            for row in zip(self.grid, self.sigma, self.v, Vcol, self.I, self.script_I, self.inv_I_cum):
                vals = [repr(float(x)) for x in row]
                vals.insert(4, str(int(use_log)))
                wr.writerow(vals)


# ---------------------------------------------------------------------------
# construction


def _series_coeffs(w: WarpingFunction, d: int):
    """Polynomials for the exact head ``y = r * sum c_j r^j/(j+d) / S(r)**(d-1)``."""
    S = Polynomial(w.series_head[1:])  # sigma / r
    Sd = S ** (d - 1)
    c = Sd.coef
    num = Polynomial(c / (np.arange(c.size) + d))
    return S, Sd, num


def _series_y(series, r):
    S, Sd, num = series
    return r * num(r) / Sd(r)


def _series_z(series, r):
    r = np.asarray(r, dtype=float)
    x = 0.5 * (_GL12_X[None, :] + 1.0) * r[..., None]
    return 0.5 * r * (_series_y(series, x) @ _GL12_W)


def _panel_count(kappa):
    n = np.ceil(np.log2(np.maximum(kappa, 1.0))) + 1
    return np.clip(n, 1, MAX_PANELS).astype(int)


def _J(w: WarpingFunction, d: int, a, b, phi_b, dphi_a, dphi_b):
    """``int_a^b exp(phi(s) - phi(b)) ds`` for arrays of intervals."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    kappa = (b - a) * np.maximum(np.abs(dphi_a), np.abs(dphi_b))
    npan = _panel_count(kappa)
    out = np.zeros(a.shape)
    for n in np.unique(npan):
        idx = np.nonzero(npan == n)[0]
        aa, bb = a[idx], b[idx]
        width = bb - aa
        j = np.arange(n + 1)
        frac = np.where(j == 0, 1.0, 2.0 ** (-j.astype(float)))
        frac[-1] = 0.0
        edges = bb[:, None] - width[:, None] * frac[None, :]  # (k, n+1)
        lo, hi = edges[:, :-1], edges[:, 1:]
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (hi + lo))[..., None] + half[..., None] * _GL_X  # (k, n, G)
        phi = (d - 1) * w.log_sigma_at(nodes.ravel()).reshape(nodes.shape)
        vals = np.exp(phi - phi_b[idx][:, None, None])
        out[idx] = np.sum(half * (vals @ _GL_W), axis=1)
    return out


def _derivs(d, y, v, G):
    """``y'`` and ``y''`` from ``y' = 1 - phi' y`` with ``phi' = (d-1) v``."""
    dphi = (d - 1) * v
    d2phi = (d - 1) * (G - v * v)
    y1 = 1.0 - dphi * y
    y2 = -d2phi * y - dphi * y1
    return y1, y2


def _hermite(h, ya, yb, y1a, y1b, y2a, y2b, phi_mag):
    """Hermite quadrature of ``y`` over intervals of length ``h``.

    Quintic (uses ``y''``) while ``|phi|`` is moderate.  Once ``|phi|`` is
    large its absolute rounding error, multiplied by ``phi'`` in ``y''``,
    swamps the correction, so the cubic rule is used there instead.
    """
    quintic = h / 2 * (ya + yb) + h * h / 10 * (y1a - y1b) + h ** 3 / 120 * (y2a + y2b)
    cubic = h / 2 * (ya + yb) + h * h / 12 * (y1a - y1b)
    return np.where(phi_mag < PHI_QUINTIC_MAX, quintic, cubic)


def _make_grid(t0: float, R: float, n: int) -> np.ndarray:
    head = np.geomspace(R_START, t0, 80) if t0 > R_START else np.array([R_START])
    body = [np.linspace(t0, R, n), np.geomspace(t0, R, n), [1e-3, 1e-2, R]]
    pows = 2.0 ** np.arange(-10, 12)
    body.append(pows[(pows > t0) & (pows < R)])
    g = np.unique(np.concatenate([head] + [np.asarray(b, float) for b in body]))
    return g[(g >= R_START) & (g <= R)]


def build_ratio_table(w: WarpingFunction, d: int, R: float, tol: float | None = None,
                      r_phi: float = math.inf, n_grid: int = 1000, tail_tol: float = 1e-6,
                      r_cap: float | None = None) -> RatioTable:
    """Tabulate ``V``, ``I_d``, script ``I_d`` and ``F = int I_d^{-1}`` on ``[0, R]``.

    Parameters
    ----------
    w : WarpingFunction
        Extended on demand when ``R > w.r_max``.
    d : int
        Effective dimension, at least 2.
    R : float
        Right end of the table (``r_phi`` when finite, else the cap).
    r_phi : float
        Extrinsic radius, used only to label the tail verdict.
    tail_tol : float
        Relative size the extrapolated tail must fall under to call the
        improper integral converged.

    Raises
    ------
    SigmaNotPositive
        sigma vanishes before ``R``.
    """
    if d < 2:
        raise DimensionMismatch(f"effective dimension d = {d} < 2; ratios degenerate")
    if R > w.r_max:
        w = w.extended(R, r_cap=max(R, r_cap or 0.0))
    if w.status == "sigma_vanished" and w.vanished_at <= R:
        raise SigmaNotPositive(f"sigma vanishes at r* = {w.vanished_at:.6g} before R = {R:.6g}")
    if R > w.r_max * (1 + 1e-12):
        raise SigmaNotPositive(f"warping function only reaches r = {w.r_max:.6g} < R = {R:.6g}")
    tol = w.tol if tol is None else tol

    t0 = min(w.t0, R)
    grid = _make_grid(t0, R, n_grid)
    log_sigma, v = w._eval(grid)
    G = np.asarray(w.profile.form.G(grid), dtype=float)
    series = _series_coeffs(w, d)

    y = np.empty_like(grid)
    z = np.empty_like(grid)
    head = grid <= t0
    y[head] = _series_y(series, grid[head])
    z[head] = _series_z(series, grid[head])

    k0 = int(np.count_nonzero(head)) - 1
    if k0 + 1 < grid.size:
        phi = (d - 1) * log_sigma
        dphi = (d - 1) * v
        a, b = grid[k0:-1], grid[k0 + 1:]
        J = _J(w, d, a, b, phi[k0 + 1:], dphi[k0:-1], dphi[k0 + 1:])
        decay = np.exp(phi[k0:-1] - phi[k0 + 1:])
        for i in range(k0 + 1, grid.size):
            y[i] = y[i - 1] * decay[i - 1 - k0] + J[i - 1 - k0]
        y1, y2 = _derivs(d, y, v, G)
        steps = _hermite(np.diff(grid[k0:]), y[k0:-1], y[k0 + 1:], y1[k0:-1], y1[k0 + 1:],
                         y2[k0:-1], y2[k0 + 1:], np.maximum(np.abs(phi[k0:-1]), np.abs(phi[k0 + 1:])))
        z[k0 + 1:] = z[k0] + np.cumsum(steps)

    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        bad = grid[~(np.isfinite(y) & (y > 0))][0]
        raise SigmaNotPositive(f"ratio data break down at r = {bad:.6g}")

    log_V = np.log(y) + (d - 1) * log_sigma
    I = 1.0 / y
    with np.errstate(over="ignore"):
        script_I = I * np.exp(log_sigma)

    table = RatioTable(w=w, dim=d, R=float(R), r_phi=float(r_phi), grid=grid, log_sigma=log_sigma,
                       v=v, y=y, log_V=log_V, I=I, script_I=script_I, inv_I_cum=z,
                       tail_status=TailStatus("inconclusive", R_reached=float(R)), tol=tol,
                       tail_tol=tail_tol, _series=series)
    status = integral_inv_I(table, r_phi)
    return _with_tail(table, status)


def _with_tail(t: RatioTable, status: TailStatus) -> RatioTable:
    from dataclasses import replace

    return replace(t, tail_status=status)


def _local(t: RatioTable, r):
    """``(y, z)`` at arbitrary radii from the grid node on the left."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0) or np.any(r > t.R * (1 + 1e-12)):
        raise ValueError(f"radius outside the table range [0, {t.R:.6g}]")
    r = np.minimum(r, t.R)
    y = np.empty_like(r)
    z = np.empty_like(r)
    t0 = min(t.w.t0, t.R)
    head = r <= t0
    if head.any():
        rr = r[head]
        with np.errstate(invalid="ignore", divide="ignore"):
            y[head] = np.where(rr > 0, _series_y(t._series, rr), 0.0)
        z[head] = np.where(rr > 0, _series_z(t._series, rr), 0.0)
    rest = ~head
    if rest.any():
        d = t.dim
        x = r[rest]
        k = np.searchsorted(t.grid, x, side="right") - 1
        a = t.grid[k]
        ls, v = t.w._eval(x)
        phi_x = (d - 1) * ls
        phi_a = (d - 1) * t.log_sigma[k]
        J = _J(t.w, d, a, x, phi_x, (d - 1) * t.v[k], (d - 1) * v)
        yx = t.y[k] * np.exp(phi_a - phi_x) + J
        G = np.asarray(t.w.profile.form.G(np.concatenate([x, a])), dtype=float)
        y1x, y2x = _derivs(d, yx, v, G[: x.size])
        y1a, y2a = _derivs(d, t.y[k], t.v[k], G[x.size:])
        y[rest] = yx
        z[rest] = t.inv_I_cum[k] + _hermite(x - a, t.y[k], yx, y1a, y1x, y2a, y2x,
                                            np.maximum(np.abs(phi_a), np.abs(phi_x)))
    if scalar:
        return y[0], z[0]
    return y, z


# ---------------------------------------------------------------------------
# diagnostics


def integral_inv_I(t: RatioTable, r_phi: float | None = None) -> TailStatus:
    """Classify ``int_0^{r_phi} I^{-1}``.

    Finite ``r_phi`` inside the table gives ``converged`` with ``F(r_phi)``.
    For ``r_phi = inf`` the contributions of the windows ``[2^(k-1), 2^k]``
    fully inside the table are compared: two successive ratios ``<= 1/2`` and a
    geometric tail below ``tail_tol`` times the value mean convergence;
    ``I^{-1}`` bounded below on the last two windows without halving means
    divergence; anything else is inconclusive.
    """
    r_phi = t.r_phi if r_phi is None else r_phi
    if math.isfinite(r_phi):
        if r_phi > t.R * (1 + 1e-12):
            return TailStatus("inconclusive", R_reached=t.R)
        val = float(t.F_at(r_phi))
        return TailStatus("converged", value=val, tail_estimate=0.0)

    edges = [0.0, 1.0]
    while edges[-1] * 2.0 <= t.R * (1 + 1e-12):
        edges.append(edges[-1] * 2.0)
    if len(edges) < 4:
        return TailStatus("inconclusive", R_reached=t.R)
    e = np.array(edges)
    F = t.F_at(e)
    contrib = np.diff(F)
    ratios = contrib[1:] / contrib[:-1]
    value = float(F[-1])
    q = float(ratios[-1])
    if ratios[-1] <= 0.5 and ratios[-2] <= 0.5:
        tail = float(contrib[-1] * q / (1.0 - q))
        if tail < t.tail_tol * (value + tail):
            return TailStatus("converged", value=value + tail, tail_estimate=tail,
                              ratios=tuple(float(x) for x in ratios))
    lo, hi = e[-3], e[-1]
    mask = (t.grid >= lo) & (t.grid <= hi)
    ywin = t.y[mask]
    c = float(ywin.min())
    y_start, y_end = float(t.inv_I_at(lo)), float(t.inv_I_at(hi))
    if c > 0 and y_end / y_start >= 0.5:
        return TailStatus("divergent", witness=c, window=(float(lo), float(hi)), R_reached=t.R,
                          ratios=tuple(float(x) for x in ratios))
    return TailStatus("inconclusive", R_reached=t.R, ratios=tuple(float(x) for x in ratios))


@dataclass(frozen=True)
class MonotoneCheck:
    nondecreasing: bool
    first_violation: float | None
    margin_function_min: float

    def to_dict(self) -> dict:
        return {"nondecreasing": self.nondecreasing, "first_violation": self.first_violation,
                "margin_function_min": self.margin_function_min}


def margin_function(t: RatioTable, r) -> np.ndarray:
    """``q = d (sigma'/sigma) V / sigma**(d-1) - 1``; script I is nondecreasing iff ``q >= 0``.

    This is ``(d sigma' V - sigma**d) / sigma**d``, finite in the log regime.
    """
    r = np.asarray(r, dtype=float)
    return t.dim * t.w.dlog_at(r) * t.inv_I_at(r) - 1.0


def check_script_I_monotone(t: RatioTable, interval: tuple[float, float] | None = None) -> MonotoneCheck:
    """Sign test of the margin function on the grid and all cell midpoints."""
    lo, hi = interval if interval is not None else (0.0, t.R)
    hi = min(hi, t.R)
    g = t.grid[(t.grid >= max(lo, R_START)) & (t.grid <= hi)]
    q_nodes = t.dim * t.v[(t.grid >= max(lo, R_START)) & (t.grid <= hi)] * t.y[
        (t.grid >= max(lo, R_START)) & (t.grid <= hi)] - 1.0
    mids = 0.5 * (g[1:] + g[:-1])
    r = np.concatenate([g, mids])
    q = np.concatenate([q_nodes, margin_function(t, mids)])
    order = np.argsort(r)
    r, q = r[order], q[order]
    thresh = -t.dim * t.tol
    bad = q < thresh
    qmin = float(q.min())
    if not bad.any():
        return MonotoneCheck(True, None, qmin)
    k = int(np.argmax(bad))
    fv = float(r[k])
    if k > 0:
        try:
            fv = optimize.brentq(lambda x: float(margin_function(t, x)) - thresh, r[k - 1], r[k],
                                 xtol=1e-14)
        except ValueError:
            pass
    return MonotoneCheck(False, fv, qmin)


@dataclass(frozen=True)
class InfResult:
    """Infimum of ``I_d`` over ``[0, r_phi]`` (or the computed window).

    ``argmin`` is a radius, or ``None`` with ``limit_governed`` set when the
    minimum sits at the right end of an unbounded window.  ``analytic_floor``
    is ``(d-1) sigma'/sigma`` at ``r_phi`` (or its detected limit).
    """

    value: float
    argmin: float | None
    limit_governed: bool
    analytic_floor: float | None
    floor_note: str
    unbounded: bool = False
    label: str = "upper estimate for the Cheeger constant of the model"

    @property
    def bound_value(self) -> float:
        """Value safe to use in lower bounds.

        On an unbounded window the limit at infinity competes with the window
        minimum: the detected limit ``(d-1) lim sigma'/sigma`` if there is
        one, otherwise 0 when ``I_d`` is still decreasing at the window end.
        """
        if not self.unbounded:
            return self.value
        if self.analytic_floor is None:
            return 0.0 if self.limit_governed else self.value
        return min(self.value, self.analytic_floor)

    def to_dict(self) -> dict:
        return {"value": self.value, "argmin": "limit at r_phi" if self.limit_governed else self.argmin,
                "limit_governed": self.limit_governed, "bound_value": self.bound_value,
                "analytic_floor": self.analytic_floor, "floor_note": self.floor_note,
                "label": self.label}


def inf_I(t: RatioTable, r_phi: float | None = None) -> InfResult:
    """Grid scan of ``I_d`` plus golden-section refinement on +-2 cells."""
    r_phi = t.r_phi if r_phi is None else r_phi
    end = min(r_phi, t.R)
    mask = t.grid <= end * (1 + 1e-12)
    g, I = t.grid[mask], t.I[mask]
    k = int(np.argmin(I))
    d = t.dim

    if math.isfinite(r_phi):
        floor = float((d - 1) * t.w.dlog_at(end))
        note = "(d-1) sigma'/sigma at r_phi"
    else:
        vR, vh = float(t.w.dlog_at(t.R)), float(t.w.dlog_at(t.R / 2))
        if abs(vR - vh) <= 1e-6 * abs(vR):
            floor, note = float((d - 1) * vR), "(d-1) lim sigma'/sigma (detected limit)"
        elif vR > vh:
            floor, note = math.inf, "sigma'/sigma increasing without detected limit"
        else:
            floor, note = None, "no limit of sigma'/sigma detected"

    if k == g.size - 1:
        limit = not math.isfinite(r_phi)
        return InfResult(float(I[k]), None if limit else float(g[k]), limit, floor, note, limit)
    if k < 2:
        lo_i, hi_i = 0, min(k + 2, g.size - 1)
    else:
        lo_i, hi_i = k - 2, min(k + 2, g.size - 1)
    f = lambda x: float(t.I_at(x))  # noqa: E731
    try:
        res = optimize.minimize_scalar(f, bracket=(g[lo_i], g[k], g[hi_i]), method="golden",
                                       options={"xtol": 1e-10})
        x, val = float(res.x), float(res.fun)
        if not (g[lo_i] <= x <= g[hi_i]) or val > I[k]:
            x, val = float(g[k]), float(I[k])
    except ValueError:
        x, val = float(g[k]), float(I[k])
    return InfResult(val, x, False, floor, note, not math.isfinite(r_phi))


def riccati_residual(t: RatioTable, r, h: float | None = None) -> np.ndarray:
    """``I' + I**2 - (d-1)(sigma'/sigma) I`` with ``I'`` from a centered difference.

    The default step ``1e-4 min(1, r)`` keeps the truncation error of the
    difference small near the pole, where ``I ~ d/r``.
    """
    r = np.asarray(r, dtype=float)
    if h is None:
        h = 1e-4 * np.minimum(1.0, r)
    Ip = (t.I_at(r + h) - t.I_at(r - h)) / (2 * h)
    I = t.I_at(r)
    return Ip + I * I - (t.dim - 1) * t.w.dlog_at(r) * I
