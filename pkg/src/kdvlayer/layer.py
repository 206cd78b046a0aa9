"""Dispersive boundary-layer profiles in the fast variable y = x / eps.

For frozen ``t`` the layer ``V`` solves ``V'' + f(u0 + V) - f(u0) = 0`` with
``V(0) = Vbar`` and ``V -> 0``.  Its first integral ``F(u0, V) + V'^2 / 2 = 0``
reduces the problem to the first-order ODE ``V' = -sign(V) sqrt(-2 F)``, which
is integrated here in the variable ``log|V|``:

    d/dy log|V| = -sqrt(-2 q(V)),   q(V) = F(u0, V) / V**2 = int_0^1 (1-s) f'(u0+sV) ds

``q`` is smooth and ``<= -c/2``, so the log form has a bounded right-hand side,
keeps the sign of ``Vbar`` and resolves the exponential tail to full relative
accuracy.  Time derivatives of ``V`` solve linear problems
``f'(u0 + V) Z + Z'' + sigma = 0`` discretised by a tridiagonal scheme.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .errors import CoverageError, DegenerateFitError, ModelConsistencyError
from .flux import potential_fast
from .hyperbolic import boundary_trace

ODE_RTOL = 1e-10
TAIL_FLOOR = 1e-14
KINDS = ("V", "dtV", "dttV", "dtttV")


@dataclass
class LayerProfile:
    u0: float
    Vbar: float
    y: np.ndarray
    values: np.ndarray
    kind: str = "V"
    slope: Optional[np.ndarray] = None
    decay_rate: float = float("nan")


def layer_extent(model, Vbar):
    """Truncation length max(40/sqrt(c), y where |Vbar| e^{-sqrt(c) y} < 1e-14)."""
    sc = math.sqrt(model.c)
    y_tail = math.log(max(abs(Vbar), TAIL_FLOOR) / TAIL_FLOOR) / sc
    return max(40.0 / sc, y_tail)


def _q(model, u0, V):
    V = np.asarray(V, dtype=float)
    small = V == 0.0
    Vs = np.where(small, 1.0, V)
    q = potential_fast(model, u0, Vs) / (Vs * Vs)
    return np.where(small, 0.5 * model.d1(u0), q)


def layer_slope(model, u0, V):
    """dV/dy from the first integral: -V sqrt(-2 q(V))."""
    q = _q(model, u0, V)
    return -np.asarray(V) * np.sqrt(np.maximum(-2.0 * q, 0.0))


def solve_profile(model, u0, Vbar, ygrid, rtol=ODE_RTOL):
    """Boundary-layer profile V on ``ygrid`` (which must start at 0)."""
    y = np.asarray(ygrid, dtype=float)
    if y.ndim != 1 or y.size < 1 or y[0] != 0.0 or np.any(np.diff(y) <= 0):
        raise ValueError("ygrid must be increasing and start at 0")
    u0, Vbar = float(u0), float(Vbar)
    model.check_range(u0, u0 + Vbar, what="layer segment [u0, u0+Vbar]")
    if Vbar == 0.0:
        zero = np.zeros_like(y)
        return LayerProfile(u0, Vbar, y, zero, "V", zero.copy(), float("nan"))

    sign = math.copysign(1.0, Vbar)
    q_bar = float(_q(model, u0, Vbar))
    if q_bar > 0 or float(_q(model, u0, 0.0)) > 0:
        raise ModelConsistencyError(f"F(u0, V) > 0 on the layer segment (u0={u0}, Vbar={Vbar})")

    def rhs(_, psi):
        V = sign * math.exp(psi[0])
        q = float(_q(model, u0, V))
        if q > 0:
            raise ModelConsistencyError(f"F(u0, V) > 0 at V={V:.6g}")
        return [-math.sqrt(-2.0 * q)]

    psi0 = math.log(abs(Vbar))
    sol = integrate.solve_ivp(rhs, (0.0, float(y[-1])), [psi0], method="RK45",
                              t_eval=y, rtol=rtol, atol=rtol)
    if not sol.success:
        raise ModelConsistencyError(f"layer ODE failed: {sol.message}")
    values = sign * np.exp(sol.y[0])
    values[0] = Vbar
    slope = layer_slope(model, u0, values)
    prof = LayerProfile(u0, Vbar, y, values, "V", slope)
    try:
        prof.decay_rate = fit_decay_rate(prof)
    except DegenerateFitError:
        pass
    return prof


def profile_residual(model, profile):
    """max |f(u0+V) - f(u0) + D2 V| over interior points (nonuniform D2 allowed)."""
    y, V = profile.y, profile.values
    if y.size < 3:
        raise ValueError("profile_residual needs at least 3 grid points")
    h0 = np.diff(y)[:-1]
    h1 = np.diff(y)[1:]
    d2 = 2.0 * ((V[2:] - V[1:-1]) / h1 - (V[1:-1] - V[:-2]) / h0) / (h0 + h1)
    res = model.f(profile.u0 + V[1:-1]) - model.f(profile.u0) + d2
    return float(np.max(np.abs(res)))


def solve_layer_equation(model, baseV, sigma, wall_value, kind="dtV"):
    """Solve f'(u0+V) Z + Z'' + sigma = 0 with Z(0)=wall_value, Z(y_end)=0."""
    y = baseV.y
    n = y.size
    if n < 3:
        raise ValueError("need at least 3 grid points")
    coef = model.d1(baseV.u0 + baseV.values)
    if np.any(coef >= 0):
        raise ModelConsistencyError("f'(u0+V) >= 0: layer operator is not negative definite")
    h = np.diff(y)
    hl, hr = h[:-1], h[1:]
    lower = 2.0 / (hl * (hl + hr))
    upper = 2.0 / (hr * (hl + hr))
    diag = coef[1:-1] - lower - upper
    rhs = -np.asarray(sigma, dtype=float)[1:-1].copy()
    rhs[0] -= lower[0] * wall_value
    m = n - 2
    ab = np.zeros((3, m))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    Z = np.empty(n)
    Z[0] = wall_value
    Z[-1] = 0.0
    Z[1:-1] = solve_banded((1, 1), ab, rhs) if m > 0 else []
    prof = LayerProfile(baseV.u0, baseV.Vbar, y, Z, kind)
    try:
        prof.decay_rate = fit_decay_rate(prof)
    except DegenerateFitError:
        pass
    return prof


def solve_dtV(model, u0, du0, wall_value, baseV):
    """Z = dV/dt: f'(u0+V) Z + Z'' = -[f'(u0+V) - f'(u0)] du0, Z(0) = wall_value."""
    if baseV.kind != "V":
        raise ValueError("baseV must be a profile of kind 'V'")
    if not np.isclose(baseV.u0, u0):
        raise ValueError("baseV was computed for a different u0")
    sigma = dt_source(model, u0, du0, baseV.values)
    return solve_layer_equation(model, baseV, sigma, wall_value, kind="dtV")


def dt_source(model, u0, du0, V):
    return (model.d1(u0 + V) - model.d1(u0)) * du0


def dtt_source(model, u0, du0, ddu0, V, Vt):
    # d/dt of dt_source plus the terms moved off the operator:
    #   f''(s)(u0' + V_t)^2 - f''(u0) u0'^2 + [f'(s) - f'(u0)] u0'',  s = u0 + V
    s = u0 + V
    return (model.d2(s) * (du0 + Vt) ** 2 - model.d2(u0) * du0 ** 2
            + (model.d1(s) - model.d1(u0)) * ddu0)


def dttt_source(model, u0, du0, ddu0, dddu0, V, Vt, Vtt):
    # third t-derivative of f(u0+V) - f(u0), minus f'(s) V_ttt:
    #   f'''(s) a^3 - f'''(u0) u0'^3 + 3 f''(s) a b - 3 f''(u0) u0' u0''
    #   + [f'(s) - f'(u0)] u0''',   a = u0' + V_t,  b = u0'' + V_tt
    s = u0 + V
    a = du0 + Vt
    b = ddu0 + Vtt
    return (model.d3(s) * a ** 3 - model.d3(u0) * du0 ** 3
            + 3.0 * model.d2(s) * a * b - 3.0 * model.d2(u0) * du0 * ddu0
            + (model.d1(s) - model.d1(u0)) * dddu0)


def fit_decay_rate(profile, floor=1e-13, tail_fraction=1e-3):
    """Least-squares exponential rate of |values| over the tail window.

    The window holds the points with ``floor < |V| <= tail_fraction * max|V|``;
    if fewer than 10 such points exist, the later half of all points above the
    floor is used instead.
    """
    y = np.asarray(profile.y)
    a = np.abs(np.asarray(profile.values))
    above = (a > floor) & (y > 0)
    if np.count_nonzero(above) < 10:
        raise DegenerateFitError("profile is numerically zero (fewer than 10 points above floor)")
    # restrict to the contiguous run before the values first fall below the floor
    idx = np.flatnonzero(above)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    if breaks.size:
        idx = idx[:breaks[0] + 1]
    if idx.size < 10:
        raise DegenerateFitError("profile is numerically zero (fewer than 10 points above floor)")
    window = idx[a[idx] <= tail_fraction * a.max()]
    if window.size < 10:
        window = idx[idx.size // 2:]
    slope, _ = np.polyfit(y[window], np.log(a[window]), 1)
    return float(-slope)


@dataclass
class LayerSnapshot:
    """V and its t-derivatives at one time, on a common fast grid."""
    t: float
    u0: float
    Vbar: float
    y: np.ndarray
    V: LayerProfile
    dtV: LayerProfile
    dttV: Optional[LayerProfile] = None
    dtttV: Optional[LayerProfile] = None
    _splines: dict = field(default_factory=dict, repr=False)

    def sample(self, model, ypts, which=("V", "Vy", "dtV")):
        """Evaluate layer quantities at fast-variable points ``ypts``.

        Points beyond the truncation length get exactly zero.
        """
        ypts = np.asarray(ypts, dtype=float)
        inside = ypts <= self.y[-1]
        out = {}
        for name in which:
            vals = np.zeros_like(ypts)
            if name == "Vy":
                vals[inside] = layer_slope(model, self.u0, self._eval("V", ypts[inside]))
            else:
                vals[inside] = self._eval(name, ypts[inside])
            out[name] = vals
        return out

    def _eval(self, name, pts):
        prof = getattr(self, name)
        if prof is None:
            raise ValueError(f"{name} not computed for this snapshot")
        if not np.any(prof.values):
            return np.zeros_like(pts)
        sp = self._splines.get(name)
        if sp is None:
            sp = self._splines[name] = CubicSpline(prof.y, prof.values)
        return sp(pts)


def layer_at_time(model, t, trace, ub_derivs, ygrid, order=1):
    """Build V (and t-derivatives up to ``order``) at time ``t``.

    ``trace`` is a :class:`~kdvlayer.hyperbolic.BoundaryTrace` for the single
    time ``t``; ``ub_derivs`` holds (u_b, u_b', u_b'', u_b''') at ``t``.
    """
    u0 = float(trace.u0[0])
    du0, ddu0, dddu0 = float(trace.du0[0]), float(trace.ddu0[0]), float(trace.dddu0[0])
    ub, dub, ddub, dddub = (float(v) for v in ub_derivs)
    Vbar = ub - u0
    V = solve_profile(model, u0, Vbar, ygrid)
    Vt = solve_dtV(model, u0, du0, dub - du0, V)
    snap = LayerSnapshot(t=float(t), u0=u0, Vbar=Vbar, y=V.y, V=V, dtV=Vt)
    if order >= 2:
        sig = dtt_source(model, u0, du0, ddu0, V.values, Vt.values)
        snap.dttV = solve_layer_equation(model, V, sig, ddub - ddu0, kind="dttV")
    if order >= 3:
        sig = dttt_source(model, u0, du0, ddu0, dddu0, V.values, Vt.values, snap.dttV.values)
        snap.dtttV = solve_layer_equation(model, V, sig, dddub - dddu0, kind="dtttV")
    return snap


class LayerHistory:
    """Cache of layer snapshots over time for fixed (model, u_in, u_b).

    Profiles are independent of eps, so a single history can serve every member
    of an eps-sweep.  ``dy`` and ``y_max`` fix the fast grid.
    """

    def __init__(self, model, u_in, u_b, dy=1.0 / 64.0, y_max=None, order=1, lifespan=None):
        self.model = model
        self.u_in = u_in
        self.u_b = u_b
        self.order = order
        self.lifespan = lifespan
        if y_max is None:
            bound = float(np.max(np.abs(u_b(np.linspace(0, 10, 11)) - u_in(0.0)))) + 1.0
            y_max = layer_extent(model, bound)
        n = int(math.ceil(y_max / dy))
        self.y = dy * np.arange(n + 1)
        self._cache = {}
        self._ub = [u_b] + [u_b.diff(k) for k in (1, 2, 3)]

    @property
    def y_max(self):
        return float(self.y[-1])

    def at(self, t):
        key = round(float(t), 12)
        snap = self._cache.get(key)
        if snap is None:
            tr = boundary_trace(self.model, self.u_in, [t], lifespan=self.lifespan)
            ubd = [g(t) for g in self._ub]
            snap = layer_at_time(self.model, t, tr, ubd, self.y, order=self.order)
            self._cache[key] = snap
        return snap

    def require_coverage(self, L, eps):
        """Raise when [0, L] reaches past the fast grid before the layer has decayed.

        Beyond ``y_max`` the layer is set to zero, which is only acceptable once
        ``y_max`` exceeds the decay length of the largest wall jump.
        """
        if self.y_max * eps >= L:
            return
        bound = float(np.max(np.abs(self.u_b(np.linspace(0, 10, 11)) - self.u_in(0.0))))
        if self.y_max < layer_extent(self.model, bound):
            raise CoverageError(
                f"fast grid y_max={self.y_max:.4g} shorter than L/eps={L / eps:.4g} "
                "and than the layer decay length")


def write_layer_csv(path, snap):
    cols = [("y", snap.y), ("V", snap.V.values), ("dtV", snap.dtV.values)]
    if snap.dttV is not None:
        cols.append(("dttV", snap.dttV.values))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([c for c, _ in cols])
        for row in zip(*(v for _, v in cols)):
            w.writerow([repr(float(v)) for v in row])
