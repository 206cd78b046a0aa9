"""Remainder equation for the WKB expansion u_eps = u + V(x/eps) + w.

The remainder solves, on a truncated half-line [0, L],

    w_t + [f'(u_a) w + g(u_a, w) w^2]_x + eps^2 w_xxx - nu w_txx + E_inn + E_b = 0,
    w(0, x) = 0,   w(t, 0) = 0,

with u_a = u + V(x/eps).  Time stepping is IMEX BDF2 (first step IMEX Euler):
the linear part (transport by f'(u_a), dispersion and the nu-Helmholtz operator
acting on the increment) is implicit and solved as one banded system per step;
the quadratic remainder g w^2 and the sources are explicit/extrapolated.  The far
end carries w(L) = 0 and w_x(L) = 0 (one reflected ghost value).
"""
from __future__ import annotations

import csv
import json
import math
import time as _time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from . import _fd
from .diagnostics import linearized_energy, weighted_energy
from .errors import (AdmissibleRangeError, CoverageError, DivergenceError,
                     StabilityError, ThresholdCrossedError)
from .flux import mismatch_H, taylor_g
from .hyperbolic import estimate_lifespan, solve_characteristics, validate_compatibility
from .layer import LayerHistory, LayerProfile, LayerSnapshot, layer_extent

SCHEMES = ("imex-dispersion", "nu-regularized")


@dataclass
class SolverConfig:
    eps: float
    L: float
    N: int
    dt: float
    T: float
    nu: float = 0.0
    scheme: str = "imex-dispersion"
    w_bound: float = 0.5
    cfl_max: float = 0.9
    energy_guard: bool = True
    stride: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.eps <= 0 or self.L <= 0 or self.N < 16 or self.dt <= 0 or self.T < 0:
            raise ValueError("eps, L, dt must be positive, N >= 16, T >= 0")
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if self.scheme == "imex-dispersion" and self.nu != 0:
            raise ValueError("scheme 'imex-dispersion' requires nu = 0; use 'nu-regularized'")

    @property
    def h(self):
        return self.L / self.N

    @property
    def x(self):
        return np.linspace(0.0, self.L, self.N + 1)

    @property
    def nsteps(self):
        return max(int(round(self.T / self.dt)), 0) if self.T > 0 else 0

    @property
    def dt_eff(self):
        n = self.nsteps
        return self.T / n if n else self.dt

    def refined(self, factor=2):
        return SolverConfig(**{**asdict(self), "N": self.N * factor, "dt": self.dt / factor})

    def check(self, model, lifespan=None):
        if lifespan is not None and self.T > lifespan:
            raise ValueError(f"T={self.T} exceeds the estimated lifespan {lifespan:.6g}")
        need = 40.0 * self.eps / math.sqrt(model.c)
        if self.L < need:
            raise ValueError(f"L={self.L} shorter than 40 eps / sqrt(c) = {need:.4g}")


@dataclass
class RemainderState:
    t: float
    x: np.ndarray
    w: np.ndarray
    W: np.ndarray = None
    u: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.W is None:
            self.W = _fd.cumtrapz(self.w, self.x[1] - self.x[0])

    @property
    def h(self):
        return float(self.x[1] - self.x[0])


@dataclass
class SourcePair:
    E_inn: np.ndarray
    E_b: np.ndarray

    @property
    def total(self):
        return self.E_inn + self.E_b


@dataclass
class Background:
    """Everything the remainder equation needs at one time."""
    t: float
    hyp: object
    layer: LayerSnapshot
    V: np.ndarray
    Vy: np.ndarray
    dtV: np.ndarray
    u_a: np.ndarray
    sources: SourcePair


def sample_layer(model, layer, x, eps):
    """V, V_y and dV/dt at y = x/eps (zero beyond the fast grid)."""
    y = np.asarray(x) / eps
    if isinstance(layer, LayerSnapshot):
        if layer.y[-1] < y[-1] and layer.y[-1] < layer_extent(model, abs(layer.Vbar)) - 1e-9:
            raise CoverageError(
                f"layer grid ends at y={layer.y[-1]:.4g} < L/eps={y[-1]:.4g} before the layer has decayed")
        s = layer.sample(model, y, ("V", "Vy", "dtV"))
        return s["V"], s["Vy"], s["dtV"]
    raise TypeError("layer must be a LayerSnapshot")


def assemble_sources(model, hyp, layer, eps):
    """E_inn = eps^2 u_xxx and E_b = dtV(x/eps) + d/dx H(u, V(x/eps), u0).

    d/dx H uses the exact chain rule
    [f'(u+V) - f'(u)] u_x + [f'(u+V) - f'(u0+V)] V_y / eps.
    """
    V, Vy, dtV = sample_layer(model, layer, hyp.x, eps)
    return _sources(model, hyp, layer.u0, V, Vy, dtV, eps)


def _sources(model, hyp, u0, V, Vy, dtV, eps):
    u, ux = hyp.u, hyp.ux
    fuV = model.d1(u + V)
    dH = (fuV - model.d1(u)) * ux + (fuV - model.d1(u0 + V)) * Vy / eps
    return SourcePair(E_inn=eps ** 2 * hyp.uxxx, E_b=dtV + dH)


def make_background(model, u_in, history, eps, x, t, lifespan=None):
    hyp = solve_characteristics(model, u_in, t, x, lifespan=lifespan)
    snap = history.at(t)
    V, Vy, dtV = sample_layer(model, snap, x, eps)
    u_a = hyp.u + V
    src = _sources(model, hyp, snap.u0, V, Vy, dtV, eps)
    return Background(t=float(t), hyp=hyp, layer=snap, V=V, Vy=Vy, dtV=dtV, u_a=u_a, sources=src)


def helmholtz_solve_halfline(a, rhs, left_bc, dx):
    """Solve z - a^2 z'' = rhs on a uniform grid with z(0) = left_bc, z(L) = 0.

    ``rhs`` is given on all grid points; its two boundary entries are ignored.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    r = a * a / (dx * dx)
    m = n - 2
    ab = np.empty((3, m))
    ab[0] = -r
    ab[1] = 1.0 + 2.0 * r
    ab[2] = -r
    b = rhs[1:-1].copy()
    b[0] += r * left_bc
    z = np.empty(n)
    z[0] = left_bc
    z[-1] = 0.0
    z[1:-1] = solve_banded((1, 1), ab, b)
    return z


def helmholtz_apply(a, z, dx):
    """Discrete z - a^2 D2 z on interior points."""
    return z[1:-1] - a * a * (z[2:] - 2.0 * z[1:-1] + z[:-2]) / dx ** 2


def helmholtz_green_solve(a, rhs, x):
    """Half-line Green's-kernel solution of z - a^2 z'' = rhs, z(0) = 0.

    z(x) = 1/(2a) int_0^inf [exp(-|x-y|/a) - exp(-(x+y)/a)] rhs(y) dy, evaluated
    by trapezoid quadrature on the sample points (image-charge kernel).
    """
    x = np.asarray(x, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    h = x[1] - x[0]
    wts = np.full(x.size, h)
    wts[0] = wts[-1] = 0.5 * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    K = (np.exp(-np.abs(X - Y) / a) - np.exp(-(X + Y) / a)) / (2.0 * a)
    return K @ (wts * rhs)


class RemainderStepper:
    """Banded IMEX BDF2 stepper on a fixed uniform grid."""

    def __init__(self, cfg, model):
        self.cfg = cfg
        self.model = model
        self.h = cfg.h
        self.N = cfg.N
        self.m = cfg.N - 1
        self._r = np.arange(self.m)
        e2 = cfg.eps ** 2 / self.h ** 3
        # constant dispersion bands, A_disp = -eps^2 D3 on interior unknowns
        self._disp = {k: np.zeros(self.m) for k in range(-2, 4)}
        center = {-2: -0.5, -1: 1.0, 0: 0.0, 1: -1.0, 2: 0.5}
        for k, c in center.items():
            self._disp[k][:] = -e2 * c
        # row 0 (x_1): one-sided closure on offsets -1..3, w_0 = 0 dropped
        for k in range(-2, 4):
            self._disp[k][0] = 0.0
        for k, c in zip(range(-1, 4), _fd._D3_LEFT1):
            if k >= 0:
                self._disp[k][0] = -e2 * c
        # last row (x_{N-1}): ghost w_{N+1} = w_{N-1}
        self._disp[0][-1] += -e2 * 0.5
        nu_r = cfg.nu / self.h ** 2
        self._mass = {-1: np.full(self.m, -nu_r), 0: np.full(self.m, 1.0 + 2.0 * nu_r),
                      1: np.full(self.m, -nu_r)}

    def _matrix(self, a, c0, dt):
        """Bands of c0 M - dt A with A w = -D_c(a w) - eps^2 D3 w."""
        ab = np.zeros((6, self.m))
        r = self._r
        bands = {k: self._disp[k].copy() for k in self._disp}
        # conservative transport -(a w)_x, second-order one-sided toward larger x
        # (the upwind side, a < 0); first order in the last row
        h = self.h
        bands[0][:-1] += 1.5 * a[1:self.N - 1] / h
        bands[0][-1] += a[self.N - 1] / h
        bands[1][:-1] += -2.0 * a[2:self.N] / h
        bands[2][:-2] += 0.5 * a[3:self.N] / h
        for k, vals in bands.items():
            coeff = -dt * vals
            if k in self._mass:
                coeff = coeff + c0 * self._mass[k]
            rows = r[max(0, -k):self.m - max(0, k)]
            ab[3 - k, rows + k] = coeff[rows]
        return ab

    def mass(self, w):
        """M w = w - nu D2 w on interior points (w_0 = w_N = 0)."""
        wi = w[1:-1]
        if self.cfg.nu == 0:
            return wi.copy()
        return wi - self.cfg.nu * (w[2:] - 2.0 * wi + w[:-2]) / self.h ** 2

    def nonlinear(self, u_a, w):
        """-d/dx [g(u_a, w) w^2] with second-order differences biased toward larger x."""
        q = taylor_g(self.model, u_a, w, check=False) * w * w
        out = np.empty(self.m)
        out[:-1] = -(-3.0 * q[1:-2] + 4.0 * q[2:-1] - q[3:]) / (2.0 * self.h)
        out[-1] = -(q[-1] - q[-2]) / self.h
        return out

    def cfl(self, u_a, w, dt):
        speed = np.abs(self.model.d1(u_a + w) - self.model.d1(u_a))
        return float(np.max(speed)) * dt / self.h

    def solve(self, ab, rhs):
        w = np.zeros(self.N + 1)
        w[1:-1] = solve_banded((2, 3), ab, rhs)
        return w


def step_remainder(state, sources, cfg, model, u_a, prev=None, stepper=None,
                   nonlinear_now=None, nonlinear_prev=None):
    """Advance ``state`` by one step of size ``cfg.dt_eff``.

    ``sources`` and ``u_a`` belong to the new time level.  Without ``prev`` the
    step is IMEX Euler; with ``prev`` (state one step earlier) it is IMEX BDF2.
    ``nonlinear_now``/``nonlinear_prev`` are the explicit terms of the old levels;
    by default they are evaluated with ``u_a`` of the new level.
    """
    stepper = stepper or RemainderStepper(cfg, model)
    dt = cfg.dt_eff
    a = model.d1(u_a)
    Nn = nonlinear_now if nonlinear_now is not None else stepper.nonlinear(u_a, state.w)
    if stepper.cfl(u_a, state.w, dt) > cfg.cfl_max:
        raise StabilityError(f"explicit CFL {stepper.cfl(u_a, state.w, dt):.3g} > {cfg.cfl_max}")
    S = sources.total[1:-1]
    if prev is None:
        ab = stepper._matrix(a, 1.0, dt)
        rhs = stepper.mass(state.w) + dt * Nn - dt * S
    else:
        Np = nonlinear_prev if nonlinear_prev is not None else stepper.nonlinear(u_a, prev.w)
        ab = stepper._matrix(a, 1.5, dt)
        rhs = (stepper.mass(2.0 * state.w - 0.5 * prev.w)
               + dt * (2.0 * Nn - Np) - dt * S)
    w = stepper.solve(ab, rhs)
    if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > cfg.w_bound:
        raise DivergenceError(f"|w| exceeded {cfg.w_bound} at t={state.t + dt:.6g}")
    return RemainderState(t=state.t + dt, x=state.x, w=w)


@dataclass
class Trajectory:
    cfg: SolverConfig
    t: np.ndarray
    weighted: np.ndarray
    linearized: np.ndarray
    snapshots: list
    final: RemainderState
    status: str = "ok"
    wall_time: float = 0.0
    ledger: object = None
    extra: dict = field(default_factory=dict)

    @property
    def sup_weighted(self):
        return float(np.max(self.weighted))

    def metadata(self):
        c = self.cfg
        return {
            "eps": c.eps, "nu": c.nu, "scheme": c.scheme,
            "grid": {"L": c.L, "N": c.N, "h": c.h, "dt": c.dt_eff, "T": c.T,
                     "nsteps": c.nsteps},
            "threshold": {"status": self.status, "threshold": c.eps ** 2,
                          "sup_weighted": self.sup_weighted},
        }


def solve_remainder(cfg, model, u_in, u_b, history=None, lifespan=None, ledger=None,
                    force=False, store_fields=False, callback=None):
    """Integrate the remainder from w = 0 to ``cfg.T``.

    Hyperbolic fields, layer profiles and sources are recomputed at every step
    (layer snapshots are cached in ``history`` and shared across eps).  Snapshots
    are stored every ``cfg.stride`` steps (0: initial and final only).
    """
    report = validate_compatibility(u_in, u_b)
    if not report.passed and not force:
        raise ValueError("compatibility conditions violated: " + ", ".join(report.failures))
    if lifespan is None:
        lifespan = estimate_lifespan(model, u_in)
    cfg.check(model, lifespan)
    if history is None:
        history = LayerHistory(model, u_in, u_b, lifespan=lifespan)
    x = cfg.x
    h = cfg.h
    stepper = RemainderStepper(cfg, model)
    dt = cfg.dt_eff
    nsteps = cfg.nsteps
    start = _time.perf_counter()

    bg = make_background(model, u_in, history, cfg.eps, x, 0.0, lifespan)
    state = RemainderState(0.0, x, np.zeros_like(x))
    if store_fields:
        state.u, state.V = bg.hyp.u, bg.V
    prev = None
    N_prev = None
    N_now = stepper.nonlinear(bg.u_a, state.w)
    times = [0.0]
    weighted = [0.0]
    linearized = [0.0]
    snaps = [state]
    if ledger is not None:
        ledger.start(state, bg, model, cfg.eps)
    status = "ok"
    for n in range(nsteps):
        t1 = (n + 1) * dt
        bg1 = make_background(model, u_in, history, cfg.eps, x, t1, lifespan)
        new = step_remainder(state, bg1.sources, cfg, model, bg1.u_a, prev=prev, stepper=stepper,
                             nonlinear_now=N_now, nonlinear_prev=N_prev)
        new.t = t1
        try:
            model.check_range(bg1.u_a + new.w, what="u_a + w")
        except AdmissibleRangeError as exc:
            raise DivergenceError(str(exc)) from None
        E = weighted_energy(new, cfg.eps)
        times.append(t1)
        weighted.append(E)
        linearized.append(linearized_energy(model, bg1.u_a, new, cfg.eps, check=False))
        if ledger is not None:
            ledger.update(new, bg1, model, cfg.eps, dt)
        if store_fields:
            new.u, new.V = bg1.hyp.u, bg1.V
        if callback is not None:
            callback(new, bg1)
        prev, state = state, new
        N_prev, N_now = N_now, stepper.nonlinear(bg1.u_a, state.w)
        if cfg.stride and (n + 1) % cfg.stride == 0 and n + 1 < nsteps:
            snaps.append(state)
        if E > cfg.eps ** 2:
            status = "threshold-crossed"
            if cfg.energy_guard:
                traj = Trajectory(cfg, np.array(times), np.array(weighted), np.array(linearized),
                                  snaps + [state], state, status,
                                  _time.perf_counter() - start, ledger)
                err = ThresholdCrossedError(
                    f"weighted energy {E:.4g} > eps^2 = {cfg.eps ** 2:.4g} at t={t1:.4g}",
                    t=t1, energy=E)
                err.trajectory = traj
                raise err
    if nsteps and snaps[-1] is not state:
        snaps.append(state)
    return Trajectory(cfg, np.array(times), np.array(weighted), np.array(linearized),
                      snaps, state, status, _time.perf_counter() - start, ledger)


def reconstruct_full(hyp, layer, state, eps, model=None):
    """u + V(x/eps) + w on the shared grid."""
    if hyp.x.shape != state.x.shape or not np.allclose(hyp.x, state.x, rtol=0, atol=1e-12):
        raise ValueError("hyperbolic field and remainder live on different grids")
    y = state.x / eps
    if isinstance(layer, LayerSnapshot):
        V = layer.sample(model, y, ("V",))["V"] if model is not None else layer._eval("V", np.minimum(y, layer.y[-1])) * (y <= layer.y[-1])
    elif isinstance(layer, LayerProfile):
        V = np.zeros_like(y)
        inside = y <= layer.y[-1]
        if np.any(layer.values):
            V[inside] = CubicSpline(layer.y, layer.values)(y[inside])
    else:
        V = np.asarray(layer, dtype=float)
    out = hyp.u + V + state.w
    # wall value telescopes to u_b exactly: u0 + (u_b - u0) + 0
    if isinstance(layer, (LayerSnapshot, LayerProfile)):
        out[0] = hyp.u[0] + (layer.Vbar if isinstance(layer, LayerProfile) else layer.Vbar) + state.w[0]
    return out


def residual_full(model, snapshots, eps):
    """Discrete space-time L2 norm of u_t + f(u)_x + eps^2 u_xxx.

    ``snapshots`` is a sequence of (t, x, u) with uniform time spacing; time
    derivatives are centered, so the residual lives on interior time levels and
    interior grid points.
    """
    if len(snapshots) < 3:
        raise ValueError("residual_full needs at least 3 snapshots")
    ts = np.array([s[0] for s in snapshots], dtype=float)
    dts = np.diff(ts)
    if not np.allclose(dts, dts[0], rtol=1e-8):
        raise ValueError("snapshots must be equally spaced in time")
    dt = dts[0]
    x = np.asarray(snapshots[0][1])
    h = x[1] - x[0]
    total = 0.0
    for k in range(1, len(snapshots) - 1):
        u = np.asarray(snapshots[k][2])
        ut = (np.asarray(snapshots[k + 1][2]) - np.asarray(snapshots[k - 1][2])) / (2.0 * dt)
        r = ut + _fd.d1(model.f(u), h) + eps ** 2 * _fd.d3(u, h)
        r = r[1:-1]
        total += dt * h * float(np.sum(r * r))
    return math.sqrt(total)


def write_snapshot_csv(path, state, eps, u=None, V=None):
    u = state.u if u is None else u
    V = state.V if V is None else V
    cols = {"x": state.x, "w": state.w, "W": state.W}
    if u is not None:
        cols["u"] = u
    if V is not None:
        cols["V_scaled"] = V
    if u is not None and V is not None:
        cols["u_eps_reconstructed"] = u + V + state.w
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(cols))
        for row in zip(*cols.values()):
            wr.writerow([repr(float(v)) for v in row])


def write_trajectory_json(path, traj):
    with open(path, "w") as fh:
        json.dump(traj.metadata(), fh, indent=2, sort_keys=True)
