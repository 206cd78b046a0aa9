"""Energy functionals, the I-term ledger, discrete H^-1 norms and scaling fits.

All quadratures are composite trapezoid and all derivatives are second-order
finite differences (``kdvlayer._fd``), so residual orders can be read off directly.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import _fd
from .errors import DegenerateFitError
from .flux import taylor_g

ITERM_NAMES = ("I1", "I2", "I3", "I4", "I5", "I6")


def _grid(state):
    return np.asarray(state.w, dtype=float), float(state.x[1] - state.x[0])


def weighted_energy(state, eps):
    """Trapezoid value of w^2 + (eps^2/2) w_x^2 on the state's grid."""
    w, h = _grid(state)
    wx = _fd.d1(w, h)
    return float(_fd.trapz(w * w + 0.5 * eps ** 2 * wx * wx, h))


def linearized_energy(model, u_a, state, eps, check=True):
    """Trapezoid value of (eps^2/2) w_x^2 - f'(u_a) w^2."""
    if check:
        model.check_range(u_a, what="u_a")
    w, h = _grid(state)
    wx = _fd.d1(w, h)
    return float(_fd.trapz(0.5 * eps ** 2 * wx * wx - model.d1(u_a) * w * w, h))


def sgn_check(state):
    """Return (sup|w|, sqrt(2) ||w||^{1/2} ||w_x||^{1/2}) for the Sobolev bound."""
    w, h = _grid(state)
    wx = _fd.d1(w, h)
    l2 = math.sqrt(max(_fd.trapz(w * w, h), 0.0))
    l2x = math.sqrt(max(_fd.trapz(wx * wx, h), 0.0))
    return float(np.max(np.abs(w))), math.sqrt(2.0 * l2 * l2x)


class ITermLedger:
    """Streaming space-time quadrature of dW/dt times each bracketed term.

    Fed one time level at a time by ``solve_remainder``.  Time derivatives of
    W and w use BDF2 (backward Euler on the first step); the time integral is
    trapezoid, with the t = 0 integrand taken from the equation itself
    (w = 0 there, so dw/dt = -(E_inn + E_b)).

    Besides the six terms it accumulates the two boundary contributions of I1
    after integration by parts, ``wall = 1/2 int (dW/dt(t,0))^2 dt`` and
    ``far = 1/2 int (dW/dt(t,L))^2 dt``, and for nu > 0 the extra term of the
    -nu w_txx regularization.
    """

    def __init__(self, nu=0.0):
        self.nu = nu
        self.totals = np.zeros(6)
        self.nu_term = 0.0
        self.wall = 0.0
        self.far = 0.0
        self.times = []
        self.rates = []   # per-level integrands (six values)
        self._W = []
        self._w = []
        self._prev = None
        self._prev_edges = None

    def _integrands(self, dW, dw, w, bg, model, eps, h):
        a = model.d1(bg.u_a)
        q = taylor_g(model, bg.u_a, w, check=False) * w * w
        terms = (dw, _fd.d1(a * w, h), _fd.d1(q, h), eps ** 2 * _fd.d3(w, h),
                 bg.sources.E_inn, bg.sources.E_b)
        vals = np.array([_fd.trapz(dW * t, h) for t in terms])
        nu_val = -self.nu * _fd.trapz(dW * _fd.d2(dw, h), h) if self.nu else 0.0
        return vals, nu_val

    def _accumulate(self, t, vals, nu_val, edges, dt):
        if self._prev is not None:
            pv, pn = self._prev
            self.totals += 0.5 * dt * (vals + pv)
            self.nu_term += 0.5 * dt * (nu_val + pn)
            pe = self._prev_edges
            self.wall += 0.25 * dt * (edges[0] ** 2 + pe[0] ** 2)
            self.far += 0.25 * dt * (edges[1] ** 2 + pe[1] ** 2)
        self._prev = (vals, nu_val)
        self._prev_edges = edges
        self.times.append(t)
        self.rates.append(vals)

    def start(self, state, bg, model, eps):
        w, h = _grid(state)
        if np.any(w):
            raise ValueError("ledger must start from the zero remainder")
        dw = -bg.sources.total
        dW = _fd.cumtrapz(dw, h)
        vals, nu_val = self._integrands(dW, dw, w, bg, model, eps, h)
        self._W = [state.W]
        self._w = [w]
        self._accumulate(state.t, vals, nu_val, (dW[0], dW[-1]), 0.0)

    def update(self, state, bg, model, eps, dt):
        w, h = _grid(state)
        if len(self._W) == 1:
            dW = (state.W - self._W[-1]) / dt
            dw = (w - self._w[-1]) / dt
        else:
            dW = (3.0 * state.W - 4.0 * self._W[-1] + self._W[-2]) / (2.0 * dt)
            dw = (3.0 * w - 4.0 * self._w[-1] + self._w[-2]) / (2.0 * dt)
        vals, nu_val = self._integrands(dW, dw, w, bg, model, eps, h)
        self._W = (self._W + [state.W])[-2:]
        self._w = (self._w + [w])[-2:]
        self._accumulate(state.t, vals, nu_val, (dW[0], dW[-1]), dt)

    @property
    def total(self):
        return float(np.sum(self.totals) + self.nu_term)

    def as_dict(self):
        out = {k: float(v) for k, v in zip(ITERM_NAMES, self.totals)}
        out["sum"] = self.total
        out["I1_wall_term"] = 0.0 - float(self.wall)
        out["I1_far_field_term"] = float(self.far)
        if self.nu:
            out["nu_term"] = float(self.nu_term)
        return out


def iterm_ledger(traj, sources, model, u_a, eps, backgrounds=None):
    """Post-process a stored trajectory into the six I-terms and their sum.

    ``traj`` is a sequence of states on a uniform time grid (every step, not a
    strided subset); ``sources`` and ``u_a`` are per-level sequences of
    :class:`SourcePair` and arrays.
    """
    states = list(traj)
    if len(states) < 2:
        raise ValueError("need at least two time levels")
    if len(sources) != len(states) or len(u_a) != len(states):
        raise ValueError("sources and u_a must be given for every stored level")
    for s in states:
        if getattr(s, "W", None) is None:
            raise ValueError("states must carry the primitive W")
    dt = states[1].t - states[0].t
    led = ITermLedger()
    led.start(states[0], _Level(u_a[0], sources[0]), model, eps)
    for s, src, ua in zip(states[1:], sources[1:], u_a[1:]):
        led.update(s, _Level(ua, src), model, eps, dt)
    return led.as_dict()


@dataclass
class _Level:
    u_a: np.ndarray
    sources: object


def _riesz_solve(field, h):
    n = field.size
    m = n - 2
    r = 1.0 / (h * h)
    ab = np.empty((3, m))
    ab[0] = -r
    ab[1] = 1.0 + 2.0 * r
    ab[2] = -r
    psi = np.zeros(n)
    psi[1:-1] = solve_banded((1, 1), ab, field[1:-1])
    return psi


def hminus1_norm(field, h=None, x=None):
    """sqrt(int psi'^2 + psi^2) where -psi'' + psi = field, psi(0) = psi(L) = 0."""
    field = np.asarray(field, dtype=float)
    if h is None:
        if x is None:
            raise ValueError("give the grid spacing h or the grid x")
        h = float(x[1] - x[0])
    if not np.any(field):
        return 0.0
    psi = _riesz_solve(field, h)
    # discrete identity: <field, psi>_h = |psi|_{H^1,h}^2 with forward differences
    dpsi = np.diff(psi) / h
    val = h * float(np.sum(dpsi * dpsi)) + _fd.trapz(psi * psi, h)
    return math.sqrt(max(val, 0.0))


def check_interpolation(z, h):
    """(||z''||, 3 (||z'''||_{H^-1} + ||z'||)) for a grid function vanishing at 0."""
    z = np.asarray(z, dtype=float)
    if z.size - 1 < 16:
        raise ValueError("grid too coarse: need N >= 16")
    l2 = lambda v: math.sqrt(max(_fd.trapz(v * v, h), 0.0))
    lhs = l2(_fd.d2(z, h))
    rhs = 3.0 * (hminus1_norm(_fd.d3(z, h), h) + l2(_fd.d1(z, h)))
    return lhs, rhs


@dataclass
class EnergyReport:
    eps: float
    tgrid: list
    weighted: list
    linearized: list
    sup_weighted: float
    iterms: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_trajectory(cls, traj, meta=None):
        led = traj.ledger.as_dict() if traj.ledger is not None else {}
        m = traj.metadata()
        m.update(meta or {})
        return cls(eps=traj.cfg.eps, tgrid=[float(t) for t in traj.t],
                   weighted=[float(v) for v in traj.weighted],
                   linearized=[float(v) for v in traj.linearized],
                   sup_weighted=traj.sup_weighted, iterms=led, meta=m)

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))


@dataclass
class ScalingFit:
    eps_list: list
    sup_energies: list
    slope: float
    intercept: float
    gate: float = 2.7
    excluded: list = field(default_factory=list)
    converged: list = field(default_factory=list)

    @property
    def passed(self):
        return self.slope >= self.gate

    def partial_slopes(self):
        e = np.log(self.eps_list)
        s = np.log(self.sup_energies)
        return [float("nan")] + [float((s[i] - s[i - 1]) / (e[i] - e[i - 1]))
                                 for i in range(1, len(e))]

    def to_json(self, path=None):
        d = asdict(self)
        d["passed"] = self.passed
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path):
        parts = self.partial_slopes()
        conv = self.converged or [True] * len(self.eps_list)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eps", "sup_energy", "slope_partial", "converged_flag"])
            for e, s, p, c in zip(self.eps_list, self.sup_energies, parts, conv):
                wr.writerow([repr(float(e)), repr(float(s)),
                             "" if math.isnan(p) else repr(p), int(bool(c))])


def scaling_study(results, gate=2.7):
    """Least-squares fit of log sup-energy against log eps.

    ``results`` is an iterable of ``(eps, sup_energy, converged)`` or
    ``(eps, sup_energy, converged, threshold_crossed)``.  Members flagged as
    unconverged make the fit refuse; the largest eps is dropped if it crossed
    the eps^2 threshold.
    """
    rows = []
    for r in results:
        eps, sup, conv = r[0], r[1], r[2]
        crossed = r[3] if len(r) > 3 else False
        rows.append((float(eps), float(sup), bool(conv), bool(crossed)))
    rows.sort(key=lambda r: -r[0])
    bad = [r[0] for r in rows if not r[2]]
    if bad:
        raise DegenerateFitError(f"unconverged members, refusing to fit: eps={bad}")
    excluded = []
    if rows and rows[0][3]:
        excluded.append(rows[0][0])
        rows = rows[1:]
    eps = [r[0] for r in rows]
    sup = [r[1] for r in rows]
    if len(eps) < 4:
        raise DegenerateFitError(f"need at least 4 eps values, got {len(eps)}")
    if len(set(eps)) != len(eps):
        raise DegenerateFitError("eps values must be distinct")
    if min(sup) <= 0:
        raise DegenerateFitError("sup energies must be positive")
    slope, intercept = np.polyfit(np.log(eps), np.log(sup), 1)
    return ScalingFit(eps_list=eps, sup_energies=sup, slope=float(slope),
                      intercept=float(intercept), gate=gate, excluded=excluded,
                      converged=[True] * len(eps))
