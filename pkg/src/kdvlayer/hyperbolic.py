"""Smooth solution of the limiting conservation law by characteristics.

With ``f' < 0`` every characteristic through ``(t, x)`` has its foot
``x0 = x - f'(u) t >= x``, so ``u(t, x) = u_in(x0)`` is fully determined by the
initial datum and the wall needs no boundary datum (outflow regime).  The
implicit relation is solved pointwise by Newton's method and all derivatives
follow from implicit differentiation, using the characteristic map
``X(x0) = x0 + t f'(u_in(x0))`` and ``d/dx = X'(x0)^{-1} d/dx0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LifespanExceededError, NearBlowupError

NEWTON_TOL = 1e-13
NEWTON_MAXIT = 50
JACOBIAN_FLOOR = 0.05
SAFETY = 0.9


@dataclass
class HyperbolicField:
    t: float
    x: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    uxx: np.ndarray
    uxxx: np.ndarray
    ut: np.ndarray
    utx: np.ndarray
    foot: np.ndarray
    jacobian: np.ndarray


@dataclass
class BoundaryTrace:
    t: np.ndarray
    u0: np.ndarray
    du0: np.ndarray
    ddu0: np.ndarray
    dddu0: np.ndarray


def estimate_lifespan(model, u_in, x_max=60.0, n=120001, cap=10.0):
    """Surrogate lifespan ``0.9 / max(0, sup -d/dx0 f'(u_in(x0)))``, capped at ``cap``.

    The supremum is taken over a dense sample of ``[0, x_max]``.
    """
    x0 = np.linspace(0.0, x_max, n)
    vals = u_in(x0)
    model.check_range(vals, what="initial datum")
    compression = -model.d2(vals) * u_in.diff()(x0)
    m = max(0.0, float(np.max(compression)))
    if m == 0.0:
        return float(cap)
    return float(min(cap, SAFETY / m))


def _newton(model, u_in, t, x, u_start):
    dphi = u_in.diff()
    u = np.array(u_start, dtype=float)
    for it in range(NEWTON_MAXIT):
        x0 = x - model.d1(u) * t
        res = u - u_in(x0)
        if np.max(np.abs(res), initial=0.0) <= NEWTON_TOL:
            return u, it
        jac = 1.0 + t * model.d2(u) * dphi(x0)
        u = u - res / jac
    x0 = x - model.d1(u) * t
    res = np.abs(u - u_in(x0))
    if np.max(res, initial=0.0) <= NEWTON_TOL:
        return u, NEWTON_MAXIT
    worst = int(np.argmax(res))
    raise LifespanExceededError(
        f"Newton failed to converge in {NEWTON_MAXIT} iterations at t={t:.6g}, "
        f"x={x.flat[worst]:.6g} (residual {res.flat[worst]:.3g})")


def solve_characteristics(model, u_in, t, xgrid, lifespan=None, return_iterations=False):
    """Evaluate ``u`` and its derivatives at time ``t`` on ``xgrid``.

    ``u_in`` must be an :class:`~kdvlayer.functions.ExpPoly` (or provide
    ``__call__`` and ``diff``).  Raises :class:`LifespanExceededError` when
    ``t`` exceeds ``lifespan`` or Newton fails, and :class:`NearBlowupError`
    when the characteristic Jacobian falls to ``JACOBIAN_FLOOR``.
    """
    t = float(t)
    x = np.asarray(xgrid, dtype=float)
    if lifespan is not None and t > lifespan:
        raise LifespanExceededError(f"t={t:.6g} beyond estimated lifespan {lifespan:.6g}")
    if t == 0.0:
        u, iters = u_in(x), 0
        u = np.asarray(u, dtype=float)
    else:
        # one Picard sweep from the datum gives a start inside Newton's basin
        guess = u_in(x - model.d1(u_in(x)) * t)
        u, iters = _newton(model, u_in, t, x, guess)
    model.check_range(u, what="hyperbolic solution")
    x0 = x - model.d1(u) * t

    p1, p2, p3 = (u_in.diff(k)(x0) for k in (1, 2, 3))
    f1, f2, f3, f4 = model.d1(u), model.d2(u), model.d3(u), model.d4(u)
    D = 1.0 + t * f2 * p1
    if np.min(D, initial=np.inf) <= JACOBIAN_FLOOR:
        i = int(np.argmin(D))
        raise NearBlowupError(
            f"characteristic Jacobian {D.flat[i]:.3g} <= {JACOBIAN_FLOOR} at t={t:.6g}, "
            f"x={x.flat[i]:.6g}")
    D1 = t * (f3 * p1 ** 2 + f2 * p2)
    D2 = t * (f4 * p1 ** 3 + 3.0 * f3 * p1 * p2 + f2 * p3)

    ux = p1 / D
    num2 = p2 * D - p1 * D1
    uxx = num2 / D ** 3
    uxxx = (p3 * D - p1 * D2) / D ** 4 - 3.0 * num2 * D1 / D ** 5
    ut = -f1 * ux
    utx = -f2 * ux ** 2 - f1 * uxx
    field = HyperbolicField(t=t, x=x, u=u, ux=ux, uxx=uxx, uxxx=uxxx,
                            ut=ut, utx=utx, foot=x0, jacobian=D)
    if return_iterations:
        return field, iters
    return field


def time_derivatives(model, fld):
    """u_t, u_tt, u_ttt from the transport equation and the x-derivatives."""
    a = model.d1(fld.u)
    f2 = model.d2(fld.u)
    f3 = model.d3(fld.u)
    ux, uxx, uxxx = fld.ux, fld.uxx, fld.uxxx
    ut = -a * ux
    utt = 2.0 * a * f2 * ux ** 2 + a ** 2 * uxx
    uttt = (-6.0 * a * f2 ** 2 * ux ** 3 - 3.0 * a ** 2 * f3 * ux ** 3
            - 9.0 * a ** 2 * f2 * ux * uxx - a ** 3 * uxxx)
    return ut, utt, uttt


def boundary_trace(model, u_in, tgrid, lifespan=None):
    """Wall trace ``u0(t) = u(t, 0)`` and its first three time derivatives."""
    ts = np.atleast_1d(np.asarray(tgrid, dtype=float))
    out = np.empty((4, ts.size))
    zero = np.zeros(1)
    for k, t in enumerate(ts):
        fld = solve_characteristics(model, u_in, t, zero, lifespan=lifespan)
        ut, utt, uttt = time_derivatives(model, fld)
        out[:, k] = fld.u[0], ut[0], utt[0], uttt[0]
    return BoundaryTrace(t=ts, u0=out[0], du0=out[1], ddu0=out[2], dddu0=out[3])


@dataclass
class CompatibilityReport:
    conditions: list  # (label, residual, passed)

    @property
    def passed(self):
        return all(ok for _, _, ok in self.conditions)

    @property
    def failures(self):
        return [label for label, _, ok in self.conditions if not ok]

    def __str__(self):
        lines = [f"{'PASS' if ok else 'FAIL'}  {label}  (residual {res:.3e})"
                 for label, res, ok in self.conditions]
        return "\n".join(lines)


def validate_compatibility(u_in, u_b, tol=1e-10):
    """Check the corner conditions at (t, x) = (0, 0).

    u_b(0) = u_in(0), u_in'''(0) = 0, u_in'(0) = 0, u_b'(0) = 0.
    """
    checks = [
        ("u_b(0) = u_in(0)", float(u_b(0.0) - u_in(0.0))),
        ("d3x u_in(0) = 0", float(u_in.diff(3)(0.0))),
        ("dx u_in(0) = 0", float(u_in.diff(1)(0.0))),
        ("u_b'(0) = 0", float(u_b.diff(1)(0.0))),
    ]
    return CompatibilityReport([(label, r, abs(r) <= tol) for label, r in checks])
