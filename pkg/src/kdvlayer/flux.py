"""Flux models and the pointwise quantities built from them.

A :class:`FluxModel` bundles the nonlinearity ``f`` of

    u_t + f(u)_x + eps**2 u_xxx = 0

with analytic derivatives up to fourth order, an admissible open interval
``J`` and the monotonicity constant ``c`` such that ``f'(u) <= -c`` on ``J``.
Everything in this module is a pure, vectorised function of its inputs.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import AdmissibleRangeError, ConfigError

_EPS = np.finfo(float).eps
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
# map Gauss-Legendre from [-1, 1] to [0, 1]
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class FluxModel:
    name: str
    f: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    d4: Callable
    c: float
    J: tuple
    potential: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    n_check: int = 2001

    def __post_init__(self):
        lo, hi = self.J
        if not lo < hi:
            raise ValueError(f"empty admissible interval J={self.J}")
        if not self.c > 0:
            raise ValueError("monotonicity constant c must be positive")
        u = _interior_sample(lo, hi, self.n_check)
        slope = np.asarray(self.d1(u), dtype=float)
        bad = slope > -self.c * (1 - 1e-12)
        if np.any(bad):
            raise ValueError(
                f"{self.name}: f'(u) <= -c fails at u={u[bad][0]:.6g} "
                f"(f'={slope[bad][0]:.6g}, c={self.c})")

    def derivative(self, order):
        return (self.f, self.d1, self.d2, self.d3, self.d4)[order]

    def check_range(self, *values, what="state"):
        lo, hi = self.J
        for v in values:
            arr = np.asarray(v, dtype=float)
            if arr.size == 0:
                continue
            if not np.all(np.isfinite(arr)):
                raise AdmissibleRangeError(f"{what} contains non-finite values")
            vmin, vmax = float(arr.min()), float(arr.max())
            if vmin <= lo or vmax >= hi:
                raise AdmissibleRangeError(
                    f"{what} range [{vmin:.6g}, {vmax:.6g}] leaves J=({lo}, {hi})")

    def sup_abs(self, order, n=4001):
        """Sup of |f^(order)| over a dense sample of J."""
        u = _interior_sample(*self.J, n)
        return float(np.max(np.abs(self.derivative(order)(u))))


def _interior_sample(lo, hi, n):
    lo = max(lo, -1e3)
    hi = min(hi, 1e3)
    return np.linspace(lo, hi, n + 2)[1:-1]


def eval_flux(model, u, order=0):
    """Return the ``order``-th derivative of the flux at ``u`` (order 0..3)."""
    if isinstance(order, bool) or order not in (0, 1, 2, 3):
        raise ValueError(f"order must be one of 0, 1, 2, 3 (got {order!r})")
    model.check_range(u)
    out = model.derivative(order)(np.asarray(u, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _potential_quadrature(model, u0, V):
    # F = V**2 * int_0^1 (1 - s) f'(u0 + s V) ds, free of cancellation at small V
    val, _ = integrate.quad(lambda s: (1.0 - s) * model.d1(u0 + s * V), 0.0, 1.0,
                            epsabs=0.0, epsrel=2e-14, limit=200)
    return V * V * val


def potential_fast(model, u0, V):
    """Vectorised F(u0, V) used inside integrators (no range checks)."""
    if model.potential is not None:
        return model.potential(u0, V)
    V = np.asarray(V, dtype=float)
    s = _GL_S.reshape((-1,) + (1,) * V.ndim)
    w = _GL_W.reshape((-1,) + (1,) * V.ndim)
    return V * V * np.sum(w * (1.0 - s) * model.d1(u0 + s * V), axis=0)


def potential_F(model, u0, V, method="auto"):
    """F(u0, V) = int_0^V [f(u0 + xi) - f(u0)] dxi.

    ``method`` is ``"closed"`` (registered closed form), ``"quad"`` (adaptive
    quadrature) or ``"auto"`` (closed form when available).
    """
    u0 = float(u0)
    V = float(V)
    model.check_range(u0, u0 + V, what="segment [u0, u0+V]")
    if V == 0.0:
        return 0.0
    if method == "closed" or (method == "auto" and model.potential is not None):
        if model.potential is None:
            raise ValueError(f"{model.name} has no closed-form potential")
        return float(model.potential(u0, V))
    return float(_potential_quadrature(model, u0, V))


def taylor_g(model, a, w, check=True):
    """Second-order Taylor coefficient: f(a+w) = f(a) + f'(a) w + g(a, w) w**2."""
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    if check:
        model.check_range(a, a + w, what="segment [a, a+w]")
    delta = _EPS ** (1.0 / 3.0) * (1.0 + np.abs(a))
    small = np.abs(w) <= delta
    wsafe = np.where(small, 1.0, w)
    exact = (model.f(a + wsafe) - model.f(a) - model.d1(a) * wsafe) / (wsafe * wsafe)
    series = 0.5 * model.d2(a) + model.d3(a) * w / 6.0
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def mismatch_H(model, u, V, u0, check=True):
    """H = f(u+V) - f(u) - f(u0+V) + f(u0); vanishes exactly when V = 0 or u = u0."""
    u = np.asarray(u, dtype=float)
    V = np.asarray(V, dtype=float)
    if check:
        model.check_range(u, u0, u + V, u0 + V)
    out = (model.f(u + V) - model.f(u0 + V)) - (model.f(u) - model.f(u0))
    return float(out) if np.ndim(out) == 0 else out


# -- registry ---------------------------------------------------------------

def _min_neg_slope(d1, J):
    u = _interior_sample(*J, 20001)
    lo, hi = J
    ends = [x for x in (lo, hi) if math.isfinite(x)]
    if ends:
        u = np.concatenate([u, ends])
    return float(np.min(-d1(u)))


def _linear(c=1.0, b=0.0, J=(-10.0, 10.0)):
    c = float(c)
    zero = lambda u: np.zeros_like(np.asarray(u, dtype=float))
    return FluxModel(
        name="linear",
        f=lambda u: -c * np.asarray(u, dtype=float) + b,
        d1=lambda u: np.full_like(np.asarray(u, dtype=float), -c),
        d2=zero, d3=zero, d4=zero, c=c, J=tuple(J),
        potential=lambda u0, V: -0.5 * c * np.asarray(V, dtype=float) ** 2,
        params={"c": c, "b": b, "J": list(J)})


def _quadratic(k=3.0, J=(-3.0, -0.5), c=None):
    k = float(k)

    def d1(u):
        return 2.0 * k * np.asarray(u, dtype=float)

    return FluxModel(
        name="quadratic",
        f=lambda u: k * np.asarray(u, dtype=float) ** 2,
        d1=d1,
        d2=lambda u: np.full_like(np.asarray(u, dtype=float), 2.0 * k),
        d3=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        d4=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        c=float(c) if c is not None else _min_neg_slope(d1, J),
        J=tuple(J),
        # int_0^V k[(u0+xi)^2 - u0^2] dxi = k V^2 (u0 + V/3)
        potential=lambda u0, V: k * np.asarray(V, dtype=float) ** 2 * (u0 + np.asarray(V) / 3.0),
        params={"k": k, "J": list(J)})


def _cubic_perturbed(k=3.0, delta=0.1, J=(-2.0, -0.5), c=None):
    k, delta = float(k), float(delta)

    def d1(u):
        u = np.asarray(u, dtype=float)
        return 2.0 * k * u + 3.0 * delta * u * u

    def potential(u0, V):
        V = np.asarray(V, dtype=float)
        return (k * V ** 2 * (u0 + V / 3.0)
                + delta * V ** 2 * (1.5 * u0 * u0 + u0 * V + 0.25 * V * V))

    return FluxModel(
        name="cubic-perturbed",
        f=lambda u: k * np.asarray(u, dtype=float) ** 2 + delta * np.asarray(u, dtype=float) ** 3,
        d1=d1,
        d2=lambda u: 2.0 * k + 6.0 * delta * np.asarray(u, dtype=float),
        d3=lambda u: np.full_like(np.asarray(u, dtype=float), 6.0 * delta),
        d4=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        c=float(c) if c is not None else _min_neg_slope(d1, J),
        J=tuple(J), potential=potential,
        params={"k": k, "delta": delta, "J": list(J)})


def _exponential(a=1.0, b=1.0, J=(-5.0, 5.0), c=None):
    """f(u) = -a exp(b u) - u, strictly decreasing for a, b > 0."""
    a, b = float(a), float(b)

    def d1(u):
        return -a * b * np.exp(b * np.asarray(u, dtype=float)) - 1.0

    return FluxModel(
        name="exponential",
        f=lambda u: -a * np.exp(b * np.asarray(u, dtype=float)) - np.asarray(u, dtype=float),
        d1=d1,
        d2=lambda u: -a * b ** 2 * np.exp(b * np.asarray(u, dtype=float)),
        d3=lambda u: -a * b ** 3 * np.exp(b * np.asarray(u, dtype=float)),
        d4=lambda u: -a * b ** 4 * np.exp(b * np.asarray(u, dtype=float)),
        c=float(c) if c is not None else _min_neg_slope(d1, J),
        J=tuple(J), potential=None,
        params={"a": a, "b": b, "J": list(J)})


FLUX_REGISTRY = {
    "linear": _linear,
    "quadratic": _quadratic,
    "cubic-perturbed": _cubic_perturbed,
    "exponential": _exponential,
}


def make_flux(name, **params):
    """Build a registered flux model by name, e.g. ``make_flux("quadratic", k=3)``."""
    try:
        factory = FLUX_REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown flux {name!r}; known: {sorted(FLUX_REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for flux {name!r}: {exc}") from None


_ITEM = re.compile(r"\s*([A-Za-z_]\w*)\s*=\s*(\([^)]*\)|[^,]+)\s*")


def parse_flux(text):
    """Parse ``"quadratic: k=3, J=(-3,-0.5)"`` into a :class:`FluxModel`."""
    name, _, rest = text.partition(":")
    params = {}
    for m in _ITEM.finditer(rest):
        key, raw = m.group(1), m.group(2).strip()
        if raw.startswith("("):
            params[key] = tuple(float(x) for x in raw.strip("()").split(","))
        else:
            params[key] = float(raw)
    return make_flux(name.strip(), **params)
