"""Closed-form data families with exact derivatives.

Initial data ``u_in(x)`` and boundary data ``u_b(t)`` are sums of terms

    coef * s**power * exp(-rate * s) * cos(omega * s + phase)

plus a constant.  Each term is stored as ``Re[C s**p exp(lam s)]`` with complex
``C`` and ``lam``, which makes differentiation a closed operation on the term set.
"""
from __future__ import annotations

import cmath
from collections import defaultdict

import numpy as np

from .errors import ConfigError


class ExpPoly:
    """Real function ``s -> constant + sum Re[C s^p e^{lam s}]`` with exact derivatives."""

    def __init__(self, constant=0.0, terms=(), _raw=None):
        self.constant = float(constant)
        if _raw is not None:
            self._terms = dict(_raw)
            return
        acc = defaultdict(complex)
        for t in terms:
            if isinstance(t, dict):
                coef = t.get("coef", 1.0)
                p = int(t.get("power", 0))
                rate = t.get("rate", 0.0)
                omega = t.get("omega", 0.0)
                phase = t.get("phase", 0.0)
            else:
                coef, p, rate, *rest = t
                omega = rest[0] if len(rest) > 0 else 0.0
                phase = rest[1] if len(rest) > 1 else 0.0
            if p < 0:
                raise ConfigError("term powers must be non-negative")
            lam = complex(-rate, omega)
            acc[(int(p), lam)] += coef * cmath.exp(1j * phase)
        self._terms = {k: v for k, v in acc.items() if v != 0}

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, self.constant)
        for (p, lam), C in self._terms.items():
            if lam.imag == 0.0 and C.imag == 0.0:
                out = out + C.real * s ** p * np.exp(lam.real * s)
            else:
                out = out + np.real(C * s ** p * np.exp(lam * s))
        return float(out) if out.ndim == 0 else out

    def diff(self, k=1):
        f = self
        for _ in range(k):
            acc = defaultdict(complex)
            for (p, lam), C in f._terms.items():
                if p > 0:
                    acc[(p - 1, lam)] += C * p
                if lam != 0:
                    acc[(p, lam)] += C * lam
            f = ExpPoly(0.0, _raw={k_: v for k_, v in acc.items() if v != 0})
        return f

    def derivatives(self, s, n=4):
        """Values of the function and its first ``n`` derivatives at ``s``."""
        out = [self(s)]
        f = self
        for _ in range(n):
            f = f.diff()
            out.append(f(s))
        return out


def make_function(spec):
    """Build an :class:`ExpPoly` from a registry entry.

    Accepted forms: ``{"name": "constant", "value": a}`` and
    ``{"name": "exp-poly", "constant": a, "terms": [[coef, power, rate], ...]}``
    (terms may also be dicts with ``omega``/``phase`` for oscillatory factors).
    """
    name = spec.get("name")
    if name == "constant":
        return ExpPoly(spec.get("value", 0.0))
    if name == "exp-poly":
        return ExpPoly(spec.get("constant", 0.0), spec.get("terms", []))
    raise ConfigError(f"unknown function family {name!r}; known: constant, exp-poly")


def reference_initial_datum():
    """u_in(x) = -1 - 0.1 x^4 e^{-x}."""
    return ExpPoly(-1.0, [(-0.1, 4, 1.0)])


def reference_boundary_datum():
    """u_b(t) = -1 + 0.3 t^2 e^{-t}."""
    return ExpPoly(-1.0, [(0.3, 2, 1.0)])
