"""
Boundary-layer profiles for the quadratic flux
==============================================

The wall layer V(y) solves V'' + f(u0 + V) - f(u0) = 0 with V(0) = Vbar and
V -> 0.  For f(u) = 3u^2 it has closed forms (sech^2 for Vbar > 0, csch^2 for
Vbar < 0), which we compare against, and then we follow V and dV/dt in time
for the reference data.

Run:  python demos/layer_profiles.py
"""
import math

import numpy as np

from kdvlayer.flux import make_flux
from kdvlayer.functions import reference_boundary_datum, reference_initial_datum
from kdvlayer.hyperbolic import estimate_lifespan
from kdvlayer.errors import DegenerateFitError
from kdvlayer.layer import LayerHistory, fit_decay_rate, solve_profile

quad = make_flux("quadratic", k=3.0, J=(-3.0, -0.5))
print(f"quadratic flux, J = {quad.J}, c = {quad.c:g}, sqrt(c) = {math.sqrt(quad.c):.4f}")

# %% closed forms
y = np.linspace(0, 10, 2001)
for u0, Vbar in [(-2.0, 1.0), (-1.0, -0.5)]:
    kappa = math.sqrt(-1.5 * u0)
    A = 2 * kappa ** 2
    if Vbar > 0:
        y0 = math.acosh(math.sqrt(A / Vbar)) / kappa
        exact = A / np.cosh(kappa * (y + y0)) ** 2
        shape = "sech^2"
    else:
        y0 = math.asinh(math.sqrt(-A / Vbar)) / kappa
        exact = -A / np.sinh(kappa * (y + y0)) ** 2
        shape = "csch^2"
    prof = solve_profile(quad, u0, Vbar, y)
    rel = np.max(np.abs(prof.values - exact) / np.abs(exact))
    print(f"u0={u0:5.2f} Vbar={Vbar:5.2f}  {shape}: max relative error {rel:.2e}, "
          f"decay rate {prof.decay_rate:.4f} (sqrt(-f'(u0)) = {math.sqrt(-quad.d1(u0)):.4f})")

# %% the reference layer in time
u_in, u_b = reference_initial_datum(), reference_boundary_datum()
hist = LayerHistory(quad, u_in, u_b, lifespan=estimate_lifespan(quad, u_in))
print("\n    t      u0       Vbar    rate V   rate dtV   max|dtV|")
for t in np.linspace(0, 0.5, 6):
    snap = hist.at(t)
    rates = []
    for prof in (snap.V, snap.dtV):
        try:
            rates.append(f"{fit_decay_rate(prof):8.4f}")
        except DegenerateFitError:
            rates.append("       -")
    print(f"{t:6.2f} {snap.u0:8.4f} {snap.Vbar:9.5f} {rates[0]} {rates[1]}  "
          f"{np.max(np.abs(snap.dtV.values)):.3e}")
print("dtV starts at exactly zero because u_b - u0 and its first t-derivative vanish at t = 0.")
