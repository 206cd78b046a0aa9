"""
Why the layer is needed
=======================

Without the layer the inviscid field u misses the wall datum by
u_b(t) - u(t, 0), independently of eps.  Adding V(t, x/eps) and the remainder w
restores the wall value exactly and leaves a residual that shrinks with the grid.

Run:  python demos/wall_mismatch.py
"""
import numpy as np

from kdvlayer.dispersive import SolverConfig, solve_remainder
from kdvlayer.flux import make_flux
from kdvlayer.functions import reference_boundary_datum, reference_initial_datum
from kdvlayer.hyperbolic import estimate_lifespan
from kdvlayer.layer import LayerHistory

quad = make_flux("quadratic", k=3.0, J=(-3.0, -0.5))
u_in, u_b = reference_initial_datum(), reference_boundary_datum()
hist = LayerHistory(quad, u_in, u_b, lifespan=estimate_lifespan(quad, u_in))

for eps in (0.08, 0.04, 0.02):
    cfg = SolverConfig(eps=eps, L=40.0, N=int(round(40 * 16 / eps)), dt=0.005, T=0.5)
    rows = []

    def grab(state, bg):
        U0 = bg.hyp.u[0] + bg.V[0] + state.w[0]
        rows.append((state.t, u_b(state.t) - bg.hyp.u[0], u_b(state.t) - U0,
                     np.max(np.abs(state.w))))

    solve_remainder(cfg, quad, u_in, u_b, history=hist, callback=grab)
    rows = np.array(rows)
    print(f"eps={eps:5.3f}: max wall miss of u alone {np.max(np.abs(rows[:, 1])):.4f}, "
          f"of u+V+w {np.max(np.abs(rows[:, 2])):.1e}; sup|w| {np.max(rows[:, 3]):.2e}")
