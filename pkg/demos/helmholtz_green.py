"""
Half-line Helmholtz problem z - a^2 z'' = g, z(0) = 0
=====================================================

The tridiagonal finite-difference solve is compared with the Green's-kernel
(image charge) representation and with a closed form.

Run:  python demos/helmholtz_green.py
"""
import numpy as np

from kdvlayer.dispersive import helmholtz_green_solve, helmholtz_solve_halfline

a = 0.5
for n in (200, 400, 800, 1600):
    x = np.linspace(0, 30, n + 1)
    g = 0.75 * np.exp(-x)
    exact = np.exp(-x) - np.exp(-2 * x)
    z_fd = helmholtz_solve_halfline(a, g, 0.0, x[1] - x[0])
    z_gr = helmholtz_green_solve(a, g, x)
    print(f"N={n:5d}  FD error {np.max(np.abs(z_fd - exact)):.3e}   "
          f"kernel error {np.max(np.abs(z_gr - exact)):.3e}")
