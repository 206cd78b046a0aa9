"""Uniform-grid finite differences and trapezoid quadrature (second order)."""
import numpy as np


def fd_weights(offsets, order):
    """Weights w with sum_j w_j f(x + o_j h) ~ h**order f^(order)(x)."""
    o = np.asarray(offsets, dtype=float)
    n = o.size
    A = np.vander(o, n, increasing=True).T
    b = np.zeros(n)
    b[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, b)


_D3_CENTER = np.array([-0.5, 1.0, 0.0, -1.0, 0.5])      # offsets -2..2
_D3_LEFT0 = fd_weights([0, 1, 2, 3, 4], 3)              # offsets 0..4
_D3_LEFT1 = fd_weights([-1, 0, 1, 2, 3], 3)             # offsets -1..3


def d1(v, h):
    return np.gradient(v, h, edge_order=2)


def d2(v, h):
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h ** 2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h ** 2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h ** 2
    return out


def d3(v, h):
    n = v.size
    if n < 6:
        raise ValueError("d3 needs at least 6 points")
    out = np.empty_like(v)
    out[2:-2] = (-0.5 * v[:-4] + v[1:-3] - v[3:-1] + 0.5 * v[4:])
    out[0] = _D3_LEFT0 @ v[:5]
    out[1] = _D3_LEFT1 @ v[:5]
    # mirrored closures: odd derivative flips sign under reflection
    out[-1] = -(_D3_LEFT0 @ v[-1:-6:-1])
    out[-2] = -(_D3_LEFT1 @ v[-1:-6:-1])
    return out / h ** 3


def trapz(v, h):
    return h * (np.sum(v) - 0.5 * (v[0] + v[-1]))


def cumtrapz(v, h):
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(0.5 * h * (v[1:] + v[:-1]), out=out[1:])
    return out
