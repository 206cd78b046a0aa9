import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from kdvlayer.errors import AdmissibleRangeError, DegenerateFitError
from kdvlayer.flux import FluxModel, make_flux, potential_F
from kdvlayer.layer import (LayerProfile, fit_decay_rate, layer_extent, profile_residual,
                            solve_dtV, solve_profile, write_layer_csv)


def sech2(A, kappa, y0):
    return lambda y: A / np.cosh(kappa * (y + y0)) ** 2


def csch2(A, kappa, y0):
    return lambda y: -A / np.sinh(kappa * (y + y0)) ** 2


def closed_forms(u0, Vbar):
    """Soliton-type closed forms of V'' + 6 u0 V + 3 V^2 = 0 (f = 3u^2)."""
    kappa = math.sqrt(-1.5 * u0)
    A = 2 * kappa ** 2
    if Vbar > 0:
        y0 = math.acosh(math.sqrt(A / Vbar)) / kappa
        return sech2(A, kappa, y0), kappa
    y0 = math.asinh(math.sqrt(A / -Vbar)) / kappa
    return csch2(A, kappa, y0), kappa


def test_linear_profile_exact(lin):
    y = np.linspace(0, 30, 3001)
    p = solve_profile(lin, 0.4, -1.0, y)
    assert np.max(np.abs(p.values + np.exp(-y))) <= 1e-8
    assert p.values[0] == -1.0
    assert np.interp(1.0, y, p.values) == pytest.approx(-0.367879, abs=1e-6)


def test_zero_jump_is_zero(quad):
    p = solve_profile(quad, -1.2, 0.0, np.linspace(0, 5, 11))
    assert not np.any(p.values)


@pytest.mark.parametrize("u0,Vbar", [(-2.0, 1.0), (-1.0, -0.5), (-2.5, 1.5), (-1.5, -1.2)])
def test_quadratic_closed_forms(quad, u0, Vbar):
    y = np.linspace(0, 10, 2001)
    p = solve_profile(quad, u0, Vbar, y)
    exact, _ = closed_forms(u0, Vbar)
    ref = exact(y)
    assert ref[0] == pytest.approx(Vbar, rel=1e-14)
    rel = np.max(np.abs(p.values - ref) / np.abs(ref))
    assert rel <= 1e-6


def test_range_error(quad):
    with pytest.raises(AdmissibleRangeError):
        solve_profile(quad, -1.0, 0.6, np.linspace(0, 1, 5))


@pytest.mark.parametrize("name,u0,Vbar", [("quadratic", -1.0, -0.5), ("quadratic", -2.0, 1.0),
                                          ("quadratic", -0.8, -2.1), ("cubic-perturbed", -1.0, 0.45),
                                          ("exponential", 0.5, -3.0), ("linear", 0.0, 4.0)])
def test_decay_bound_and_monotonicity(name, u0, Vbar):
    m = make_flux(name)
    y = np.linspace(0, layer_extent(m, Vbar), 4001)
    p = solve_profile(m, u0, Vbar, y)
    assert np.all(np.abs(p.values) <= abs(Vbar) * np.exp(-math.sqrt(m.c) * y) + 1e-12)
    d = np.diff(p.values)
    if Vbar > 0:
        assert np.all(d <= 0) and np.all(p.values >= 0)
    else:
        assert np.all(d >= 0) and np.all(p.values <= 0)


def test_energy_identity(quad):
    worst = []
    for n in (1200, 2400, 4800):
        y = np.linspace(0, 12, n + 1)
        p = solve_profile(quad, -1.0, -0.5, y)
        dV = np.gradient(p.values, y[1] - y[0])
        Fv = 3.0 * p.values ** 2 * (-1.0 + p.values / 3.0)
        worst.append(np.max(np.abs(Fv + 0.5 * dV ** 2)[1:-1]))
    # F + (D V)^2 / 2 = O(h^2) at interior points
    assert worst[0] / worst[1] > 3.5 and worst[1] / worst[2] > 3.5
    # the stored slope satisfies the identity to ODE accuracy
    assert np.max(np.abs(Fv + 0.5 * p.slope ** 2)) <= 1e-12


def test_branch_symmetry_linear():
    base = make_flux("linear", c=2.0, b=0.3)
    u0 = 0.5
    refl = FluxModel(name="reflected", f=lambda u: -base.f(2 * u0 - np.asarray(u)),
                     d1=lambda u: base.d1(2 * u0 - np.asarray(u)),
                     d2=lambda u: -base.d2(2 * u0 - np.asarray(u)),
                     d3=lambda u: base.d3(2 * u0 - np.asarray(u)),
                     d4=lambda u: -base.d4(2 * u0 - np.asarray(u)),
                     c=2.0, J=base.J)
    y = np.linspace(0, 10, 501)
    a = solve_profile(base, u0, 1.3, y)
    b = solve_profile(refl, u0, -1.3, y)
    assert np.allclose(a.values, -b.values, atol=1e-12)


def test_profile_residual(lin, quad):
    y = np.arange(0, 20 + 1e-12, 0.01)
    p = LayerProfile(0.0, -1.0, y, -np.exp(-y))
    assert profile_residual(lin, p) <= 1e-3 * np.max(np.abs(p.values))
    assert profile_residual(lin, LayerProfile(0.0, 0.0, y, np.zeros_like(y))) == 0.0
    y = np.arange(0, 10 + 1e-12, 0.005)
    exact, _ = closed_forms(-2.0, 1.0)
    p = LayerProfile(-2.0, 1.0, y, exact(y))
    assert profile_residual(quad, p) <= 1e-3
    with pytest.raises(ValueError):
        profile_residual(quad, LayerProfile(-2.0, 1.0, y[:2], exact(y[:2])))


def test_dtV_trivial_and_linear(quad, lin):
    y = np.linspace(0, 30, 3001)
    V = solve_profile(quad, -1.0, -0.5, y)
    Z = solve_dtV(quad, -1.0, 0.0, 0.0, V)
    assert not np.any(Z.values)
    Vl = solve_profile(lin, 0.0, -1.0, y)
    Zl = solve_dtV(lin, 0.0, 0.7, 0.2, Vl)
    assert np.max(np.abs(Zl.values - 0.2 * np.exp(-y))) <= 1e-4
    assert Zl.decay_rate == pytest.approx(1.0, abs=1e-3)


def test_dtV_against_bvp_oracle(quad):
    u0, du0 = -1.0, 0.1
    exact, _ = closed_forms(u0, -0.5)
    Lmax = 40.0

    def rhs(y, Z):
        V = exact(y)
        sigma = (6 * (u0 + V) - 6 * u0) * du0
        return np.vstack([Z[1], -6 * (u0 + V) * Z[0] - sigma])

    def bc(za, zb):
        return np.array([za[0], zb[0]])

    yy = np.linspace(0, Lmax, 4001)
    sol = solve_bvp(rhs, bc, yy, np.zeros((2, yy.size)), tol=1e-10, max_nodes=10 ** 6)
    assert sol.success
    y = np.linspace(0, Lmax, 40 * 512 + 1)
    V = solve_profile(quad, u0, -0.5, y)
    Z = solve_dtV(quad, u0, du0, 0.0, V)
    assert np.max(np.abs(Z.values - sol.sol(y)[0])) <= 1e-6


def test_fit_decay_rate():
    y = np.linspace(0, 40, 4001)
    assert fit_decay_rate(LayerProfile(0, 1, y, np.exp(-y))) == pytest.approx(1.0, abs=1e-6)
    kappa = math.sqrt(1.5)
    y = np.linspace(0, 15, 3001)
    s = LayerProfile(-1.0, 1.0, y, 3.0 / np.cosh(kappa * (y + 0.3)) ** 2)
    assert fit_decay_rate(s) == pytest.approx(math.sqrt(6), abs=1e-3)
    with pytest.raises(DegenerateFitError):
        fit_decay_rate(LayerProfile(0, 0, y, np.zeros_like(y)))


def test_derivative_layer_decay_reference(quad, ref_history):
    root_c = math.sqrt(quad.c)
    for t in (0.1, 0.25, 0.5):
        snap = ref_history.at(t)
        assert fit_decay_rate(snap.dtV) >= root_c / 2 - 0.05
        assert fit_decay_rate(snap.V) >= root_c - 1e-3
    assert not np.any(ref_history.at(0.0).dtV.values)


def test_layer_csv(tmp_path, ref_history):
    snap = ref_history.at(0.3)
    p = tmp_path / "layer.csv"
    write_layer_csv(p, snap)
    head = p.read_text().splitlines()[0]
    assert head == "y,V,dtV"
