import numpy as np
import pytest
from scipy.optimize import bisect

from kdvlayer.errors import AdmissibleRangeError, LifespanExceededError, NearBlowupError
from kdvlayer.flux import make_flux
from kdvlayer.functions import ExpPoly
from kdvlayer.hyperbolic import (boundary_trace, estimate_lifespan, solve_characteristics,
                                 time_derivatives, validate_compatibility)


def test_lifespan_linear_is_cap(lin, ref_data):
    assert estimate_lifespan(lin, ref_data[0], cap=10.0) == 10.0


def test_lifespan_reference(quad, ref_data):
    T = estimate_lifespan(quad, ref_data[0])
    x = np.linspace(0, 60, 600001)
    d = 4 * x ** 3 * np.exp(-x) - x ** 4 * np.exp(-x)
    assert T == pytest.approx(0.9 / (0.6 * d.max()), rel=1e-6)
    assert 0 < T < 10


def test_lifespan_rarefaction_is_cap(quad):
    # f'(u_in) nonincreasing in x0 means no compression
    # u = -1 - 0.5 e^{-x/2} increases, so f'(u) = 6u is nondecreasing in x0
    u_in = ExpPoly(-1.0, [(-0.5, 0, 0.5)])
    assert estimate_lifespan(quad, u_in, cap=7.0) == 7.0


def test_lifespan_range_error(quad):
    with pytest.raises(AdmissibleRangeError):
        estimate_lifespan(quad, ExpPoly(0.0))


def test_linear_translation_exact(lin):
    u_in = ExpPoly(0.5, [(1.0, 2, 1.0), (0.3, 0, 2.0)])
    x = np.linspace(0, 20, 401)
    fld, iters = solve_characteristics(lin, u_in, 0.7, x, return_iterations=True)
    assert np.max(np.abs(fld.u - u_in(x + 0.7))) <= 1e-12
    assert iters <= 1
    assert np.allclose(fld.ux, u_in.diff()(x + 0.7), atol=1e-12)


def test_t_zero_returns_datum(quad, ref_data):
    x = np.linspace(0, 10, 101)
    fld = solve_characteristics(quad, ref_data[0], 0.0, x)
    assert np.array_equal(fld.u, ref_data[0](x))
    assert np.allclose(fld.ux, ref_data[0].diff()(x), atol=1e-15)


def test_bisection_oracle(quad, ref_data):
    u_in = ref_data[0]
    t = 0.1
    for x in (0.0, 0.5, 1.0, 3.0, 7.5):
        G = lambda u: u - u_in(x - 6.0 * u * t)
        oracle = bisect(G, -2.9, -0.6, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        fld = solve_characteristics(quad, u_in, t, np.array([x]))
        assert abs(fld.u[0] - oracle) <= 1e-12


def test_derivatives_match_finite_differences(quad, ref_data):
    u_in = ref_data[0]
    t, h = 0.4, 5e-4
    x = np.linspace(0.5, 12, 60)
    f0 = solve_characteristics(quad, u_in, t, x)
    fp = solve_characteristics(quad, u_in, t, x + h)
    fm = solve_characteristics(quad, u_in, t, x - h)
    assert np.allclose((fp.u - fm.u) / (2 * h), f0.ux, atol=2e-5)
    assert np.allclose((fp.ux - fm.ux) / (2 * h), f0.uxx, atol=2e-5)
    assert np.allclose((fp.uxx - fm.uxx) / (2 * h), f0.uxxx, atol=2e-5)
    tp = solve_characteristics(quad, u_in, t + h, x)
    tm = solve_characteristics(quad, u_in, t - h, x)
    assert np.allclose((tp.u - tm.u) / (2 * h), f0.ut, atol=2e-5)
    assert np.allclose((tp.ux - tm.ux) / (2 * h), f0.utx, atol=2e-5)
    _, utt, uttt = time_derivatives(quad, f0)
    _, uttp, _ = time_derivatives(quad, tp)
    _, uttm, _ = time_derivatives(quad, tm)
    assert np.allclose((tp.ut - tm.ut) / (2 * h), utt, atol=2e-5)
    assert np.allclose((uttp - uttm) / (2 * h), uttt, atol=1e-4)


def test_transport_residual_and_constancy(quad, ref_data):
    u_in = ref_data[0]
    x0 = np.linspace(0, 15, 200)
    t = 0.45
    xs = x0 + quad.d1(u_in(x0)) * t
    keep = xs >= 0
    fld = solve_characteristics(quad, u_in, t, xs[keep])
    assert np.max(np.abs(fld.u - u_in(x0[keep]))) <= 1e-12
    assert np.max(np.abs(fld.ut + quad.d1(fld.u) * fld.ux)) <= 1e-14


def test_conservation_law_residual_second_order(quad, ref_data):
    u_in = ref_data[0]
    res = []
    for n in (200, 400, 800):
        x = np.linspace(0, 20, n + 1)
        h = x[1] - x[0]
        dt = h / 4
        t = 0.3
        up = solve_characteristics(quad, u_in, t + dt, x).u
        um = solve_characteristics(quad, u_in, t - dt, x).u
        u = solve_characteristics(quad, u_in, t, x).u
        r = (up - um) / (2 * dt) + np.gradient(quad.f(u), h, edge_order=2)
        res.append(np.max(np.abs(r)))
    rates = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(rates > 1.8)


def test_lifespan_and_blowup_errors(quad, ref_data):
    x = np.linspace(0, 10, 11)
    with pytest.raises(LifespanExceededError):
        solve_characteristics(quad, ref_data[0], 0.8, x, lifespan=0.69)
    # slow characteristics (|u| small) keep the first crossing inside x >= 0
    m = make_flux("quadratic", J=(-0.6, -0.01))
    u_in = ExpPoly(-0.1, [(-0.05, 4, 1.0)])
    T = estimate_lifespan(m, u_in)
    fld = solve_characteristics(m, u_in, T, np.linspace(0, 10, 4001))
    assert fld.jacobian.min() == pytest.approx(0.1, abs=2e-3)
    with pytest.raises(NearBlowupError):
        solve_characteristics(m, u_in, 0.97 * T / 0.9, np.linspace(0, 10, 4001))


def test_boundary_trace(quad, lin, ref_data):
    u_in = ref_data[0]
    tr = boundary_trace(quad, u_in, [0.0, 0.2])
    assert tr.u0[0] == u_in(0.0)
    assert tr.du0[0] == 0.0
    u2 = ExpPoly(0.5, [(1.0, 2, 1.0)])
    ts = np.array([0.0, 0.3, 1.1])
    trl = boundary_trace(lin, u2, ts)
    assert np.allclose(trl.u0, u2(ts), atol=1e-13)
    assert np.allclose(trl.du0, u2.diff()(ts), atol=1e-13)
    assert np.allclose(trl.ddu0, u2.diff(2)(ts), atol=1e-12)


def test_compatibility(ref_data):
    u_in, u_b = ref_data
    assert validate_compatibility(u_in, u_b).passed
    bad = validate_compatibility(u_in, ExpPoly(-0.9, [(0.3, 2, 1.0)]))
    assert bad.failures == ["u_b(0) = u_in(0)"]
    rep = validate_compatibility(ExpPoly(-1.0, [(1.0, 1, 0.0)]), ExpPoly(-1.0))
    assert "dx u_in(0) = 0" in rep.failures
    assert "FAIL" in str(rep)
