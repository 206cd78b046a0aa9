import csv
import math

import numpy as np
import pytest

from kdvlayer import dispersive
from kdvlayer.dispersive import (RemainderState, RemainderStepper, SolverConfig, SourcePair,
                                 assemble_sources, helmholtz_apply, helmholtz_green_solve,
                                 helmholtz_solve_halfline, reconstruct_full, residual_full,
                                 solve_remainder, step_remainder, write_snapshot_csv)
from kdvlayer.errors import (CoverageError, DivergenceError, StabilityError,
                             ThresholdCrossedError)
from kdvlayer.flux import make_flux
from kdvlayer.functions import ExpPoly
from kdvlayer.hyperbolic import solve_characteristics
from kdvlayer.layer import LayerHistory


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eps=0.1, L=10, N=8, dt=0.1, T=1)
    with pytest.raises(ValueError):
        SolverConfig(eps=0.1, L=10, N=100, dt=0.1, T=1, nu=1e-3)
    with pytest.raises(ValueError):
        SolverConfig(eps=0.1, L=10, N=100, dt=0.1, T=1, scheme="rk4")
    cfg = SolverConfig(eps=0.1, L=10, N=100, dt=0.1, T=1)
    assert cfg.nsteps == 10 and cfg.h == 0.1
    r = cfg.refined()
    assert r.N == 200 and r.dt == 0.05


def test_config_domain_check(quad):
    cfg = SolverConfig(eps=0.1, L=1.0, N=100, dt=0.1, T=0.4)
    with pytest.raises(ValueError):
        cfg.check(quad)
    with pytest.raises(ValueError):
        SolverConfig(eps=0.01, L=10, N=100, dt=0.1, T=0.8).check(quad, lifespan=0.69)


def test_state_primitive():
    x = np.linspace(0, 10, 2001)
    s = RemainderState(0.0, x, x * np.exp(-x))
    assert s.W[0] == 0.0
    exact = 1 - (1 + x) * np.exp(-x)
    assert np.max(np.abs(s.W - exact)) < 5e-5
    assert np.max(np.abs(np.gradient(s.W, x[1] - x[0]) - s.w)[1:-1]) < 5e-5


# -- Helmholtz primitive ----------------------------------------------------

def test_helmholtz_reproduces_rhs():
    rng = np.random.default_rng(3)
    x = np.linspace(0, 20, 801)
    rhs = rng.standard_normal(x.size)
    z = helmholtz_solve_halfline(0.7, rhs, 0.3, x[1] - x[0])
    back = helmholtz_apply(0.7, z, x[1] - x[0])
    back[0] -= (0.7 / (x[1] - x[0])) ** 2 * 0.0  # wall value is part of the stencil
    assert z[0] == 0.3 and z[-1] == 0.0
    assert np.max(np.abs(back - rhs[1:-1])) <= 1e-12 * np.max(np.abs(rhs))


@pytest.mark.parametrize("case", ["decay", "homogeneous"])
def test_helmholtz_closed_forms_second_order(case):
    errs = []
    for n in (400, 800, 1600):
        x = np.linspace(0, 30, n + 1)
        h = x[1] - x[0]
        if case == "decay":
            a = 0.5
            z = helmholtz_solve_halfline(a, (1 - a * a) * np.exp(-x), 0.0, h)
            exact = np.exp(-x) - np.exp(-2 * x)
        else:
            z = helmholtz_solve_halfline(1.0, np.zeros_like(x), 1.0, h)
            exact = np.exp(-x)
        errs.append(np.max(np.abs(z - exact)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_helmholtz_zero():
    z = helmholtz_solve_halfline(0.3, np.zeros(50), 0.0, 0.1)
    assert not np.any(z)


def test_helmholtz_self_adjoint():
    rng = np.random.default_rng(5)
    n, h, a = 300, 0.05, 0.4
    r1, r2 = rng.standard_normal(n), rng.standard_normal(n)
    r1[[0, -1]] = 0
    r2[[0, -1]] = 0
    z1 = helmholtz_solve_halfline(a, r1, 0.0, h)
    z2 = helmholtz_solve_halfline(a, r2, 0.0, h)
    lhs, rhs = np.dot(z1, r2), np.dot(z2, r1)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_green_kernel_matches_tridiagonal():
    # the image-charge kernel solves the same half-line problem
    errs = []
    for n in (400, 800):
        x = np.linspace(0, 12, n + 1)
        a = 0.6
        rhs = x ** 2 * np.exp(-x)
        z = helmholtz_solve_halfline(a, rhs, 0.0, x[1] - x[0])
        g = helmholtz_green_solve(a, rhs, x)
        errs.append(np.max(np.abs(z - g)[: n // 2]))
    assert errs[1] < errs[0] / 3 and errs[1] < 1e-4


# -- stepping ---------------------------------------------------------------

def _dense(ab, m, l=2, u=3):
    A = np.zeros((m, m))
    for i in range(m):
        for j in range(max(0, i - l), min(m, i + u + 1)):
            A[i, j] = ab[u + i - j, j]
    return A


def test_zero_in_zero_out(quad):
    cfg = SolverConfig(eps=0.05, L=10, N=400, dt=0.01, T=0.1)
    x = cfg.x
    s = RemainderState(0.0, x, np.zeros_like(x))
    z = np.zeros_like(x)
    new = step_remainder(s, SourcePair(z, z), cfg, quad, np.full_like(x, -1.0))
    assert not np.any(new.w)


def test_stepping_matrix_spectral_radius():
    lin = make_flux("linear", c=1.0)
    for eps, N, dt in [(0.05, 200, 0.01), (0.1, 300, 0.05), (0.02, 400, 0.002)]:
        cfg = SolverConfig(eps=eps, L=10, N=N, dt=dt, T=1)
        st = RemainderStepper(cfg, lin)
        a = np.full(N + 1, -1.0)
        m = N - 1
        K1 = _dense(st._matrix(a, 1.0, dt), m)
        rho1 = np.max(np.abs(np.linalg.eigvals(np.linalg.inv(K1))))
        assert rho1 <= 1.0 + 1e-10
        K2inv = np.linalg.inv(_dense(st._matrix(a, 1.5, dt), m))
        comp = np.block([[2.0 * K2inv, -0.5 * K2inv], [np.eye(m), np.zeros((m, m))]])
        rho2 = np.max(np.abs(np.linalg.eigvals(comp)))
        assert rho2 <= 1.0 + 1e-8


def _manufactured(model, eps, nu, L, N, dt, T, A=1.0, return_state=False):
    """Integrate with the exact forcing of w* = A t x^2 e^{-x} around u_a = -1."""
    cfg = SolverConfig(eps=eps, L=L, N=N, dt=dt, T=T, nu=nu,
                       scheme="nu-regularized" if nu else "imex-dispersion")
    x = cfg.x
    e = A * np.exp(-x)
    a = float(model.d1(-1.0))
    ua = np.full_like(x, -1.0)

    def forcing(t):
        w = t * x * x * e
        wx = t * (2 * x - x * x) * e
        wxxx = t * (-6 + 6 * x - x * x) * e
        wt = x * x * e
        wtxx = (2 - 4 * x + x * x) * e
        S = -(wt + a * wx + 6.0 * w * wx + eps ** 2 * wxxx - nu * wtxx)
        return SourcePair(S, np.zeros_like(x))

    st = RemainderStepper(cfg, model)
    prev, state = None, RemainderState(0.0, x, np.zeros_like(x))
    for n in range(cfg.nsteps):
        t1 = (n + 1) * cfg.dt_eff
        new = step_remainder(state, forcing(t1), cfg, model, ua, prev=prev, stepper=st)
        prev, state = state, new
    if return_state:
        return state.w
    return np.max(np.abs(state.w - T * x * x * e))


@pytest.mark.parametrize("nu", [0.0, 1e-3])
def test_manufactured_space_order(quad, nu):
    errs = [_manufactured(quad, 0.2, nu, 25.0, N, 1e-3, 0.5) for N in (500, 1000, 2000)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.8), (errs, rates)


def test_manufactured_time_order(quad):
    # temporal error isolated against a fine-step solution on the same grid
    run = lambda dt: _manufactured(quad, 0.2, 0.0, 25.0, 1000, dt, 0.5, A=0.1, return_state=True)
    ref = run(0.05 / 32)
    errs = [np.max(np.abs(run(dt) - ref)) for dt in (0.05, 0.025, 0.0125)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.0), (errs, rates)


def test_cfl_and_divergence_guards(quad):
    cfg = SolverConfig(eps=0.05, L=5, N=100, dt=0.5, T=1, w_bound=0.5)
    x = cfg.x
    s = RemainderState(0.0, x, 0.4 * np.sin(np.pi * x / 5))
    z = np.zeros_like(x)
    with pytest.raises(StabilityError):
        step_remainder(s, SourcePair(z, z), cfg, quad, np.full_like(x, -1.5))
    cfg = SolverConfig(eps=0.05, L=5, N=100, dt=1e-3, T=1, w_bound=0.5)
    big = SourcePair(np.full_like(x, -1e4), z)
    with pytest.raises(DivergenceError):
        step_remainder(RemainderState(0.0, x, np.zeros_like(x)), big, cfg, quad,
                       np.full_like(x, -1.5))


# -- sources and full runs --------------------------------------------------

def test_sources_vanish_for_matched_data(quad):
    u_in = ExpPoly(-1.2)
    hist = LayerHistory(quad, u_in, ExpPoly(-1.2))
    x = np.linspace(0, 5, 501)
    hyp = solve_characteristics(quad, u_in, 0.3, x)
    src = assemble_sources(quad, hyp, hist.at(0.3), 0.05)
    assert not np.any(src.E_b) and not np.any(src.E_inn)
    cfg = SolverConfig(eps=0.05, L=5, N=500, dt=0.01, T=0.2)
    tr = solve_remainder(cfg, quad, u_in, ExpPoly(-1.2), history=hist)
    assert np.max(np.abs(tr.final.w)) == 0.0 and tr.sup_weighted == 0.0


def test_linear_flux_sources_are_dtV(lin):
    u_in = ExpPoly(0.0, [(-0.2, 4, 1.0)])
    u_b = ExpPoly(0.0, [(0.5, 2, 1.0)])
    hist = LayerHistory(lin, u_in, u_b, lifespan=10.0)
    x = np.linspace(0, 8, 801)
    snap = hist.at(0.4)
    hyp = solve_characteristics(lin, u_in, 0.4, x)
    src = assemble_sources(lin, hyp, snap, 0.1)
    dtV = snap.sample(lin, x / 0.1, ("dtV",))["dtV"]
    assert np.array_equal(src.E_b, dtV)


def test_source_locality_reference(quad, ref_data, ref_history, ref_lifespan):
    eps = 0.04
    x = np.linspace(0, 40, 16001)
    for t in (0.1, 0.3, 0.5):
        hyp = solve_characteristics(quad, ref_data[0], t, x, ref_lifespan)
        src = assemble_sources(quad, hyp, ref_history.at(t), eps)
        far = np.max(np.abs(src.E_b[x > 10 * eps]))
        assert far <= 1e-8 * np.max(np.abs(src.E_b))


def test_coverage_error(quad, ref_data):
    hist = LayerHistory(quad, *ref_data, y_max=5.0)
    x = np.linspace(0, 10, 101)
    hyp = solve_characteristics(quad, ref_data[0], 0.2, x)
    with pytest.raises(CoverageError):
        assemble_sources(quad, hyp, hist.at(0.2), 0.1)


def test_compatibility_enforced(quad, ref_data):
    cfg = SolverConfig(eps=0.05, L=5, N=200, dt=0.05, T=0.1)
    with pytest.raises(ValueError):
        solve_remainder(cfg, quad, ref_data[0], ExpPoly(-0.9))


def test_threshold_guard(quad, ref_data, ref_history, monkeypatch):
    monkeypatch.setattr(dispersive, "weighted_energy", lambda s, e: 1.0)
    cfg = SolverConfig(eps=0.08, L=10, N=500, dt=0.01, T=0.1)
    with pytest.raises(ThresholdCrossedError) as info:
        solve_remainder(cfg, quad, *ref_data, history=ref_history)
    assert info.value.trajectory.status == "threshold-crossed"


def test_reference_run_and_reconstruction(quad, ref_data, ref_history, ref_lifespan, tmp_path):
    u_in, u_b = ref_data
    eps = 0.08
    cfg = SolverConfig(eps=eps, L=20, N=4000, dt=0.01, T=0.5, stride=10)
    tr = solve_remainder(cfg, quad, u_in, u_b, history=ref_history, lifespan=ref_lifespan,
                         store_fields=True)
    assert tr.weighted[0] == 0.0
    assert tr.sup_weighted < eps ** 2
    assert all(s.w[0] == 0.0 for s in tr.snapshots)
    assert len(tr.snapshots) == 6
    s = tr.final
    hyp = solve_characteristics(quad, u_in, s.t, s.x, ref_lifespan)
    snap = ref_history.at(s.t)
    full = reconstruct_full(hyp, snap, s, eps, quad)
    assert full[0] == u_b(s.t)
    far = s.x > 5 * eps
    bound = abs(snap.Vbar) * np.exp(-math.sqrt(quad.c) * s.x / eps)
    assert np.all(np.abs(full - hyp.u - s.w)[far] <= bound[far] + 1e-15)
    z = RemainderState(s.t, s.x, np.zeros_like(s.x))
    assert np.array_equal(reconstruct_full(hyp, np.zeros_like(s.x), z, eps), hyp.u)
    with pytest.raises(ValueError):
        reconstruct_full(hyp, snap, RemainderState(s.t, s.x[::2], s.w[::2]), eps, quad)
    p = tmp_path / "snap.csv"
    write_snapshot_csv(p, s, eps)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["x", "w", "W", "u", "V_scaled", "u_eps_reconstructed"]
    assert len(rows) == s.x.size + 1


def test_residual_full_basic(quad):
    x = np.linspace(0, 1, 50)
    snaps = [(t, x, np.full_like(x, -1.0)) for t in (0.0, 0.1, 0.2)]
    assert residual_full(quad, snaps, 0.1) == 0.0
    with pytest.raises(ValueError):
        residual_full(quad, snaps[:2], 0.1)
