import numpy as np
import pytest

from sigmaflow.classes import PnProblem, XmnProblem
from sigmaflow.diagnostics import (RadialCurve, fit_cone_exponent, fit_decay_exponent,
                                   lambda_estimate, oracle_comparison, oscillation_and_pole,
                                   reconstruct_vprime, sigma_range_drift, trace_profile)
from sigmaflow.errors import (CaseMismatchError, DomainError, FitRejectedError,
                              InsufficientResolutionError)
from sigmaflow.flow import FlowProblem, FlowState, SchemeConfig, evolve, initial_values
from sigmaflow.potential import profile_for
from sigmaflow.stationary import stationary_for

CONIC = PnProblem(2, 1, 1.25, 2.0)
BLOW = PnProblem(2, 1, 1.2, 2.0)
SMOOTH = PnProblem(2, 1, 3, 2)


def chord_state(p, points=2001):
    fp = FlowProblem(p)
    x = fp.grid(points).nodes
    return FlowState(0.0, initial_values(fp, x), fp.variable, fp, x)


def rho_grid(R=40.0, count=8001):
    return np.linspace(-R, R, count)


def test_identity_case():
    p = PnProblem(2, 1, 2, 2)
    U = profile_for(p)
    rho = rho_grid()
    curve = reconstruct_vprime(chord_state(p, 101), U, rho)
    inside = ~curve.clipped
    assert np.max(np.abs(curve.vprime[inside] - U.uprime(rho[inside]))) < 1e-12
    tr = trace_profile(chord_state(p, 101), U, np.linspace(-10, 10, 101))
    assert np.allclose(tr.values, 2.0, atol=1e-9)


def test_limits_of_vprime():
    rho = rho_grid()
    c = reconstruct_vprime(stationary_for(SMOOTH), profile_for(SMOOTH), rho)
    assert c.vprime[0] == pytest.approx(1.0, abs=1e-9)
    assert c.vprime[-1] == pytest.approx(2.0, abs=1e-9)
    assert np.all(np.diff(c.vprime) >= 0)
    s = stationary_for(BLOW)
    c = reconstruct_vprime(s, profile_for(BLOW), rho)
    # v' - lam decays like e^(rho/2), about 1e-9 at rho = -40
    assert c.vprime[0] == pytest.approx(2.4 - np.sqrt(1.76), abs=1e-8)


def test_two_sided_inverse():
    rho = rho_grid()
    for p in (SMOOTH, CONIC, BLOW, XmnProblem(0, 1, 1, 0.1, 2.0)):
        s = stationary_for(p)
        U = profile_for(p)
        c = reconstruct_vprime(s, U, rho)
        inside = ~c.clipped
        back = s.excess(c.vprime[inside]) - U.uprime_excess(rho[inside])
        assert np.max(np.abs(back)) <= 1e-8
        # flow-state route: exact on the piecewise-linear interpolant
        st_ = chord_state(p, 257)
        c = reconstruct_vprime(st_, U, rho)
        inside = ~c.clipped
        back = np.interp(c.vprime[inside], st_.x, st_.f) - U.uprime(rho[inside])
        assert np.max(np.abs(back)) <= 1e-8


def test_cone_fits():
    rho = rho_grid()
    s = stationary_for(CONIC)
    fit = fit_cone_exponent(reconstruct_vprime(s, profile_for(CONIC), rho), s.lam)
    assert fit.exponent == pytest.approx(0.5, abs=0.05)
    assert fit.coefficient == pytest.approx(np.sqrt(0.5), abs=5e-3)
    s = stationary_for(BLOW)
    fit = fit_cone_exponent(reconstruct_vprime(s, profile_for(BLOW), rho), s.lam)
    assert 0.45 <= fit.exponent <= 0.55
    s = stationary_for(SMOOTH)
    curve = reconstruct_vprime(s, profile_for(SMOOTH), rho)
    with pytest.raises(FitRejectedError):
        fit_cone_exponent(curve, 1.0)
    assert 0.9 <= fit_decay_exponent(curve, 1.0).exponent <= 1.1
    with pytest.raises(InsufficientResolutionError):
        fit_cone_exponent(reconstruct_vprime(s, profile_for(SMOOTH), np.linspace(0, 1, 5)), 1.0)


def test_oscillation_and_pole():
    U = profile_for(BLOW)
    for R in (40.0, 80.0):
        rho = np.linspace(-R, R, 8001)
        lim = reconstruct_vprime(stationary_for(BLOW), U, rho)
        ini = reconstruct_vprime(chord_state(BLOW), U, rho)
        _, pole = oscillation_and_pole(lim, ini)
        assert pole == pytest.approx(stationary_for(BLOW).lam - 1, abs=1e-3)
    oscs = []
    U = profile_for(CONIC)
    for R in (40.0, 80.0):
        rho = np.linspace(-R, R, 8001)
        lim = reconstruct_vprime(stationary_for(CONIC), U, rho)
        ini = reconstruct_vprime(chord_state(CONIC), U, rho)
        osc, pole = oscillation_and_pole(lim, ini)
        oscs.append(osc)
        assert abs(pole) < 1e-3
    assert np.isfinite(oscs[0]) and abs(oscs[0] - oscs[1]) < 1e-3
    osc, pole = oscillation_and_pole(lim, lim)
    assert osc == 0 and pole == 0


def test_oscillation_errors():
    rho = rho_grid()
    a = reconstruct_vprime(stationary_for(SMOOTH), profile_for(SMOOTH), rho)
    other = PnProblem(2, 1, 3, 2.5)
    b = reconstruct_vprime(stationary_for(other), profile_for(other), rho)
    with pytest.raises(CaseMismatchError):
        oscillation_and_pole(a, b)
    short = reconstruct_vprime(stationary_for(SMOOTH), profile_for(SMOOTH), np.linspace(-5, 5, 11))
    with pytest.raises(DomainError):
        oscillation_and_pole(short, short)
    with pytest.raises(DomainError):
        oscillation_and_pole(a, short)


def test_trace_profiles():
    rho = np.linspace(-30, 30, 601)
    tr = trace_profile(stationary_for(SMOOTH), profile_for(SMOOTH), rho)
    assert tr.values is not None and np.max(tr.values) < 10
    # conic case: bounded on u' >= 1 + eps, with the bound growing as eps -> 0
    s = stationary_for(CONIC)
    U = profile_for(CONIC)
    bounds = []
    for eps in (1e-2, 1e-4):
        r = rho[U.uprime_excess(rho) >= eps]
        bounds.append(np.max(trace_profile(s, U, r).values))
    assert np.isfinite(bounds[0]) and bounds[1] > bounds[0]
    # f_x ~ e^(rho/2) near the contact point drops below 1e-12 by rho = -80
    tr = trace_profile(stationary_for(BLOW), profile_for(BLOW), np.linspace(-80, 30, 1101))
    assert tr.values is None and tr.blowup_locus.size > 0
    xp = XmnProblem(0, 1, 1, 1, 1)
    tr = trace_profile(stationary_for(xp), profile_for(xp), np.linspace(-10, 10, 51))
    assert np.all(np.isfinite(tr.values))


def test_flow_lambda_and_oracle():
    r = evolve(BLOW, 401, SchemeConfig(theta=1.0))
    lam = lambda_estimate(r.state)
    assert lam == pytest.approx(stationary_for(BLOW).lam, abs=1e-3)
    out = oracle_comparison(r)
    assert out["lambda_error"] < 1e-3 and out["sup_error"] < 5e-3


def test_flow_curve_tends_to_contact_point():
    # v' of a flow limit goes to the extrapolated contact point, not to the
    # last flat node, so the pole slope matches lam - 1 within a grid cell
    r = evolve(BLOW, 400, SchemeConfig(theta=1.0))
    U = profile_for(BLOW)
    rho = rho_grid()
    curve = reconstruct_vprime(r.state, U, rho)
    lam = lambda_estimate(r.state)
    # v' - lam ~ e^(rho/2), about 2e-9 at rho = -40
    assert 0 < curve.vprime[0] - lam < 1e-8
    assert np.all(np.diff(curve.vprime) >= 0)
    _, pole = oscillation_and_pole(curve, reconstruct_vprime(chord_state(BLOW, 400), U, rho))
    assert pole == pytest.approx(stationary_for(BLOW).lam - 1, abs=1e-3)


def test_sigma_range_drift():
    recs = [{"sigma_min": 1.0, "sigma_max": 2.0}, {"sigma_min": 1.1, "sigma_max": 2.5},
            {"sigma_min": 0.7, "sigma_max": 1.9}]
    assert sigma_range_drift(recs) == pytest.approx(0.5)
    assert sigma_range_drift([]) == 0.0


def test_curve_excess():
    c = RadialCurve(np.zeros(2), np.array([1.5, 2.0]), np.zeros(2, bool), 1.0, np.array([0.5, 1.0]))
    assert c.excess(1.0) is c.offset
    assert np.allclose(c.excess(0.5), [1.0, 1.5])
