from fractions import Fraction as Fr
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigmaflow.classes import BLOWUP, CONIC, SMOOTH, PnProblem, XmnProblem, classify_pn
from sigmaflow.errors import CaseMismatchError, DomainError
from sigmaflow.gpoly import g_mn, g_mnk
from sigmaflow.stationary import (eval_stationary, export_csv, lambda_equation_pn, perturbed,
                                  solve_lambda_pn, solve_xmn_system, stationary_for,
                                  stationary_pn, stationary_residual, stationary_xmn)


def test_pn_smooth_example():
    s = stationary_pn(PnProblem(2, 1, 3, 2))
    assert s.exact_branch == (Fr(5, 3), Fr(-2, 3))
    assert s.lam == 1.0
    assert eval_stationary(s, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_stationary(s, 2.0) == pytest.approx(3.0, abs=1e-14)


def test_pn_boundary_example():
    s = stationary_pn(PnProblem(2, 1, Fr(5, 4), 2))
    assert s.exact_branch == (Fr(1, 2), Fr(1, 2))
    assert s.derivative(1.0)[0] == pytest.approx(0.0, abs=1e-15)
    x = np.linspace(1, 2, 11)
    assert np.allclose(s(x), x / 2 + 1 / (2 * x), atol=1e-15)


def test_pn_blowup_example():
    p = PnProblem(2, 1, Fr(6, 5), 2)
    lam = 2.4 - np.sqrt(1.76)
    assert solve_lambda_pn(p) == pytest.approx(lam, abs=1e-12)
    s = stationary_pn(p)
    a, b = s.branch
    assert a == pytest.approx(1 / (2 * lam), abs=1e-12)
    assert b == pytest.approx(lam / 2, abs=1e-12)
    assert eval_stationary(s, 2.0) == pytest.approx(1.2, abs=1e-12)
    assert eval_stationary(s, lam) == 1.0
    assert s.derivative(lam + 1e-12)[0] == pytest.approx(0.0, abs=1e-10)
    assert np.all(s(np.linspace(1, lam, 20)) == 1.0)


def test_lambda_other_examples():
    assert solve_lambda_pn(PnProblem(2, 1, Fr(5, 4), 2)) == 1.0
    # 4/lam + lam^2/4 = 3.6, i.e. lam^3 - 14.4 lam + 16 = 0
    roots = np.roots([1, 0, -14.4, 16])
    lam = min(r.real for r in roots if abs(r.imag) < 1e-12 and 1 < r.real < 2)
    assert solve_lambda_pn(PnProblem(3, 1, 1.2, 2.0)) == pytest.approx(lam, abs=1e-11)
    assert lam == pytest.approx(1.245, abs=1e-3)
    with pytest.raises(CaseMismatchError):
        solve_lambda_pn(PnProblem(2, 1, 3, 2))


def test_domain_errors():
    s = stationary_pn(PnProblem(2, 1, 3, 2))
    with pytest.raises(DomainError):
        eval_stationary(s, 0.5)
    with pytest.raises(DomainError):
        eval_stationary(s, 2.5)


def test_residuals_and_sensitivity():
    for p in (PnProblem(2, 1, 3, 2), PnProblem(2, 1, 1.2, 2.0), PnProblem(3, 2, 2, 1.5),
              PnProblem(4, 3, 1.1, 2.5)):
        s = stationary_pn(p)
        assert stationary_residual(s) <= 1e-10
        assert stationary_residual(s, p) <= 1e-10
        rng = np.random.default_rng(3)
        for _ in range(20):
            da, db = 1e-3 * rng.choice([-1, 1], 2)
            assert stationary_residual(perturbed(s, da, db), p) > 1e-4
        # the x^(k-n) direction has sigma_k = 0 and only shows in the boundary value
        assert stationary_residual(perturbed(s, 0, 1e-3)) <= 1e-10
        assert stationary_residual(perturbed(s, 0, 1e-3), p) > 1e-4


def _c1_gap(s, h=1e-4):
    lam = s.lam
    f0, f1, f2 = s(np.array([lam, lam + h, lam + 2 * h]))
    right = (-3 * f0 + 4 * f1 - f2) / (2 * h)
    g0, g1, g2 = s(np.array([lam, lam - h, lam - 2 * h]))
    left = (3 * g0 - 4 * g1 + g2) / (2 * h)
    return abs(right - left)


def test_c1_at_contact_point():
    for p in (PnProblem(2, 1, 1.2, 2.0), PnProblem(3, 1, 1.2, 2.0), PnProblem(4, 2, 1.1, 2.5),
              PnProblem(3, 2, 1.05, 3.0)):
        s = stationary_pn(p)
        assert s.lam > 1.0
        assert _c1_gap(s) <= 1e-6
    s = stationary_xmn(XmnProblem(0, 1, 1, 0.1, 2.0))
    assert _c1_gap(s) <= 1e-6


def test_xmn_blowup_example():
    lam = 2.3 - np.sqrt(2.3**2 - 3.4)
    alpha = 1 / (1 + lam)
    beta = lam - alpha * (lam**2 / 2 + lam)
    sysv = solve_xmn_system(XmnProblem(0, 1, 1, 0.1, 2.0))
    assert sysv.lam == pytest.approx(lam, abs=1e-11)
    assert sysv.alpha == pytest.approx(alpha, abs=1e-11)
    assert sysv.beta == pytest.approx(beta, abs=1e-11)
    assert (sysv.lam, sysv.alpha, sysv.beta) == pytest.approx((0.92523, 0.51942, 0.22233), abs=1e-5)
    assert 4 * sysv.alpha + sysv.beta == pytest.approx(2.3, abs=1e-12)


def test_xmn_smooth_and_boundary():
    sysv = solve_xmn_system(XmnProblem(0, 1, 1, 1, 1))
    assert (sysv.alpha, sysv.beta, sysv.lam) == (2.0, 0.0, 0.0)
    s = stationary_xmn(XmnProblem(0, 1, 1, 1, 1))
    assert eval_stationary(s, 1.0) == pytest.approx(1.0, abs=1e-12)
    sysv = solve_xmn_system(XmnProblem(0, 1, 1, Fr(2, 3), 2))
    assert sysv.lam == 0.0 and sysv.beta == 0.0


def test_xmn_level_set_and_monotone():
    for p in (XmnProblem(0, 1, 1, 0.1, 2.0), XmnProblem(1, 2, 2, 0.3, 1.5),
              XmnProblem(2, 1, 1, 1.0, 1.0), XmnProblem(1, 1, 3, 0.5, 2.0)):
        s = stationary_xmn(p)
        P, G = g_mnk(p.m, p.n, p.k), g_mn(p.m, p.n)
        x = np.linspace(s.lam, s.x_hi, 60)[1:]
        f = s(x)
        alpha, beta = s.branch
        assert np.max(np.abs(P(f, x) - (alpha * G(0.0, x) + beta))) < 1e-10
        assert np.all(np.diff(f) > 0)
        assert eval_stationary(s, s.x_hi) == pytest.approx(float(p.b), abs=1e-10)
        assert stationary_residual(s) <= 1e-9


def test_strict_cases_have_positive_slope():
    for p in (PnProblem(2, 1, 3, 2), PnProblem(3, 2, 2, 1.5), PnProblem(4, 4, 1.5, 2.0)):
        assert classify_pn(p).variant == SMOOTH
        assert stationary_pn(p).derivative(1.0)[0] > 1e-6
    s = stationary_xmn(XmnProblem(0, 1, 1, 1, 1))
    assert s.derivative(1e-9)[0] > 1e-6


def test_export(tmp_path):
    s = stationary_for(PnProblem(2, 1, 3, 2))
    path = tmp_path / "s.csv"
    export_csv(s, np.linspace(1, 2, 5), path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (5, 3)
    assert data[-1, 1] == pytest.approx(3.0)


pn = st.tuples(st.integers(2, 6), st.integers(1, 6), st.floats(1.01, 3.0),
               st.floats(1.05, 3.0)).filter(lambda t: t[1] <= t[0])


@settings(max_examples=200, deadline=None)
@given(pn)
def test_pn_profile_properties(params):
    n, k, alpha, beta = params
    p = PnProblem(n, k, alpha, beta)
    s = stationary_pn(p)
    assert eval_stationary(s, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert eval_stationary(s, beta) == pytest.approx(alpha, rel=1e-11)
    x = np.linspace(s.lam, beta, 50)
    f = s(x)
    if s.label.variant != SMOOTH or alpha <= beta:
        assert np.all(np.diff(f) > 0)
    if s.label.variant == BLOWUP:
        assert 1 < s.lam < beta
        assert abs(lambda_equation_pn(p, s.lam)) < 1e-9 * n * alpha**k
        # branch hits the obstacle with zero slope
        a, b = s.branch
        assert a * s.lam**k + b * s.lam ** (k - n) == pytest.approx(1.0, abs=1e-11)
        assert k * a * s.lam ** (k - 1) + (k - n) * b * s.lam ** (k - n - 1) == \
            pytest.approx(0.0, abs=1e-10)
    else:
        assert s.lam == 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.integers(1, 6), st.floats(1.05, 3.0), st.floats(0.01, 0.99))
def test_lambda_equation_decreasing(n, k, beta, frac):
    if k >= n:
        return
    p = PnProblem(n, k, 1.5, beta)
    lam1 = frac * beta
    lam2 = lam1 + 0.01 * (beta - lam1)
    assert lambda_equation_pn(p, lam2) < lambda_equation_pn(p, lam1)
    assert lambda_equation_pn(p, beta) + n * 1.5**k == pytest.approx(n)


def test_binomial_constant():
    s = stationary_pn(PnProblem(3, 2, 2, 1.5))
    assert s.constant == pytest.approx(comb(3, 2) * s.branch[0])
    assert classify_pn(PnProblem(2, 1, Fr(5, 4), 2)).variant == CONIC
