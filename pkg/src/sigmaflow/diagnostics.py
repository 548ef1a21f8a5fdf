"""Post-processing in the radial variable rho.

A profile f(x) and a potential u' determine v'(rho) through f(v'(rho)) = u'(rho).
From v' we read off the contact point, the cone-type asymptote
v' - lam ~ c e^(rho/2), the reduced potential difference and the trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (CaseMismatchError, DomainError, FitRejectedError,
                     InsufficientResolutionError)
from .flow import FlowState
from .obstacle import contact_point
from .stationary import StationaryProfile

FIT_WINDOW = (1e-8, 1e-2)


@dataclass
class RadialCurve:
    rho: np.ndarray
    vprime: np.ndarray
    clipped: np.ndarray
    base: float | None = None
    offset: np.ndarray | None = None

    def excess(self, lam):
        """v' - lam, using the cancellation-free offsets when available."""
        if self.offset is not None and self.base is not None and lam == self.base:
            return self.offset
        return self.vprime - lam


@dataclass
class ConeFit:
    exponent: float
    coefficient: float
    r2: float
    points: int


@dataclass
class TraceProfile:
    rho: np.ndarray
    x: np.ndarray
    values: np.ndarray | None
    blowup_locus: np.ndarray | None = None


def _invert_exact(profile: StationaryProfile, delta):
    """x - lam with profile.excess(x) = delta, bisected in log(x - lam)."""
    width = profile.x_hi - profile.lam
    lo = np.full_like(delta, np.log(width) - 745.0)
    hi = np.full_like(delta, np.log(width))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = profile.excess(profile.lam + np.exp(mid))
        up = val > delta
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.all(hi - lo < 1e-14):
            break
    return np.exp(0.5 * (lo + hi))


def reconstruct_vprime(state, profileU, rho_grid) -> RadialCurve:
    """Invert f(v', t) = u'(rho) for a flow state or an analytic profile.

    Flow states are inverted on the piecewise-linear interpolant, except in the
    first cell past a contact point, where sqrt(f - flat) is linear. Analytic
    profiles are inverted by bisection on f - flat_value, which keeps v' - lam
    accurate deep in the rho -> -inf tail. Samples outside the range of f are
    clipped to the interval ends and flagged.
    """
    rho = np.asarray(rho_grid, dtype=float)
    delta = np.asarray(profileU.uprime_excess(rho), dtype=float)
    if isinstance(state, StationaryProfile):
        top = float(state.excess(state.x_hi)[0])
        low = delta <= 0
        high = delta >= top
        inside = ~(low | high)
        offset = np.zeros_like(rho)
        offset[high] = state.x_hi - state.lam
        offset[inside] = _invert_exact(state, delta[inside])
        return RadialCurve(rho, state.lam + offset, low | high, state.lam, offset)
    x = state.x
    f = state.f - profileU.lo
    # running maximum guards against roundoff dips on flat parts
    f = np.maximum.accumulate(f)
    low = delta <= f[0]
    high = delta >= f[-1]
    idx = np.clip(np.searchsorted(f, delta, side="right") - 1, 0, x.size - 2)
    span = f[idx + 1] - f[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(span > 0, (delta - f[idx]) / span, 0.0)
    v = x[idx] + np.clip(w, 0.0, 1.0) * (x[idx + 1] - x[idx])
    v = np.where(low, x[0], np.where(high, x[-1], v))
    # past a contact point f - flat grows like (x - lam)^2, so the first free
    # cell is interpolated in sqrt(f - flat) from the extrapolated contact point
    lam = contact_point(x, state.f, profileU.lo)
    if lam > x[0]:
        j = min(int(np.searchsorted(x, lam, side="right")), x.size - 1)
        if f[j] > 0:
            near = (delta > 0) & (delta < f[j])
            v[near] = lam + (x[j] - lam) * np.sqrt(delta[near] / f[j])
    return RadialCurve(rho, v, low | high)


def lambda_estimate(state: FlowState, tol: float = 1e-8) -> float:
    """Limit of v' as rho -> -inf, i.e. the end of the flat part of f."""
    return contact_point(state.x, state.f, state.problem.flat_value, tol)


def _loglinear_fit(curve: RadialCurve, base: float, window):
    d = curve.excess(base)
    mask = (~curve.clipped) & (d > window[0]) & (d < window[1])
    if mask.sum() < 3:
        raise InsufficientResolutionError(
            f"only {int(mask.sum())} samples with v' - {base:.6g} inside {window}")
    r = curve.rho[mask]
    y = np.log(d[mask])
    slope, intercept = np.polyfit(r, y, 1)
    resid = y - (slope * r + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return ConeFit(float(slope), float(np.exp(intercept)), float(r2), int(mask.sum()))


def fit_decay_exponent(curve: RadialCurve, base: float, window=FIT_WINDOW) -> ConeFit:
    """Slope of log(v' - base) against rho over the window, whatever its value."""
    return _loglinear_fit(curve, base, window)


def fit_cone_exponent(curve: RadialCurve, lam: float, window=FIT_WINDOW) -> ConeFit:
    """Exponent of v' - lam ~ c e^(p rho) as rho -> -inf; a cone of angle pi has p = 1/2.

    Profiles with a positive slope at the contact point give p close to 1; such
    fits are rejected since they carry no cone singularity.
    """
    fit = _loglinear_fit(curve, lam, window)
    if fit.exponent > 0.75:
        raise FitRejectedError(
            f"decay exponent {fit.exponent:.3f} indicates a smooth end, not a cone", fit.exponent)
    return fit


def oscillation_and_pole(curve_limit: RadialCurve, curve_initial: RadialCurve,
                         tail_tol: float = 1e-6, window: float = 5.0):
    """Oscillation of the reduced potential difference and its slope at -inf.

    phi' = v'_limit - v'_initial is integrated from the left end of the grid.
    The slope over the leftmost `window` units of rho estimates the log-pole
    coefficient, which is the current coefficient lam - 1 in the blow-up case.
    """
    rho = curve_limit.rho
    if rho.shape != curve_initial.rho.shape or not np.allclose(rho, curve_initial.rho):
        raise DomainError("curves must share the rho grid")
    if rho[0] > -20 or rho[-1] < 20:
        raise DomainError("rho grid must span at least [-20, 20]")
    dphi = curve_limit.vprime - curve_initial.vprime
    scale = max(1.0, float(np.max(np.abs(curve_initial.vprime))))
    if abs(dphi[-1]) > tail_tol * scale:
        raise CaseMismatchError(
            f"potential difference keeps growing at +inf (phi' = {dphi[-1]:.3g}); "
            "the two curves belong to different classes")
    phi = cumulative_trapezoid(dphi, rho, initial=0.0)
    osc = float(phi.max() - phi.min())
    left = rho <= rho[0] + window
    if left.sum() < 2:
        raise InsufficientResolutionError("too few samples in the left window")
    pole = float(np.polyfit(rho[left], phi[left], 1)[0])
    return osc, pole


def trace_profile(state, profileU, rho_grid, min_slope: float = 1e-12) -> TraceProfile:
    """tr_omega chi along the curve: (n-1) x/f + 1/f_x, or its X_{m,n} analogue."""
    curve = reconstruct_vprime(state, profileU, rho_grid)
    keep = ~curve.clipped
    rho = curve.rho[keep]
    x = curve.vprime[keep]
    f = profileU.uprime(rho)
    if isinstance(state, StationaryProfile):
        fx = state.derivative(x)
        family, n, m = state.family, state.n, state.m
    else:
        grad = np.gradient(state.f, state.x, edge_order=2)
        fx = np.interp(x, state.x, grad)
        family, n, m = state.problem.family, state.problem.n, state.problem.m
    small = fx < min_slope
    if np.any(small):
        return TraceProfile(rho, x, None, x[small])
    if family == "Pn":
        values = (n - 1) * x / f + 1.0 / fx
    else:
        values = n * (1 + x) / (1 + f) + m * x / f + 1.0 / fx
    return TraceProfile(rho, x, values)


def sigma_range_drift(records) -> float:
    """Largest expansion of [sigma_min, sigma_max] beyond its initial range."""
    if not records:
        return 0.0
    lo0, hi0 = records[0]["sigma_min"], records[0]["sigma_max"]
    worst = 0.0
    for rec in records[1:]:
        worst = max(worst, lo0 - rec["sigma_min"], rec["sigma_max"] - hi0)
    return worst


def oracle_comparison(result, tol: float = 1e-8) -> dict:
    """Sup error against the analytic limit and contact-point agreement."""
    ref = result.reference
    out = {"sup_error": result.sup_error(), "lambda_flow": lambda_estimate(result.state, tol)}
    if ref is not None:
        out["lambda_exact"] = ref.lam
        out["lambda_error"] = abs(out["lambda_flow"] - ref.lam)
    return out
