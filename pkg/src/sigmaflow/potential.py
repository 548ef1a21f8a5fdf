"""Radial Calabi-ansatz potentials and flux functions.

The default potential family is logistic in the radial variable rho:

    u'(rho) = (lo + hi e^rho) / (1 + e^rho),

which gives u'' = Q(u') with Q(y) = (y - lo)(hi - y)/(hi - lo) and the
closed-form inverse rho = log((y - lo)/(hi - y)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from . import _kernels as K
from .errors import DomainError, InvalidProblemError

_EMPTY = np.zeros(2)


@dataclass(frozen=True)
class PotentialProfile:
    """Logistic profile with u'(-inf) = lo and u'(+inf) = hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo >= 0 and self.hi > self.lo):
            raise InvalidProblemError(f"need hi > lo >= 0, got lo={self.lo}, hi={self.hi}")

    def uprime(self, rho):
        return self.lo + (self.hi - self.lo) * expit(rho)

    def uprime_excess(self, rho):
        """u'(rho) - lo without cancellation for very negative rho."""
        return (self.hi - self.lo) * expit(rho)

    def usecond(self, rho):
        # s(1-s) = expit(rho) expit(-rho), accurate in both tails
        return (self.hi - self.lo) * expit(rho) * expit(-np.asarray(rho, dtype=float))

    def q(self, y):
        return q_of(self, y)

    def invert(self, y):
        return invert_uprime(self, y)

    def kernel_args(self):
        return K.Q_LOGISTIC, _EMPTY, _EMPTY


@dataclass(frozen=True)
class TabulatedProfile:
    """Profile sampled as (rho, u') pairs with strictly increasing u'.

    Q is tabulated against u' from a second-order derivative estimate and
    pinned to zero at the limit values lo and hi.
    """

    rho: np.ndarray
    values: np.ndarray
    lo: float
    hi: float
    q_y: np.ndarray = field(repr=False)
    q_v: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(cls, rho, values, lo=None, hi=None):
        rho = np.asarray(rho, dtype=float)
        values = np.asarray(values, dtype=float)
        validate_profile_samples(rho, values)
        lo = float(values[0]) if lo is None else float(lo)
        hi = float(values[-1]) if hi is None else float(hi)
        if not (lo <= values[0] and values[-1] <= hi and hi > lo >= 0):
            raise InvalidProblemError("limits must enclose the sampled values")
        dq = np.gradient(values, rho, edge_order=2)
        if np.any(dq[1:-1] <= 0):
            raise InvalidProblemError("tabulated u'' must be positive")
        q_y = np.concatenate(([lo], values, [hi]))
        q_v = np.concatenate(([0.0], np.clip(dq, 0.0, None), [0.0]))
        q_y, idx = np.unique(q_y, return_index=True)
        return cls(rho, values, lo, hi, q_y, q_v[idx])

    @classmethod
    def from_csv(cls, path, lo=None, hi=None):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header
        data = np.array(rows)
        return cls.from_samples(data[:, 0], data[:, 1], lo, hi)

    def uprime(self, rho):
        return np.interp(rho, self.rho, self.values)

    def uprime_excess(self, rho):
        return self.uprime(rho) - self.lo

    def q(self, y):
        y = np.asarray(y, dtype=float)
        if np.any((y < self.lo) | (y > self.hi)):
            raise DomainError("argument outside [lo, hi]")
        out = np.interp(y, self.q_y, self.q_v)
        return float(out) if out.ndim == 0 else out

    def invert(self, y):
        y = np.asarray(y, dtype=float)
        out = np.interp(y, self.values, self.rho)
        out = np.where(y <= self.lo, -np.inf, np.where(y >= self.hi, np.inf, out))
        return float(out) if out.ndim == 0 else out

    def kernel_args(self):
        return K.Q_TABLE, self.q_y, self.q_v


def validate_profile_samples(rho, values):
    if rho.ndim != 1 or rho.shape != values.shape or rho.size < 3:
        raise InvalidProblemError("profile table needs at least three (rho, u') rows")
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(values))):
        raise InvalidProblemError("profile table has non-finite entries")
    if np.any(np.diff(rho) <= 0):
        raise InvalidProblemError("rho column must be strictly increasing")
    if np.any(np.diff(values) <= 0):
        raise InvalidProblemError("u' column must be strictly increasing")


def make_profile(lo, hi) -> PotentialProfile:
    return PotentialProfile(float(lo), float(hi))


def profile_for(problem) -> PotentialProfile:
    """Default profile matching a problem's boundary values."""
    from .classes import PnProblem

    if isinstance(problem, PnProblem):
        return make_profile(1.0, float(problem.alpha))
    return make_profile(0.0, float(problem.b))


def q_of(profile: PotentialProfile, y):
    """Q(y) = u''(u'^{-1}(y)) = (y - lo)(hi - y)/(hi - lo)."""
    y_arr = np.asarray(y, dtype=float)
    if np.any((y_arr < profile.lo) | (y_arr > profile.hi)):
        raise DomainError(f"argument outside [{profile.lo}, {profile.hi}]")
    out = (y_arr - profile.lo) * (profile.hi - y_arr) / (profile.hi - profile.lo)
    return float(out) if out.ndim == 0 else out


def invert_uprime(profile: PotentialProfile, y):
    """rho with u'(rho) = y; -inf at or below lo, +inf at or above hi."""
    y_arr = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log((y_arr - profile.lo) / (profile.hi - y_arr))
    out = np.where(y_arr <= profile.lo, -np.inf, np.where(y_arr >= profile.hi, np.inf, out))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FluxFunction:
    """F together with the form of -F' used by the flow kernels."""

    descriptor: str
    F: Callable
    kind: int
    table_s: np.ndarray = field(default_factory=lambda: _EMPTY, repr=False)
    table_d: np.ndarray = field(default_factory=lambda: _EMPTY, repr=False)

    def neg_derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == K.FLUX_NEG_IDENTITY:
            out = np.ones_like(s)
        elif self.kind == K.FLUX_NEG_LOG:
            out = 1.0 / s
        else:
            out = np.interp(s, self.table_s, self.table_d)
        return float(out) if out.ndim == 0 else out

    def kernel_args(self):
        return self.kind, self.table_s, self.table_d


def neg_identity() -> FluxFunction:
    return FluxFunction("neg_identity", lambda s: -np.asarray(s, dtype=float), K.FLUX_NEG_IDENTITY)


def neg_log() -> FluxFunction:
    return FluxFunction("neg_log", lambda s: -np.log(s), K.FLUX_NEG_LOG)


def custom_flux(s, values, name="custom") -> FluxFunction:
    """Sampled F on an increasing grid; -F' is tabulated by differentiation."""
    s = np.asarray(s, dtype=float)
    values = np.asarray(values, dtype=float)
    if s.ndim != 1 or s.shape != values.shape or s.size < 3 or np.any(np.diff(s) <= 0):
        raise InvalidProblemError("custom flux needs an increasing grid of at least 3 samples")
    d = -np.gradient(values, s, edge_order=2)
    return FluxFunction(name, lambda x: np.interp(x, s, values), K.FLUX_TABLE, s, d)


FLUXES = {"neg_identity": neg_identity, "neg_log": neg_log}


def flux_by_name(name: str) -> FluxFunction:
    try:
        return FLUXES[name]()
    except KeyError:
        raise InvalidProblemError(f"unknown flux {name!r}; choose from {sorted(FLUXES)}") from None


@dataclass
class FluxReport:
    passed: bool
    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    messages: list


def _derivatives(F, x):
    """First and second derivatives by Richardson-extrapolated central differences."""
    def d1(h):
        return (F(x + h) - F(x - h)) / (2 * h)

    def d2(h):
        return (F(x + h) - 2 * F(x) + F(x - h)) / h**2

    h1 = 1e-3 * x
    h2 = 1e-2 * x
    first = (4 * d1(h1 / 2) - d1(h1)) / 3
    second = (4 * d2(h2 / 2) - d2(h2)) / 3
    return first, second


def validate_flux(F, interval=(0.1, 10.0), samples=50, tol=1e-8) -> FluxReport:
    """Check F' < 0, F'' >= 0 and F'' + F'/x <= 0 at sample points.

    Accepts a FluxFunction or a plain callable. Derivative estimates carry a
    discretization error, so each inequality is tested against `tol` scaled by
    the magnitude of the terms involved.
    """
    func = F.F if isinstance(F, FluxFunction) else F
    lo, hi = map(float, interval)
    if not (0 < lo < hi) or samples < 3:
        raise DomainError("need 0 < lo < hi and at least 3 samples")
    x = np.geomspace(lo, hi, samples)
    messages = []
    with np.errstate(all="ignore"):
        vals = np.asarray(func(x), dtype=float)
        probe = np.asarray(func(np.concatenate((x * 0.99, x * 1.01))), dtype=float)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(probe))):
        return FluxReport(False, x, np.full_like(x, np.nan), np.full_like(x, np.nan),
                          ["F is not finite on the sample range"])
    d1, d2 = _derivatives(lambda s: np.asarray(func(s), dtype=float), x)
    scale = tol * (1.0 + np.abs(d1) + np.abs(d2) * x)
    bad1 = d1 >= -scale
    bad2 = d2 < -scale
    bad3 = d2 + d1 / x > scale / x
    for name, bad in (("F' < 0", bad1), ("F'' >= 0", bad2), ("F'' + F'/x <= 0", bad3)):
        if np.any(bad):
            messages.append(f"{name} fails at x = {x[bad][0]:.6g} ({int(bad.sum())} points)")
    return FluxReport(not messages, x, d1, d2, messages)
