"""Class bookkeeping, topological constants and case labels.

Two families are covered. On the blow-up of P^n at a point the classes are
normalized so that the E0 coefficient is one:

    omega in alpha[E_inf] - [E0],   chi in beta[E_inf] - [E0].

A class a[E_inf] - c[E0] with c > 0 maps to the normalized coefficient a/c.
On X_{m,n} the classes are [D_H] + b[D_inf] and [D_H] + b'[D_inf].

Thresholds are decided exactly when every input is an int or a Fraction,
and up to `tol` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from numbers import Rational, Real

from .errors import InvalidProblemError

SMOOTH = "Smooth"
CONIC = "ConicBoundary"
BLOWUP = "CurrentBlowup"

CONCAVE = "Concave"
CONVEX_INTERIOR = "ConvexInterior"
CONVEX_TANGENT = "ConvexTangent"
OBSTACLE = "Obstacle"

_DETAIL_VARIANT = {
    CONCAVE: SMOOTH,
    CONVEX_INTERIOR: SMOOTH,
    CONVEX_TANGENT: CONIC,
    OBSTACLE: BLOWUP,
}

DEFAULT_TOL = 1e-12


def is_rational(value) -> bool:
    return isinstance(value, Rational) and not isinstance(value, bool)


def _check_real(name, value):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise InvalidProblemError(f"{name} must be a real number, got {value!r}")


def _check_int(name, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidProblemError(f"{name} must be an integer, got {value!r}")


@dataclass(frozen=True)
class PnProblem:
    """Normalized class data on P^n blown up at a point."""

    n: int
    k: int
    alpha: Real
    beta: Real

    def __post_init__(self):
        _check_int("n", self.n)
        _check_int("k", self.k)
        _check_real("alpha", self.alpha)
        _check_real("beta", self.beta)
        if self.n < 2:
            raise InvalidProblemError("n must be at least 2")
        if not 1 <= self.k <= self.n:
            raise InvalidProblemError("k must satisfy 1 <= k <= n")
        if not self.alpha > 1:
            raise InvalidProblemError("alpha must exceed 1")
        if not self.beta > 1:
            raise InvalidProblemError("beta must exceed 1")

    @property
    def exact(self) -> bool:
        return is_rational(self.alpha) and is_rational(self.beta)

    @classmethod
    def from_unnormalized(cls, n, k, a_inf, a_0, b_inf, b_0):
        """Build from classes a_inf[E_inf] - a_0[E0] and b_inf[E_inf] - b_0[E0]."""
        if not (a_0 > 0 and b_0 > 0):
            raise InvalidProblemError("E0 coefficients must be positive")
        div = (lambda p, q: Fraction(p) / Fraction(q)) if all(
            is_rational(v) for v in (a_inf, a_0, b_inf, b_0)) else (lambda p, q: p / q)
        return cls(n, k, div(a_inf, a_0), div(b_inf, b_0))


@dataclass(frozen=True)
class XmnProblem:
    """Class data on the projective bundle X_{m,n}."""

    m: int
    n: int
    k: int
    b: Real
    b_prime: Real

    def __post_init__(self):
        for name in ("m", "n", "k"):
            _check_int(name, getattr(self, name))
        _check_real("b", self.b)
        _check_real("b_prime", self.b_prime)
        if self.m < 0:
            raise InvalidProblemError("m must be nonnegative")
        if self.n < 1:
            raise InvalidProblemError("n must be at least 1")
        if not 1 <= self.k <= self.m + self.n + 1:
            raise InvalidProblemError("k must satisfy 1 <= k <= m+n+1")
        if not self.b > 0:
            raise InvalidProblemError("b must be positive")
        if not self.b_prime > 0:
            raise InvalidProblemError("b_prime must be positive")

    @property
    def exact(self) -> bool:
        return is_rational(self.b) and is_rational(self.b_prime)

    @property
    def dimension(self) -> int:
        return self.m + self.n + 1


@dataclass(frozen=True)
class CaseLabel:
    variant: str
    detail: str | None = None

    def __post_init__(self):
        if self.variant not in (SMOOTH, CONIC, BLOWUP):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.detail is not None and _DETAIL_VARIANT.get(self.detail) != self.variant:
            raise ValueError(f"detail {self.detail!r} incompatible with {self.variant}")

    def __str__(self):
        return self.variant if self.detail is None else f"{self.variant}({self.detail})"


@dataclass(frozen=True)
class ClassVector:
    basis: tuple
    coeffs: tuple
    current: Real | None = None

    def __post_init__(self):
        if len(self.basis) != len(self.coeffs):
            raise ValueError("basis and coeffs differ in length")

    def as_dict(self):
        out = {name: float(c) for name, c in zip(self.basis, self.coeffs)}
        if self.current is not None:
            out["current"] = float(self.current)
        return out

    def __str__(self):
        parts = []
        for name, c in zip(self.basis, self.coeffs):
            parts.append(f"{float(c):+.6g}[{name}]")
        text = " ".join(parts)
        if self.current is not None:
            text += f" ; current {float(self.current):.6g}[E0]"
        return text


def _compare(value, threshold, exact, tol):
    """Return -1, 0, 1 for value <, =, > threshold."""
    diff = value - threshold
    if exact:
        return (diff > 0) - (diff < 0)
    if abs(diff) <= tol:
        return 0
    return 1 if diff > 0 else -1


def ratio_pn(p: PnProblem):
    """(alpha^k beta^(n-k) - 1) / (beta^n - 1); a Fraction for rational input."""
    n, k = p.n, p.k
    if p.exact:
        a, b = Fraction(p.alpha), Fraction(p.beta)
    else:
        a, b = float(p.alpha), float(p.beta)
    return (a**k * b ** (n - k) - 1) / (b**n - 1)


def threshold_pn(p: PnProblem):
    return Fraction(p.n - p.k, p.n)


def classify_pn(p: PnProblem, tol: float = DEFAULT_TOL) -> CaseLabel:
    side = _compare(ratio_pn(p), threshold_pn(p), p.exact, tol)
    variant = {1: SMOOTH, 0: CONIC, -1: BLOWUP}[side]
    if _compare(p.alpha, p.beta, p.exact, 0.0) > 0:
        detail = CONCAVE
    else:
        # sign of the stationary slope at x = 1 follows the same comparison
        detail = {1: CONVEX_INTERIOR, 0: CONVEX_TANGENT, -1: OBSTACLE}[side]
    return CaseLabel(variant, detail)


def cone_membership_pn(p: PnProblem, tol: float = DEFAULT_TOL) -> bool:
    return classify_pn(p, tol).variant == SMOOTH


def critical_alpha_pn(n: int, k: int, beta) -> float:
    """alpha on the cone boundary for given beta (float)."""
    beta = float(beta)
    return (((n - k) / n * (beta**n - 1) + 1) / beta ** (n - k)) ** (1.0 / k)


def classify_xmn(p: XmnProblem, ck, tol: float = DEFAULT_TOL) -> CaseLabel:
    if p.k > p.n:
        return CaseLabel(SMOOTH)
    exact = is_rational(ck)
    side = _compare(ck, comb(p.n, p.k), exact, tol)
    return CaseLabel({1: SMOOTH, 0: CONIC, -1: BLOWUP}[side])


def limit_class(p, lam) -> ClassVector:
    """Class of the limit with contact point `lam`.

    For P^n blown up, beta[E_inf] - lam[E0] with current coefficient lam - 1.
    For X_{m,n}, [D_H] + b'[D_inf] - lam[E].
    """
    if isinstance(p, PnProblem):
        if not 1 <= lam < p.beta:
            raise InvalidProblemError(
                f"contact point {lam} outside [1, beta); inconsistent case")
        return ClassVector(("E_inf", "E0"), (p.beta, -lam), current=lam - 1)
    if isinstance(p, XmnProblem):
        if not 0 <= lam < p.b_prime:
            raise InvalidProblemError(
                f"contact point {lam} outside [0, b'); inconsistent case")
        return ClassVector(("D_H", "D_inf", "E"), (1, p.b_prime, -lam))
    raise TypeError(f"unsupported problem type {type(p).__name__}")
