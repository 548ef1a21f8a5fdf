"""Exact rational algebra for the G polynomials of X_{m,n}.

G^{m,n}_a(x) = int_0^x t^m (t + a)^n dt, and G^{m,n,k}_1(f, x) is the k-th
Taylor coefficient in t of G^{m,n}_{1+t}(x + t f). Everything here uses
Fraction coefficients; floats only appear in explicit conversion helpers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from numbers import Rational

import numpy as np

from .classes import XmnProblem, is_rational
from .errors import DomainError, InconsistencyError, InvalidProblemError


class BivariatePoly:
    """Sparse polynomial sum c_ij f^i x^j with Fraction coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        clean = {}
        for (i, j), c in (terms or {}).items():
            if i < 0 or j < 0:
                raise ValueError("exponents must be nonnegative")
            c = Fraction(c)
            if c:
                clean[(int(i), int(j))] = clean.get((int(i), int(j)), 0) + c
        self.terms = {key: c for key, c in clean.items() if c}

    @classmethod
    def univariate(cls, coeffs):
        """From {power of x: coefficient}."""
        return cls({(0, j): c for j, c in coeffs.items()})

    def __eq__(self, other):
        if isinstance(other, BivariatePoly):
            return self.terms == other.terms
        if isinstance(other, Rational):
            return self.terms == ({(0, 0): Fraction(other)} if other else {})
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other):
        if not isinstance(other, BivariatePoly):
            other = BivariatePoly({(0, 0): other})
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0) + c
        return BivariatePoly(out)

    __radd__ = __add__

    def __neg__(self):
        return BivariatePoly({key: -c for key, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, BivariatePoly) else -Fraction(other))

    def __mul__(self, other):
        if not isinstance(other, BivariatePoly):
            other = Fraction(other)
            return BivariatePoly({key: c * other for key, c in self.terms.items()})
        out = {}
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                key = (i1 + i2, j1 + j2)
                out[key] = out.get(key, 0) + c1 * c2
        return BivariatePoly(out)

    __rmul__ = __mul__

    @property
    def degree_f(self):
        return max((i for i, _ in self.terms), default=0)

    @property
    def degree_x(self):
        return max((j for _, j in self.terms), default=0)

    def is_univariate(self):
        return all(i == 0 for i, _ in self.terms)

    def dx(self):
        return BivariatePoly({(i, j - 1): c * j for (i, j), c in self.terms.items() if j})

    def df(self):
        return BivariatePoly({(i - 1, j): c * i for (i, j), c in self.terms.items() if i})

    def __call__(self, f, x):
        """Evaluate; exact when both arguments are rational."""
        if is_rational(f) and is_rational(x):
            f, x = Fraction(f), Fraction(x)
            return sum((c * f**i * x**j for (i, j), c in self.terms.items()), Fraction(0))
        f = np.asarray(f, dtype=float)
        x = np.asarray(x, dtype=float)
        total = np.zeros(np.broadcast(f, x).shape)
        for (i, j), c in self.terms.items():
            total = total + float(c) * f**i * x**j
        return float(total) if total.ndim == 0 else total

    def at_x(self, x):
        """Univariate evaluation in x; requires no f dependence."""
        if not self.is_univariate():
            raise ValueError("polynomial depends on f")
        return self(0, x) if is_rational(x) else self(0.0, x)

    def coefficient_arrays(self):
        """Float coefficients of a_i(x) as numpy polyval arrays, i = 0..deg_f."""
        deg_x = self.degree_x
        out = []
        for i in range(self.degree_f + 1):
            row = np.zeros(deg_x + 1)
            for (fi, j), c in self.terms.items():
                if fi == i:
                    row[deg_x - j] = float(c)
            out.append(row)
        return out

    def to_text(self):
        """Canonical text "c * f^i * x^j + ..." sorted by (i, j)."""
        if not self.terms:
            return "0"
        parts = []
        for (i, j) in sorted(self.terms):
            parts.append(f"{self.terms[(i, j)]} * f^{i} * x^{j}")
        return " + ".join(parts)

    @classmethod
    def from_text(cls, text):
        text = text.strip()
        if text == "0":
            return cls()
        terms = {}
        for chunk in text.split(" + "):
            c, fpart, xpart = (p.strip() for p in chunk.split("*"))
            i = int(fpart.split("^")[1])
            j = int(xpart.split("^")[1])
            terms[(i, j)] = Fraction(c)
        return cls(terms)

    def __repr__(self):
        return f"BivariatePoly({self.to_text()})"


@dataclass(frozen=True)
class GSpec:
    m: int
    n: int
    k: int

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise InvalidProblemError("m and n must be nonnegative")
        if not 0 <= self.k <= self.m + self.n + 1:
            raise InvalidProblemError("k must satisfy 0 <= k <= m+n+1")


def g_mn(m: int, n: int) -> BivariatePoly:
    """G^{m,n}_1(x) = sum_j C(n,j) x^(m+j+1)/(m+j+1)."""
    if m < 0 or n < 0:
        raise InvalidProblemError("m and n must be nonnegative")
    return BivariatePoly.univariate(
        {m + j + 1: Fraction(comb(n, j), m + j + 1) for j in range(n + 1)})


def g_mnk(m: int, n: int, k: int) -> BivariatePoly:
    """t^k coefficient of sum_j C(n,j)(1+t)^(n-j)(x+tf)^(m+j+1)/(m+j+1)."""
    GSpec(m, n, k)
    terms = {}
    for j in range(n + 1):
        p = m + j + 1
        base = Fraction(comb(n, j), p)
        # t^l from (1+t)^(n-j), t^i f^i x^(p-i) from (x+tf)^p
        for i in range(min(k, p) + 1):
            l = k - i
            if l > n - j:
                continue
            key = (i, p - i)
            terms[key] = terms.get(key, 0) + base * comb(n - j, l) * comb(p, i)
    return BivariatePoly(terms)


def a_coefficients(P: BivariatePoly, m: int | None = None, n: int | None = None,
                   k: int | None = None) -> list:
    """Split P = sum_i f^i a_i(x) into univariate polynomials a_0..a_deg.

    When (m, n, k) are given the identity a_0 = C(n,k) G^{m,n-k}_1 (k <= n),
    a_0 = 0 (k > n) is verified exactly.
    """
    deg = P.degree_f
    if k is not None:
        deg = max(deg, k)
    out = []
    for i in range(deg + 1):
        out.append(BivariatePoly({(0, j): c for (fi, j), c in P.terms.items() if fi == i}))
    if m is not None and n is not None and k is not None:
        expected = comb(n, k) * g_mn(m, n - k) if k <= n else BivariatePoly()
        if out[0] != expected:
            raise InconsistencyError(
                f"a_0 identity failed for (m, n, k) = ({m}, {n}, {k}): {out[0]} vs {expected}")
    return out


@dataclass(frozen=True)
class TopologicalConstant:
    value: float
    exact: Fraction | None


def topological_constant_xmn(p: XmnProblem) -> TopologicalConstant:
    """c_k = G^{m,n,k}_1(b, b') / G^{m,n}_1(b')."""
    if p.b_prime == 0:
        raise DomainError("b' must be nonzero")
    num = g_mnk(p.m, p.n, p.k)
    den = g_mn(p.m, p.n)
    if p.exact:
        b, bp = Fraction(p.b), Fraction(p.b_prime)
        exact = num(b, bp) / den.at_x(bp)
        return TopologicalConstant(float(exact), exact)
    value = num(float(p.b), float(p.b_prime)) / den.at_x(float(p.b_prime))
    return TopologicalConstant(float(value), None)
