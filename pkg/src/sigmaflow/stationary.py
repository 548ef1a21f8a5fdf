"""Closed-form limit profiles and contact-point solvers.

P^n blown up (variable g = f^k on [1, beta]):

    g(x) = a x^k + b x^(k-n),

with g(1) = 1, g(beta) = alpha^k when there is no flat part, and
g(lambda) = 1, g'(lambda) = 0 in the blow-up case, where lambda solves

    (n-k)(beta/lambda)^k + k(lambda/beta)^(n-k) = n alpha^k.

X_{m,n} (f on [0, b']): the level set G^{m,n,k}_1(f, x) = alpha G^{m,n}_1(x) + beta.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import bisect

from .classes import (BLOWUP, CONIC, CaseLabel, PnProblem, XmnProblem, classify_pn,
                      classify_xmn)
from .errors import CaseMismatchError, DomainError, InconsistencyError
from .gpoly import g_mn, g_mnk, topological_constant_xmn

BISECT_TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = leggauss(24)


@dataclass
class StationaryProfile:
    """Piecewise limit profile: flat on [x_lo, lam], increasing branch after."""

    family: str
    x_lo: float
    x_hi: float
    lam: float
    branch: tuple
    flat_value: float
    n: int
    k: int
    m: int = 0
    label: CaseLabel | None = None
    exact_branch: tuple | None = None
    _xmn: dict = field(default_factory=dict, repr=False)

    @property
    def constant(self) -> float:
        """Value of sigma_k along the branch."""
        if self.family == "Pn":
            return comb(self.n, self.k) * self.branch[0]
        return self.branch[0]

    def __call__(self, x):
        return eval_stationary(self, x)

    def excess(self, x):
        """f(x) - flat_value, accurate even where it is tiny."""
        x = self._check(x)
        out = np.zeros_like(x)
        on = x > self.lam
        if self.family == "Pn":
            g1 = self._pn_g_excess(x[on])
            out[on] = np.expm1(np.log1p(g1) / self.k)
        else:
            out[on] = self._xmn_solve(x[on])
        return out

    def derivative(self, x):
        x = self._check(x)
        out = np.zeros_like(x)
        on = x > self.lam
        if self.family == "Pn" and self.lam == self.x_lo:
            # no flat part: the branch holds on the closed interval
            on = np.ones_like(x, dtype=bool)
        xs = x[on]
        if self.family == "Pn":
            a, b = self.branch
            n, k = self.n, self.k
            g = a * xs**k + b * xs ** (k - n)
            gp = k * a * xs ** (k - 1) + (k - n) * b * xs ** (k - n - 1)
            out[on] = gp * g ** (1.0 / k - 1) / k
        else:
            f = self._xmn_solve(xs)
            d = self._xmn
            num = d["alpha"] * xs ** self.m * (1 + xs) ** self.n - _eval_rows(d["dx"], f, xs)
            out[on] = num / _eval_rows(d["df"], f, xs)
        return out

    def _check(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        span = self.x_hi - self.x_lo
        if np.any(x < self.x_lo - 1e-12 * span) or np.any(x > self.x_hi + 1e-12 * span):
            raise DomainError(f"x outside [{self.x_lo}, {self.x_hi}]")
        return np.clip(x, self.x_lo, self.x_hi)

    def _pn_g_excess(self, x):
        # g - 1 written around the contact point to avoid cancellation:
        # g = a lam^k (x/lam)^k + b lam^(k-n) (x/lam)^(k-n) and g(lam) = 1
        a, b = self.branch
        n, k, lam = self.n, self.k, self.lam
        L = np.log1p((x - lam) / lam)
        return a * lam**k * np.expm1(k * L) + b * lam ** (k - n) * np.expm1((k - n) * L)

    def _xmn_solve(self, x):
        """f > 0 with sum_{i>=1} f^i a_i(x) = -D(x), by bisection in log f."""
        d = self._xmn
        target = -_xmn_level_gap(self, x)
        rows = d["rows"]
        lo = np.full_like(x, -700.0)
        hi = np.full_like(x, np.log(max(self.branch_top, 1e-300)) + 1.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            val = _eval_rows(rows, np.exp(mid), x, skip_zero=True)
            high = val > target
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
            if np.all(hi - lo < 1e-15):
                break
        f = np.exp(0.5 * (lo + hi))
        return np.where(target > 0, f, 0.0)

    @property
    def branch_top(self):
        return self._xmn.get("b", 1.0)


def _eval_rows(rows, f, x, skip_zero=False):
    total = np.zeros(np.broadcast(f, x).shape)
    for i, row in enumerate(rows):
        if skip_zero and i == 0:
            continue
        total = total + f**i * np.polyval(row, x)
    return total


def _xmn_level_gap(s: StationaryProfile, x):
    """D(x) = a_0(x) - alpha G(x) - beta as an integral from lam.

    D(lam) = 0 by construction and D' = t^m (1+t)^(n-k) (C(n,k) - alpha (1+t)^k)
    (no a_0 term when k > n), integrated by Gauss-Legendre which is exact for
    these polynomial integrands.
    """
    m, n, k = s.m, s.n, s.k
    lam = s.lam
    alpha = s.branch[0]
    tied = s._xmn["tied"]
    half = 0.5 * (x - lam)
    t = lam + half[:, None] * (_GL_NODES[None, :] + 1.0)
    if k <= n:
        c = comb(n, k)
        if tied:
            # alpha = C(n,k)/(1+lam)^k; keep the bracket accurate near lam
            bracket = -c * np.expm1(k * np.log1p((t - lam) / (1.0 + lam)))
        else:
            bracket = c - alpha * (1.0 + t) ** k
        integrand = t**m * (1.0 + t) ** (n - k) * bracket
    else:
        integrand = -alpha * t**m * (1.0 + t) ** n
    return half * (integrand @ _GL_WEIGHTS)


def _pn_coefficients(p: PnProblem):
    n, k = p.n, p.k
    if p.exact:
        a_, b_ = Fraction(p.alpha), Fraction(p.beta)
    else:
        a_, b_ = float(p.alpha), float(p.beta)
    a = (a_**k * b_ ** (n - k) - 1) / (b_**n - 1)
    b = (b_**n - a_**k * b_ ** (n - k)) / (b_**n - 1)
    return a, b


def lambda_equation_pn(p: PnProblem, lam):
    """h(lam) - n alpha^k, decreasing in lam on (0, beta)."""
    n, k = p.n, p.k
    beta = float(p.beta)
    return (n - k) * (beta / lam) ** k + k * (lam / beta) ** (n - k) - n * float(p.alpha) ** k


def solve_lambda_pn(p: PnProblem, tol: float = BISECT_TOL) -> float:
    label = classify_pn(p)
    if label.variant == CONIC:
        return 1.0
    if label.variant != BLOWUP:
        raise CaseMismatchError(f"no contact point for {label}")
    lo, hi = 1.0, float(p.beta)
    flo, fhi = lambda_equation_pn(p, lo), lambda_equation_pn(p, hi)
    if not (flo > 0 > fhi):
        raise InconsistencyError("lambda equation has no sign change on (1, beta)")
    return bisect(lambda s: lambda_equation_pn(p, s), lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


def stationary_pn(p: PnProblem) -> StationaryProfile:
    label = classify_pn(p)
    n, k = p.n, p.k
    beta = float(p.beta)
    if label.variant == BLOWUP:
        lam = solve_lambda_pn(p)
        a = (n - k) / (n * lam**k)
        b = k * lam ** (n - k) / n
        exact = None
    else:
        lam = 1.0
        a, b = _pn_coefficients(p)
        exact = (a, b) if p.exact else None
        a, b = float(a), float(b)
    return StationaryProfile("Pn", 1.0, beta, lam, (a, b), 1.0, n, k, label=label,
                             exact_branch=exact)


@dataclass(frozen=True)
class XmnSystem:
    alpha: float
    beta: float
    lam: float
    sign_changes: int = 1


def _xmn_residual_parts(p: XmnProblem):
    m, n, k = p.m, p.n, p.k
    G = g_mn(m, n)
    a0 = g_mnk(m, n, k)
    rows_g = G.coefficient_arrays()[0]
    rows_a0 = a0.coefficient_arrays()[0]
    target = g_mnk(m, n, k)(float(p.b), float(p.b_prime))
    return rows_g, rows_a0, target


def xmn_lambda_residual(p: XmnProblem, lam):
    """alpha(lam) G(b') + beta(lam) - G^{m,n,k}_1(b, b') after eliminating alpha, beta."""
    rows_g, rows_a0, target = _xmn_residual_parts(p)
    alpha = comb(p.n, p.k) / (1.0 + lam) ** p.k
    beta = np.polyval(rows_a0, lam) - alpha * np.polyval(rows_g, lam)
    return alpha * np.polyval(rows_g, float(p.b_prime)) + beta - target


def solve_xmn_system(p: XmnProblem, tol: float = BISECT_TOL, scan: int = 2000) -> XmnSystem:
    """(alpha, beta, lam) of the limit level set.

    Smooth and boundary cases return (c_k, 0, 0). In the blow-up case
    alpha = C(n,k)/(1+lam)^k and beta = a_0(lam) - alpha G(lam) follow from the
    two contact conditions, and lam is found by bisection on the remaining
    boundary condition. The residual is scanned for extra sign changes, which
    are reported but not resolved.
    """
    ck = topological_constant_xmn(p)
    label = classify_xmn(p, ck.exact if ck.exact is not None else ck.value)
    if label.variant != BLOWUP:
        return XmnSystem(ck.value, 0.0, 0.0, 0)
    bp = float(p.b_prime)
    grid = np.linspace(0.0, bp, scan + 1)
    vals = xmn_lambda_residual(p, grid)
    signs = np.sign(vals)
    changes = int(np.count_nonzero(signs[1:] * signs[:-1] < 0))
    if not (vals[0] > 0 > vals[-1]):
        raise InconsistencyError("lambda residual has no sign change on (0, b')")
    j = int(np.argmax(signs[1:] * signs[:-1] < 0))
    lam = bisect(lambda s: xmn_lambda_residual(p, s), grid[j], grid[j + 1],
                 xtol=tol, rtol=4 * np.finfo(float).eps)
    rows_g, rows_a0, _ = _xmn_residual_parts(p)
    alpha = comb(p.n, p.k) / (1.0 + lam) ** p.k
    beta = float(np.polyval(rows_a0, lam) - alpha * np.polyval(rows_g, lam))
    if changes > 1:
        import warnings

        warnings.warn(f"lambda residual changes sign {changes} times; using the first root")
    return XmnSystem(float(alpha), beta, float(lam), changes)


def stationary_xmn(p: XmnProblem) -> StationaryProfile:
    ck = topological_constant_xmn(p)
    label = classify_xmn(p, ck.exact if ck.exact is not None else ck.value)
    sysv = solve_xmn_system(p)
    P = g_mnk(p.m, p.n, p.k)
    data = {
        "rows": P.coefficient_arrays(),
        "dx": P.dx().coefficient_arrays() if P.dx().terms else [np.zeros(1)],
        "df": P.df().coefficient_arrays(),
        "alpha": sysv.alpha,
        "beta": sysv.beta,
        "tied": label.variant in (BLOWUP, CONIC) and p.k <= p.n,
        "b": float(p.b),
    }
    return StationaryProfile("Xmn", 0.0, float(p.b_prime), sysv.lam, (sysv.alpha, sysv.beta),
                             0.0, p.n, p.k, m=p.m, label=label, _xmn=data)


def stationary_for(problem) -> StationaryProfile:
    if isinstance(problem, PnProblem):
        return stationary_pn(problem)
    return stationary_xmn(problem)


def eval_stationary(s: StationaryProfile, x):
    """f(x); scalar in, scalar out."""
    scalar = np.ndim(x) == 0
    xs = s._check(x)
    out = np.full_like(xs, s.flat_value)
    on = xs > s.lam
    if s.family == "Pn":
        a, b = s.branch
        g = a * xs[on] ** s.k + b * xs[on] ** (s.k - s.n)
        out[on] = g ** (1.0 / s.k)
    else:
        out[on] = s._xmn_solve(xs[on])
    return float(out[0]) if scalar else out


def sigma_exact(s: StationaryProfile, x):
    """sigma_k of the eigenvalue tuple along the profile, from f and f'."""
    x = np.asarray(x, dtype=float)
    f = eval_stationary(s, x)
    fp = s.derivative(x)
    return sigma_from_values(s.family, s.n, s.k, s.m, x, f, fp)


def sigma_from_values(family, n, k, m, x, f, fp):
    from ._esym import esym_groups_array

    if family == "Pn":
        return comb(n - 1, k - 1) * (f / x) ** (k - 1) * fp + comb(n - 1, k) * (f / x) ** k
    a = (1.0 + f) / (1.0 + x)
    b = f / x
    return esym_groups_array(k, [(a, n), (b, m), (fp, 1)])


def stationary_residual(s: StationaryProfile, problem=None, profileU=None, grid=None) -> float:
    """sup |sigma_k - c| over grid points inside (lam, x_hi].

    c is the constant fixed by `problem` when given, else the profile's own.
    On P^n the x^(k-n) branch has sigma_k = 0, so the b coefficient is only
    seen through the boundary data; the mismatch at x_hi is therefore
    included when a problem is supplied. The potential profile does not
    enter sigma_k; the argument is accepted for interface symmetry with the
    flow module.
    """
    if grid is None:
        grid = np.linspace(s.lam, s.x_hi, 201)[1:]
    x = np.asarray(grid, dtype=float)
    if np.any(x <= s.lam) or np.any(x > s.x_hi):
        raise DomainError("residual grid must lie in (lam, x_hi]")
    if problem is None:
        return float(np.max(np.abs(sigma_exact(s, x) - s.constant)))
    ref = stationary_for(problem)
    res = float(np.max(np.abs(sigma_exact(s, x) - ref.constant)))
    end = abs(eval_stationary(s, s.x_hi) - eval_stationary(ref, ref.x_hi))
    return max(res, end)


def perturbed(s: StationaryProfile, da: float, db: float) -> StationaryProfile:
    """Copy with shifted branch coefficients (sensitivity checks)."""
    a, b = s.branch
    return StationaryProfile(s.family, s.x_lo, s.x_hi, s.lam, (a + da, b + db), s.flat_value,
                             s.n, s.k, s.m, s.label, None, dict(s._xmn))


def export_csv(s: StationaryProfile, x, path):
    x = np.asarray(x, dtype=float)
    f = eval_stationary(s, x)
    fp = s.derivative(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "f", "fprime"])
        for row in zip(x, f, fp):
            w.writerow([f"{v:.12g}" for v in row])
