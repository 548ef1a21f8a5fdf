"""Obstacle formulation of the blow-up limit on P^n blown up at a point.

Minimize E(g) = 1/2 int (p g'^2 + q g^2) dx over g >= 1 on [1, beta] with
g(1) = 1, g(beta) = alpha^k, where p = x^(n+1-2k) and q = k(n-k) x^(n-1-2k).
For k = 1 this is the energy with integrand x^(n-1) f'^2 + (n-1) x^(n-3) f^2;
for k > 1 the same construction in g = f^k is an extrapolation.

The Euler-Lagrange operator is L g = g'' + (n+1-2k) g'/x - k(n-k) g/x^2.
It is discretized by a symmetric three-point stencil fitted to the two power
solutions x^k and x^(k-n), so branch profiles are reproduced exactly at the
nodes and the discrete system is a symmetric M-matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from . import _kernels as K
from .classes import PnProblem
from .errors import InvalidProblemError, RelaxationError

FREE_TOL = 1e-6


@dataclass(frozen=True)
class ObstacleProblem:
    n: int
    k: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.n < 2 or not 1 <= self.k <= self.n:
            raise InvalidProblemError("need n >= 2 and 1 <= k <= n")
        if not self.alpha >= 1:
            raise InvalidProblemError("boundary value must not lie below the obstacle")
        if not self.beta > 1:
            raise InvalidProblemError("interval [1, beta] is degenerate")

    @classmethod
    def from_pn(cls, p: PnProblem):
        return cls(p.n, p.k, float(p.alpha), float(p.beta))

    @property
    def x_lo(self):
        return 1.0

    @property
    def x_hi(self):
        return float(self.beta)

    @property
    def boundary(self):
        return 1.0, float(self.alpha) ** self.k

    @property
    def obstacle(self):
        return 1.0

    def nodes(self, points: int) -> np.ndarray:
        if points < 3:
            raise InvalidProblemError("need at least 3 nodes")
        x = np.linspace(self.x_lo, self.x_hi, points)
        x[-1] = self.x_hi
        return x

    def weights(self, x):
        p = x ** (self.n + 1 - 2 * self.k)
        q = self.k * (self.n - self.k) * x ** (self.n - 1 - 2 * self.k)
        return p, q


def _points(grid):
    return grid if isinstance(grid, int) else grid.points


def fitted_stencil(problem: ObstacleProblem, x):
    """Half-point couplings c and diagonal weights d of the fitted scheme."""
    n, k = problem.n, problem.k
    xl, xr = x[:-1], x[1:]
    c = n / ((xl * xr) ** (k - n) * (xr**n - xl**n))
    d = np.zeros_like(x)
    if k < n:
        phi = x**k
        d[1:-1] = (c[1:] * (phi[2:] - phi[1:-1]) - c[:-1] * (phi[1:-1] - phi[:-2])) / phi[1:-1]
    return c, d


def stencil_residual(problem: ObstacleProblem, x, g):
    """R_i = c_{i+1/2}(g_{i+1}-g_i) - c_{i-1/2}(g_i-g_{i-1}) - d_i g_i (interior)."""
    c, d = fitted_stencil(problem, x)
    r = np.zeros_like(g)
    r[1:-1] = c[1:] * (g[2:] - g[1:-1]) - c[:-1] * (g[1:-1] - g[:-2]) - d[1:-1] * g[1:-1]
    return r


def apply_operator(problem: ObstacleProblem, x, g):
    """Discrete L g at interior nodes (zero at the ends)."""
    h = x[1] - x[0]
    p, _ = problem.weights(x)
    return stencil_residual(problem, x, g) / (h * p)


def energy(f, problem: ObstacleProblem, x=None) -> float:
    """Trapezoidal quadrature of the energy with second-order f'."""
    f = np.asarray(f, dtype=float)
    if x is None:
        x = problem.nodes(f.size)
    fx = np.gradient(f, x, edge_order=2)
    p, q = problem.weights(x)
    return 0.5 * trapezoid(p * fx**2 + q * f**2, x)


def discrete_energy(g, problem: ObstacleProblem, x) -> float:
    """The quadratic form minimized by the solver (scaled by 1/h)."""
    c, d = fitted_stencil(problem, x)
    return float(K.discrete_energy(np.asarray(g, dtype=float), c, d))


def contact_point(x, f, flat: float, tol: float = 1e-8) -> float:
    """Right end of the leading run of nodes with f <= flat + 10 tol.

    Near the contact point f - flat grows quadratically, so sqrt(f - flat) is
    extrapolated linearly from the next two nodes to locate its zero.
    """
    x = np.asarray(x, dtype=float)
    excess = np.asarray(f, dtype=float) - flat
    on = excess <= 10 * tol
    idx = 0
    while idx + 1 < x.size and on[idx + 1]:
        idx += 1
    if idx == 0 or idx + 2 >= x.size:
        return float(x[idx])
    j1, j2 = idx + 1, idx + 2
    s1 = np.sqrt(max(excess[j1], 0.0))
    s2 = np.sqrt(max(excess[j2], 0.0))
    if s2 <= s1:
        return float(x[idx])
    root = x[j1] - s1 * (x[j2] - x[j1]) / (s2 - s1)
    return float(np.clip(root, x[idx - 1], x[j1]))


@dataclass
class ObstacleSolution:
    x: np.ndarray
    values: np.ndarray
    k: int
    sweeps: int
    change: float
    polish_rounds: int
    lam: float

    @property
    def f(self):
        return self.values ** (1.0 / self.k)


def _polish(problem, x, g, lower, rounds=50):
    """Primal-dual active set on the fitted system, starting from PSOR's contact set."""
    c, d = fitted_stencil(problem, x)
    npts = g.size
    active = np.zeros(npts, dtype=bool)
    active[1:-1] = g[1:-1] <= lower
    for it in range(1, rounds + 1):
        free = np.flatnonzero(~active[1:-1]) + 1
        g_new = g.copy()
        g_new[active] = lower
        if free.size:
            # tridiagonal rows for the free nodes with neighbours moved to the rhs
            m = free.size
            ab = np.zeros((3, m))
            rhs = np.zeros(m)
            pos = {i: j for j, i in enumerate(free)}
            for j, i in enumerate(free):
                ab[1, j] = c[i - 1] + c[i] + d[i]
                for nb, cc in ((i - 1, c[i - 1]), (i + 1, c[i])):
                    if nb in pos:
                        if nb < i:
                            ab[2, pos[nb]] = -cc
                        else:
                            ab[0, pos[nb]] = -cc
                    else:
                        rhs[j] += cc * g_new[nb]
            g_new[free] = solve_banded((1, 1), ab, rhs)
        r = stencil_residual(problem, x, g_new)
        add = (~active) & (g_new < lower)
        add[0] = add[-1] = False
        drop = active & (r > 0)
        if not add.any() and not drop.any():
            return g_new, it
        active = (active | add) & ~drop
        g = np.maximum(g_new, lower)
    return g, rounds


def solve_psor(problem: ObstacleProblem, grid=801, omega_relax: float | None = None,
               tol: float = 1e-12, max_sweeps: int = 1_000_000, initial=None,
               polish: bool = True) -> ObstacleSolution:
    """Projected SOR on the fitted stencil, then an optional exact active-set polish.

    Values are in the variable g = f^k (f itself when k = 1).
    """
    if omega_relax is None:
        points = _points(grid)
        omega_relax = 2.0 / (1.0 + np.sin(np.pi / (points - 1)))
    if not 0 < omega_relax < 2:
        raise InvalidProblemError("omega_relax must lie in (0, 2)")
    x = problem.nodes(_points(grid))
    lo, hi = problem.boundary
    if initial is None:
        g = lo + (hi - lo) * (x - x[0]) / (x[-1] - x[0])
    else:
        g = np.asarray(initial, dtype=float).copy()
        g[0], g[-1] = lo, hi
    g = np.maximum(g, problem.obstacle)
    c, d = fitted_stencil(problem, x)
    sweeps, change, status = K.psor(c, d, g, problem.obstacle, omega_relax, tol, max_sweeps, 100)
    if status == 2:
        raise RelaxationError(f"energy increased near sweep {sweeps}; lower omega_relax")
    rounds = 0
    if polish:
        g, rounds = _polish(problem, x, g, problem.obstacle)
    lam = contact_point(x, g ** (1.0 / problem.k), problem.obstacle)
    return ObstacleSolution(x, g, problem.k, sweeps, change, rounds, lam)


def psor_energy_trace(problem: ObstacleProblem, grid, omega_relax: float, sweeps: int):
    """Discrete energy after each of `sweeps` plain PSOR sweeps from chord data."""
    x = problem.nodes(_points(grid))
    lo, hi = problem.boundary
    g = np.maximum(lo + (hi - lo) * (x - x[0]) / (x[-1] - x[0]), problem.obstacle)
    c, d = fitted_stencil(problem, x)
    out = [K.discrete_energy(g, c, d)]
    for _ in range(sweeps):
        K.psor(c, d, g, problem.obstacle, omega_relax, 0.0, 1, 1)
        out.append(K.discrete_energy(g, c, d))
    return np.array(out), g


def complementarity_residual(g, problem: ObstacleProblem, x=None, free_tol: float = FREE_TOL):
    """(max obstacle violation, max |Lg| where g > 1 + free_tol, max (Lg)_+ elsewhere)."""
    g = np.asarray(g, dtype=float)
    if x is None:
        x = problem.nodes(g.size)
    Lg = apply_operator(problem, x, g)
    inner = np.zeros(g.size, dtype=bool)
    inner[1:-1] = True
    violation = float(max(0.0, np.max(problem.obstacle - g)))
    free = inner & (g > problem.obstacle + free_tol)
    contact = inner & ~free
    free_res = float(np.max(np.abs(Lg[free]))) if free.any() else 0.0
    contact_res = float(np.max(np.maximum(Lg[contact], 0.0))) if contact.any() else 0.0
    return violation, free_res, contact_res


def export_csv(solution: ObstacleSolution, problem: ObstacleProblem, path):
    Lg = apply_operator(problem, solution.x, solution.values)
    contact = solution.values <= problem.obstacle + FREE_TOL
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "f", "Lf", "contact"])
        for xi, fi, li, ci in zip(solution.x, solution.f, Lg, contact):
            w.writerow([f"{xi:.12g}", f"{fi:.12g}", f"{li:.6g}", int(ci)])
