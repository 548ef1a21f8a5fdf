"""Time evolution of the reduced flows on a uniform 1-D grid.

Three reductions share one frozen-coefficient tridiagonal form (see
`_kernels`): the J-flow in f, the degree-k flow on P^n blown up in
g = f^k, and the X_{m,n} flow in f. Explicit Euler is the reference
scheme; theta > 0 switches to a linearly implicit step with adaptive dt,
used to reach steady states quickly on fine grids.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import _kernels as K
from ._esym import esym_groups_array
from .classes import PnProblem, XmnProblem
from .errors import IntegrityError, InvalidProblemError, SchemeError
from .potential import FluxFunction, neg_identity, profile_for
from .stationary import StationaryProfile, stationary_for

log = logging.getLogger(__name__)

CONVERGED = "converged"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Grid:
    x_lo: float
    x_hi: float
    points: int

    def __post_init__(self):
        if self.points < 16:
            raise InvalidProblemError("a grid needs at least 16 points")
        if not self.x_hi > self.x_lo:
            raise InvalidProblemError("grid needs x_hi > x_lo")

    @property
    def spacing(self) -> float:
        return (self.x_hi - self.x_lo) / (self.points - 1)

    @property
    def nodes(self) -> np.ndarray:
        x = np.linspace(self.x_lo, self.x_hi, self.points)
        x[0], x[-1] = self.x_lo, self.x_hi
        return x


@dataclass
class SchemeConfig:
    cfl: float = 0.8
    steady_tol: float = 1e-8
    max_time: float | None = None
    theta: float = 0.0
    steady_steps: int = 100
    snapshot_every: int | None = None
    max_steps: int = 50_000_000
    max_halvings: int = 30
    dt: float | None = None
    wall_limit: float | None = None
    growth: float = 1.2
    max_change: float = 0.02
    min_ratio: float = 0.5
    escape_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise InvalidProblemError("cfl must lie in (0, 1]")
        if not self.steady_tol > 0:
            raise InvalidProblemError("steady_tol must be positive")
        if not 0 <= self.theta <= 1:
            raise InvalidProblemError("theta must lie in [0, 1]")
        if self.steady_steps < 1:
            raise InvalidProblemError("steady_steps must be positive")


@dataclass
class FlowProblem:
    """A class problem together with the potential profile and flux."""

    problem: PnProblem | XmnProblem
    profile: object = None
    flux: FluxFunction = None

    def __post_init__(self):
        if self.profile is None:
            self.profile = profile_for(self.problem)
        if self.flux is None:
            self.flux = neg_identity()

    @property
    def family(self) -> str:
        return "Pn" if isinstance(self.problem, PnProblem) else "Xmn"

    @property
    def n(self):
        return self.problem.n

    @property
    def k(self):
        return self.problem.k

    @property
    def m(self):
        return 0 if self.family == "Pn" else self.problem.m

    @property
    def variable(self) -> str:
        return "g" if self.family == "Pn" and self.k > 1 else "f"

    @property
    def domain(self):
        if self.family == "Pn":
            return 1.0, float(self.problem.beta)
        return 0.0, float(self.problem.b_prime)

    @property
    def flat_value(self) -> float:
        return 1.0 if self.family == "Pn" else 0.0

    @property
    def boundary(self):
        """Boundary values in the evolved variable."""
        if self.family == "Pn":
            return 1.0, float(self.problem.alpha) ** self.k
        return 0.0, float(self.problem.b)

    def grid(self, points: int) -> Grid:
        lo, hi = self.domain
        return Grid(lo, hi, points)

    def to_f(self, values):
        if self.variable == "g":
            return np.maximum(values, 0.0) ** (1.0 / self.k)
        return values

    def from_f(self, f):
        if self.variable == "g":
            return np.asarray(f, dtype=float) ** self.k
        return np.asarray(f, dtype=float)

    def kernel_args(self):
        family = K.FAMILY_PN if self.family == "Pn" else K.FAMILY_XMN
        fk, fs, fd = self.flux.kernel_args()
        qk, qy, qv = self.profile.kernel_args()
        return (family, self.m, self.n, self.k, float(self.profile.lo), float(self.profile.hi),
                fk, fs, fd, qk, qy, qv)


def as_flow_problem(problem, profile=None, flux=None) -> FlowProblem:
    if isinstance(problem, FlowProblem):
        return problem
    return FlowProblem(problem, profile, flux)


@dataclass
class FlowState:
    t: float
    values: np.ndarray
    variable: str
    problem: FlowProblem
    x: np.ndarray

    @property
    def f(self) -> np.ndarray:
        return self.problem.to_f(self.values)

    def copy(self):
        return FlowState(self.t, self.values.copy(), self.variable, self.problem, self.x)


@dataclass
class FlowResult:
    state: FlowState
    initial: FlowState
    records: list
    status: str
    steps: int
    wall_time: float
    halvings: int
    dt: float
    residual: float
    reference: StationaryProfile | None = None
    reports: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def sup_error(self) -> float | None:
        if self.reference is None:
            return None
        return float(np.max(np.abs(self.state.f - self.reference(self.state.x))))


def _with_overrides(fp: FlowProblem, profileU, F):
    if profileU is None and F is None:
        return fp
    return FlowProblem(fp.problem, profileU if profileU is not None else fp.profile,
                       F if F is not None else fp.flux)


def _operator(fp: FlowProblem, x, u):
    """Tridiagonal operator acting on w = u - base, with w."""
    npts = x.shape[0]
    base = fp.boundary[0]
    w = np.asarray(u, dtype=float) - base
    lower, diag, upper, const = (np.empty(npts) for _ in range(4))
    args = fp.kernel_args()
    K.coefficients(args[0], x, w, base, *args[1:], lower, diag, upper, const)
    return lower, diag, upper, const, w


def _rhs(fp: FlowProblem, x, u):
    lower, diag, upper, const, w = _operator(fp, x, u)
    out = np.empty_like(w)
    K.apply(lower, diag, upper, const, w, out)
    return out


def rhs_jflow(state: FlowState, profileU=None, F=None) -> np.ndarray:
    """-F'(s) Q(f) [f_xx + (n-1) f_x/x - (n-1) f/x^2] at interior nodes."""
    fp = _with_overrides(state.problem, profileU, F)
    if fp.family != "Pn" or fp.k != 1 or state.variable != "f":
        raise InvalidProblemError("rhs_jflow needs a k = 1 problem on P^n blown up in f")
    h = state.x[1] - state.x[0]
    if np.min(np.diff(state.values)) / h < -1e-10:
        raise IntegrityError("state is not monotone")
    return _rhs(fp, state.x, state.values)


def rhs_general_k(state: FlowState, profileU=None, F=None) -> np.ndarray:
    """-F' C(n-1,k-1)(f/x)^(k-1) u'' [g_xx + (n+1-2k) g_x/x - k(n-k) g/x^2]."""
    fp = _with_overrides(state.problem, profileU, F)
    if fp.family != "Pn":
        raise InvalidProblemError("rhs_general_k needs a P^n problem")
    if np.any(state.values < 0):
        raise IntegrityError("g is negative")
    return _rhs(fp, state.x, state.values)


def rhs_xmn(state: FlowState, profileU=None, F=None) -> np.ndarray:
    """-F' u'' d/dx sigma_k(n x (1+f)/(1+x), m x f/x, f') at interior nodes."""
    fp = _with_overrides(state.problem, profileU, F)
    if fp.family != "Xmn":
        raise InvalidProblemError("rhs_xmn needs an X_{m,n} problem")
    if np.any(state.values < -1e-12):
        raise IntegrityError("f is negative")
    return _rhs(fp, state.x, state.values)


def rhs(state: FlowState) -> np.ndarray:
    fp = state.problem
    if fp.family == "Xmn":
        return rhs_xmn(state)
    if fp.k == 1:
        return rhs_jflow(state)
    return rhs_general_k(state)


def sigma_profile(state: FlowState, profileU=None) -> np.ndarray:
    """sigma_k of the eigenvalue tuple at every node (f' by second-order differences)."""
    fp = state.problem
    x = state.x
    f = state.f
    fx = np.gradient(f, x, edge_order=2)
    n, k = fp.n, fp.k
    if fp.family == "Pn":
        return comb(n - 1, k - 1) * (f / x) ** (k - 1) * fx + comb(n - 1, k) * (f / x) ** k
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(x > 0, f / x, fx)
    a = (1.0 + f) / (1.0 + x)
    return esym_groups_array(k, [(a, n), (b, fp.m), (fx, 1)])


def initial_values(fp: FlowProblem, x, initial="chord") -> np.ndarray:
    """Chord data (linear in the evolved variable) or user values in f."""
    lo, hi = fp.boundary
    if isinstance(initial, str):
        if initial != "chord":
            raise InvalidProblemError(f"unknown initial data {initial!r}")
        return lo + (hi - lo) * (x - x[0]) / (x[-1] - x[0])
    if callable(initial):
        f = np.asarray(initial(x), dtype=float)
    else:
        f = np.asarray(initial, dtype=float)
    if f.shape != x.shape:
        raise InvalidProblemError("initial data does not match the grid")
    u = fp.from_f(f)
    span = hi - lo
    if abs(u[0] - lo) > 1e-9 * span or abs(u[-1] - hi) > 1e-9 * span:
        raise InvalidProblemError("initial data has wrong boundary values")
    if np.min(np.diff(u)) < -1e-12 * span:
        raise InvalidProblemError("initial data is not monotone")
    u = u.copy()
    u[0], u[-1] = lo, hi
    return u


def _valid(w, top) -> bool:
    """Finite, inside [0, top] and monotone (w is the excess over the lower level)."""
    if not np.all(np.isfinite(w)):
        return False
    if w.min() < -1e-12 * top or w.max() > top * (1 + 1e-12):
        return False
    return np.min(np.diff(w)) >= -1e-10 * top


def _record(state: FlowState, reference, residual, dt, step):
    """Snapshot row; `reference` is the analytic limit sampled on the grid."""
    f = state.f
    sig = sigma_profile(state)
    fx = np.diff(f) / np.diff(state.x)
    rec = {
        "t": state.t,
        "step": step,
        "dt": dt,
        "residual": residual,
        "sigma_min": float(sig.min()),
        "sigma_max": float(sig.max()),
        "min_fx": float(fx.min()),
    }
    rec["sup_error"] = (float(np.max(np.abs(f - reference)))
                        if reference is not None else None)
    return rec


def diffusion_time(fp: FlowProblem, x, u) -> float:
    """(x_hi - x_lo)^2 over the largest effective diffusion coefficient."""
    _, diag, _, _, _ = _operator(fp, x, u)
    h = x[1] - x[0]
    dmax = 0.5 * h * h * np.max(np.abs(diag))
    return np.inf if dmax == 0 else (x[-1] - x[0]) ** 2 / dmax


def evolve(problem, grid: Grid | int, scheme: SchemeConfig | None = None, initial="chord",
           reference: StationaryProfile | None | bool = True, keep_states: bool = False
           ) -> FlowResult:
    """Run the flow from `initial` until steady or out of time.

    `reference=True` builds the analytic limit for the sup-error column;
    pass a profile to override it or False to skip it.
    """
    fp = as_flow_problem(problem)
    scheme = scheme or SchemeConfig()
    if isinstance(grid, int):
        grid = fp.grid(grid)
    x = grid.nodes
    lo_dom, hi_dom = fp.domain
    if abs(grid.x_lo - lo_dom) > 1e-12 or abs(grid.x_hi - hi_dom) > 1e-12:
        raise InvalidProblemError("grid does not span the problem domain")
    if reference is True:
        reference = stationary_for(fp.problem)
    elif reference is False:
        reference = None
    u = initial_values(fp, x, initial)
    state = FlowState(0.0, u, fp.variable, fp, x)
    start = state.copy()
    max_time = scheme.max_time
    if max_time is None:
        max_time = 1e4 * diffusion_time(fp, x, u)
    runner = _run_theta if scheme.theta > 0 else _run_explicit
    ref_values = reference(x) if reference is not None else None
    t0 = time.perf_counter()
    out = runner(fp, state, scheme, max_time, ref_values, keep_states, t0)
    status, steps, halvings, dt, residual, records, reports = out
    wall = time.perf_counter() - t0
    return FlowResult(state, start, records, status, steps, wall, halvings, dt, residual,
                      reference, reports)


def _crushed(old, new, top, ratio) -> bool:
    """True if a node's distance to a degenerate level shrank below `ratio` of its old value.

    Q vanishes at both boundary levels (w = 0 and w = top), so a long
    implicit step can park an interior node on one of them where it would
    stay frozen for good.
    """
    for gap_old, gap_new in ((old[1:-1], new[1:-1]), (top - old[1:-1], top - new[1:-1])):
        live = gap_old > 0
        if np.any(gap_new[live] < ratio * gap_old[live]):
            return True
    return False


def _steady(w, r, top, residual, scheme) -> bool:
    """Small residual and no node drifting off a degenerate level."""
    if residual >= scheme.steady_tol:
        return False
    return K.escape_rate(w, r, 0.0, top) < scheme.escape_tol


def _out_of_time(t, max_time) -> bool:
    # same end-of-window tolerance as the explicit kernel
    return t >= max_time - 1e-15 * max(1.0, abs(max_time))


def _excess(fp: FlowProblem, u):
    """Work in w = u - base so values next to the lower level keep full precision."""
    base, top = fp.boundary
    w = u - base
    w[0] = 0.0
    w[-1] = top - base
    return base, top - base, w


def _run_explicit(fp, state, scheme, max_time, reference, keep, t0):
    x = state.x
    u = state.values
    base, top, w = _excess(fp, u)
    need = scheme.steady_steps
    chunk = scheme.snapshot_every or 1000
    args = fp.kernel_args()
    lower, diag, upper, const = (np.empty_like(w) for _ in range(4))
    out = np.empty_like(w)
    K.coefficients(args[0], x, w, base, *args[1:], lower, diag, upper, const)
    residual = K.apply(lower, diag, upper, const, w, out)
    records = [_record(state, reference, residual, 0.0, 0)]
    reports = []
    if _steady(w, out, top, residual, scheme):
        return CONVERGED, 0, 0, 0.0, residual, records, reports
    factor = 1.0
    halvings = 0
    steps = 0
    count = 0
    dt = 0.0
    while True:
        if scheme.dt is not None:
            dt = scheme.dt * factor
        else:
            K.coefficients(args[0], x, w, base, *args[1:], lower, diag, upper, const)
            dmax = np.max(np.abs(diag))
            dt = factor * scheme.cfl / dmax if dmax > 0 else max_time
        saved = w.copy()
        t_before, count_before = state.t, count
        budget = min(chunk, scheme.max_steps - steps)
        t, taken, count, worst = K.advance_explicit(
            args[0], x, w, base, dt, state.t, max_time, budget, scheme.steady_tol, need, count,
            top, scheme.escape_tol, *args[1:])
        if not _valid(w, top):
            w[:] = saved
            state.t, count = t_before, count_before
            halvings += 1
            factor *= 0.5
            msg = f"step rejected at t={t_before:.6g}; dt halved to {dt * 0.5:.3g}"
            reports.append(msg)
            log.warning(msg)
            if halvings > scheme.max_halvings:
                raise SchemeError(f"explicit scheme failed after {halvings} dt halvings")
            continue
        state.t = t
        u[1:-1] = base + w[1:-1]
        steps += taken
        residual = float(worst)
        records.append(_record(state, reference, residual, dt, steps))
        if keep:
            records[-1]["values"] = state.f.copy()
        if count >= need:
            return CONVERGED, steps, halvings, dt, residual, records, reports
        if (taken == 0 or _out_of_time(t, max_time) or steps >= scheme.max_steps or
                (scheme.wall_limit and time.perf_counter() - t0 > scheme.wall_limit)):
            return INDETERMINATE, steps, halvings, dt, residual, records, reports


def _run_theta(fp, state, scheme, max_time, reference, keep, t0):
    x = state.x
    u = state.values
    base, top, w = _excess(fp, u)
    need = scheme.steady_steps
    every = scheme.snapshot_every or 1
    lower, diag, upper, const = (np.empty_like(w) for _ in range(4))
    out = np.empty_like(w)
    new = np.empty_like(w)
    args = fp.kernel_args()
    K.coefficients(args[0], x, w, base, *args[1:], lower, diag, upper, const)
    residual = K.apply(lower, diag, upper, const, w, out)
    records = [_record(state, reference, residual, 0.0, 0)]
    reports = []
    if _steady(w, out, top, residual, scheme):
        return CONVERGED, 0, 0, 0.0, residual, records, reports
    dmax = np.max(np.abs(diag))
    dt0 = scheme.dt or (scheme.cfl / dmax if dmax > 0 else 1.0)
    dt = dt0
    # leave room for the sustained steady count inside the time budget
    dt_cap = max(dt0, max_time / (10.0 * need)) if np.isfinite(max_time) else np.inf
    steps = 0
    count = 0
    halvings = 0
    while True:
        K.coefficients(args[0], x, w, base, *args[1:], lower, diag, upper, const)
        residual = K.apply(lower, diag, upper, const, w, out)
        if _steady(w, out, top, residual, scheme):
            count += 1
            if count >= need:
                records.append(_record(state, reference, residual, dt, steps))
                return CONVERGED, steps, halvings, dt, residual, records, reports
        else:
            count = 0
        if (_out_of_time(state.t, max_time) or steps >= scheme.max_steps or
                (scheme.wall_limit and time.perf_counter() - t0 > scheme.wall_limit)):
            records.append(_record(state, reference, residual, dt, steps))
            return INDETERMINATE, steps, halvings, dt, residual, records, reports
        step = min(dt, max_time - state.t)
        K.theta_step(lower, diag, upper, const, w, step, scheme.theta, new)
        change = np.max(np.abs(new - w))
        if (not _valid(new, top) or change > scheme.max_change * top
                or _crushed(w, new, top, scheme.min_ratio)):
            dt *= 0.5
            halvings += 1
            if dt < 1e-14 * dt0:
                raise SchemeError("theta scheme cannot find an admissible step")
            continue
        w[:] = new
        u[1:-1] = base + w[1:-1]
        state.t += step
        steps += 1
        dt = min(dt * scheme.growth, dt_cap) if scheme.dt is None else dt
        if steps % every == 0:
            records.append(_record(state, reference, residual, step, steps))
            if keep:
                records[-1]["values"] = state.f.copy()


def gform_consistency(state: FlowState, dt: float | None = None) -> dict:
    """Compare the f-form step with the level-function form on X_{m,n}.

    With P(x,t) = G^{m,n,k}_1(f, x) the flow reads
        P_t = -F' u'' (d_f G^{m,n,k}_1)(f, x) d/dx[P_x / (G^{m,n}_1)'(x)].
    Returns the largest discrepancy between the two right-hand sides and
    between (P(t+dt) - P(t))/dt and the level-form right side, on nodes two
    cells away from the ends.
    """
    from .gpoly import g_mnk

    fp = state.problem
    if fp.family != "Xmn":
        raise InvalidProblemError("the level-function form is defined for X_{m,n}")
    x, f = state.x, state.values
    P = g_mnk(fp.m, fp.n, fp.k)
    level = P(f, x)
    dlevel = np.gradient(level, x)
    gprime = x**fp.m * (1 + x) ** fp.n
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = dlevel / gprime
    dsigma = np.gradient(sigma, x)
    fx = np.gradient(f, x)
    a = (1.0 + f) / (1.0 + x)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = f / x
    sig_arg = esym_groups_array(fp.k, [(a, fp.n), (b, fp.m), (fx, 1)])
    coef = fp.flux.neg_derivative(np.maximum(sig_arg, 1e-300)) * fp.profile.q(np.clip(f, fp.profile.lo, fp.profile.hi))
    with np.errstate(invalid="ignore"):
        level_rhs = coef * P.df()(f, x) * dsigma
    f_rhs = rhs(state)
    inner = slice(2, -2)
    chain = P.df()(f, x) * f_rhs
    out = {"rhs_gap": float(np.max(np.abs(level_rhs[inner] - chain[inner])))}
    if dt is not None:
        moved = f + dt * f_rhs
        out["step_gap"] = float(np.max(np.abs((P(moved, x) - level)[inner] / dt - level_rhs[inner])))
    return out


def profile_invariance(problem, grid, scheme: SchemeConfig, alt_profile, flux=None) -> dict:
    """Run the same problem under two potential profiles and compare the limits."""
    base = as_flow_problem(problem, flux=flux)
    alt = FlowProblem(base.problem, alt_profile, base.flux)
    r1 = evolve(base, grid, scheme)
    r2 = evolve(alt, grid, scheme)
    dist = float(np.max(np.abs(r1.state.f - r2.state.f)))
    return {"distance": dist, "base": r1, "alternate": r2}
