"""Numba kernels for the reduced flows and the projected SOR sweep.

All kernels work on plain float64 arrays. The Python-level modules
(`flow`, `obstacle`) own validation and bookkeeping.

Both reductions are written as a frozen-coefficient tridiagonal operator

    rhs_i = lower_i * w[i-1] + diag_i * w[i] + upper_i * w[i+1] + const_i

acting on the excess w = u - base over the lower boundary value. The
diffusion factor vanishes at that level, so it is evaluated from w directly;
going through u = base + w would round small excesses to zero and freeze
nodes that should still move. Explicit stepping evaluates the operator
directly; the theta scheme freezes it over one step.
"""

import numpy as np
from numba import njit

FAMILY_PN = 0
FAMILY_XMN = 1

# -F'(s) at the local sigma argument
FLUX_NEG_IDENTITY = 0
FLUX_NEG_LOG = 1
FLUX_TABLE = 2

# u'' expressed through u'
Q_LOGISTIC = 0
Q_TABLE = 1


@njit(cache=True)
def binom(n, k):
    if k < 0 or k > n:
        return 0.0
    r = 1.0
    for i in range(k):
        r = r * (n - i) / (i + 1)
    return r


@njit(cache=True)
def neg_dflux(s, kind, tab_s, tab_d):
    if kind == FLUX_NEG_IDENTITY:
        return 1.0
    if kind == FLUX_NEG_LOG:
        return 1.0 / max(s, 1e-300)
    return np.interp(s, tab_s, tab_d)


@njit(cache=True)
def q_factor(y, y_lo, lo, hi, kind, tab_y, tab_q):
    """Q(y) given y and y_lo = y - lo computed without cancellation."""
    if kind == Q_LOGISTIC:
        q = y_lo * (hi - y) / (hi - lo)
    else:
        q = np.interp(y, tab_y, tab_q)
    return q if q > 0.0 else 0.0


@njit(cache=True)
def esym_groups(j, a, p, b, q, c, r):
    """sigma_j of the tuple (a repeated p times, b q times, c r times)."""
    if j < 0:
        return 0.0
    total = 0.0
    for i in range(min(j, p) + 1):
        for l in range(min(j - i, q) + 1):
            s = j - i - l
            if s > r:
                continue
            total += binom(p, i) * binom(q, l) * binom(r, s) * a**i * b**l * c**s
    return total


@njit(cache=True)
def pn_coefficients(x, w, base, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv,
                    lower, diag, upper, const):
    """g = f^k reduction on P^n # P^n-bar, g = base + w:
    g_t = -F' Q(g) [g_xx + (n+1-2k) g_x/x - k(n-k) g/x^2]."""
    npts = x.shape[0]
    h = x[1] - x[0]
    c1 = binom(n - 1, k - 1)
    c2 = binom(n - 1, k)
    adv = n + 1 - 2 * k
    react = k * (n - k)
    lo_k = lo**k
    for i in range(1, npts - 1):
        xi = x[i]
        gi = base + w[i]
        gx = (w[i + 1] - w[i - 1]) / (2.0 * h)
        if k == 1:
            fi = gi
            f_lo = w[i] + (base - lo)
            sigma = gx + c2 * gi / xi
            coef = neg_dflux(sigma, flux_kind, fs, fd)
        else:
            fi = gi ** (1.0 / k) if gi > 0.0 else 0.0
            if lo_k > 0.0:
                f_lo = lo * np.expm1(np.log1p((w[i] + (base - lo_k)) / lo_k) / k)
            else:
                f_lo = fi
            sigma = c1 / k * xi ** (1 - k) * gx + c2 * gi / xi**k
            coef = neg_dflux(sigma, flux_kind, fs, fd) * c1 * (fi / xi) ** (k - 1)
        coef *= q_factor(fi, f_lo, lo, hi, q_kind, qy, qv)
        lower[i] = coef * (1.0 / (h * h) - adv / (2.0 * h * xi))
        upper[i] = coef * (1.0 / (h * h) + adv / (2.0 * h * xi))
        diag[i] = -coef * (2.0 / (h * h) + react / (xi * xi))
        const[i] = -coef * react * base / (xi * xi)


@njit(cache=True)
def xmn_coefficients(x, w, base, m, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv,
                     lower, diag, upper, const):
    """f reduction on X_{m,n}, f = base + w: f_t = -F' u'' d/dx sigma_k(A x n, B x m, f'),
    A = (1+f)/(1+x), B = f/x, expanded by the chain rule over the groups."""
    npts = x.shape[0]
    h = x[1] - x[0]
    for i in range(1, npts - 1):
        xi = x[i]
        fi = base + w[i]
        fx = (w[i + 1] - w[i - 1]) / (2.0 * h)
        a = (1.0 + fi) / (1.0 + xi)
        b = fi / xi
        s_a = n * esym_groups(k - 1, a, n - 1, b, m, fx, 1) if n > 0 else 0.0
        s_b = m * esym_groups(k - 1, a, n, b, m - 1, fx, 1) if m > 0 else 0.0
        s_c = esym_groups(k - 1, a, n, b, m, fx, 0)
        sigma = esym_groups(k, a, n, b, m, fx, 1)
        coef = neg_dflux(sigma, flux_kind, fs, fd) * q_factor(
            fi, w[i] + (base - lo), lo, hi, q_kind, qy, qv)
        adv = s_a / (1.0 + xi) + s_b / xi
        lower[i] = coef * (s_c / (h * h) - adv / (2.0 * h))
        upper[i] = coef * (s_c / (h * h) + adv / (2.0 * h))
        diag[i] = -coef * (2.0 * s_c / (h * h) + s_b / (xi * xi) + s_a / ((1.0 + xi) * (1.0 + xi)))
        const[i] = -coef * s_a / ((1.0 + xi) * (1.0 + xi))
        const[i] += base * (lower[i] + diag[i] + upper[i])


@njit(cache=True)
def coefficients(family, x, w, base, m, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv,
                 lower, diag, upper, const):
    npts = x.shape[0]
    for arr in (lower, diag, upper, const):
        arr[0] = 0.0
        arr[npts - 1] = 0.0
    if family == FAMILY_PN:
        pn_coefficients(x, w, base, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv,
                        lower, diag, upper, const)
    else:
        xmn_coefficients(x, w, base, m, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv,
                         lower, diag, upper, const)


@njit(cache=True)
def apply(lower, diag, upper, const, u, out):
    """out = frozen operator applied to u; returns max |out| on interior."""
    npts = u.shape[0]
    out[0] = 0.0
    out[npts - 1] = 0.0
    worst = 0.0
    for i in range(1, npts - 1):
        v = lower[i] * u[i - 1] + diag[i] * u[i] + upper[i] * u[i + 1] + const[i]
        out[i] = v
        if abs(v) > worst:
            worst = abs(v)
    return worst


@njit(cache=True)
def escape_rate(u, rhs, blo, bhi):
    """Largest relative rate at which an interior node leaves a degenerate level.

    Near blo (or bhi) the diffusion factor vanishes, so |rhs| can be tiny at a
    node that is still moving away from the level; rhs/(u - blo) exposes it.
    """
    npts = u.shape[0]
    worst = 0.0
    for i in range(1, npts - 1):
        v = rhs[i]
        if v > 0.0 and u[i] > blo:
            r = v / (u[i] - blo)
        elif v < 0.0 and u[i] < bhi:
            r = -v / (bhi - u[i])
        else:
            r = 0.0
        if r > worst:
            worst = r
    return worst


@njit(cache=True)
def advance_explicit(family, x, w, base, dt, t, t_stop, max_steps, tol, need, count,
                     top, rate_tol, m, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv):
    """Explicit Euler on the excess w with fixed dt until t_stop, max_steps, or
    the steady criterion (max|rhs| < tol and escape rate < rate_tol for `need`
    consecutive steps). `top` is the upper boundary value of w.

    Returns (t, steps, count, last_max_rhs); `w` is updated in place.
    """
    npts = x.shape[0]
    lower = np.empty(npts)
    diag = np.empty(npts)
    upper = np.empty(npts)
    const = np.empty(npts)
    rhs = np.empty(npts)
    steps = 0
    worst = 0.0
    while steps < max_steps and t < t_stop - 1e-15 * max(1.0, abs(t_stop)):
        coefficients(family, x, w, base, m, n, k, lo, hi, flux_kind, fs, fd, q_kind, qy, qv,
                     lower, diag, upper, const)
        worst = apply(lower, diag, upper, const, w, rhs)
        steady = worst < tol and escape_rate(w, rhs, 0.0, top) < rate_tol
        step = min(dt, t_stop - t)
        for i in range(1, npts - 1):
            w[i] += step * rhs[i]
        t += step
        steps += 1
        if steady:
            count += 1
            if count >= need:
                break
        else:
            count = 0
    return t, steps, count, worst


@njit(cache=True)
def theta_step(lower, diag, upper, const, u, dt, theta, out):
    """One frozen-coefficient theta step (Thomas algorithm on interior nodes)."""
    npts = u.shape[0]
    nint = npts - 2
    a = np.empty(nint)
    b = np.empty(nint)
    c = np.empty(nint)
    r = np.empty(nint)
    for j in range(nint):
        i = j + 1
        explicit = lower[i] * u[i - 1] + diag[i] * u[i] + upper[i] * u[i + 1]
        a[j] = -dt * theta * lower[i]
        b[j] = 1.0 - dt * theta * diag[i]
        c[j] = -dt * theta * upper[i]
        r[j] = u[i] + dt * ((1.0 - theta) * explicit + const[i])
    # boundary values are pinned
    r[0] -= a[0] * u[0]
    r[nint - 1] -= c[nint - 1] * u[npts - 1]
    for j in range(1, nint):
        w = a[j] / b[j - 1]
        b[j] -= w * c[j - 1]
        r[j] -= w * r[j - 1]
    out[0] = u[0]
    out[npts - 1] = u[npts - 1]
    out[nint] = r[nint - 1] / b[nint - 1]
    for j in range(nint - 2, -1, -1):
        out[j + 1] = (r[j] - c[j] * out[j + 2]) / b[j]


@njit(cache=True)
def psor(c_half, d, f, lower, omega, tol, max_sweeps, check_every):
    """Projected SOR for the symmetric three-point system

        c_{i+1/2}(f_{i+1}-f_i) - c_{i-1/2}(f_i-f_{i-1}) - d_i f_i = 0

    subject to f >= lower on interior nodes. Boundary nodes are fixed.

    Returns (sweeps, last_change, status): status 0 converged, 1 sweep cap,
    2 energy increase between checks.
    """
    npts = f.shape[0]
    last_energy = discrete_energy(f, c_half, d)
    change = 0.0
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for i in range(1, npts - 1):
            cl = c_half[i - 1]
            cr = c_half[i]
            target = (cr * f[i + 1] + cl * f[i - 1]) / (cl + cr + d[i])
            new = (1.0 - omega) * f[i] + omega * target
            if new < lower:
                new = lower
            delta = abs(new - f[i])
            if delta > change:
                change = delta
            f[i] = new
        if change < tol:
            return sweep, change, 0
        if sweep % check_every == 0:
            e = discrete_energy(f, c_half, d)
            if e > last_energy + 1e-13 * abs(last_energy):
                return sweep, change, 2
            last_energy = e
    return max_sweeps, change, 1


@njit(cache=True)
def discrete_energy(f, c_half, d):
    e = 0.0
    for i in range(f.shape[0] - 1):
        diff = f[i + 1] - f[i]
        e += c_half[i] * diff * diff
    for i in range(f.shape[0]):
        e += d[i] * f[i] * f[i]
    return 0.5 * e
