"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code: orbits, derivatives and
Green functions are recomputed in mpmath from their definitions, and the
closed forms for z^d are written out directly.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

PREC = 200


def mp_orbit_deriv(coeffs, n, z, prec=PREC):
    """(f^n)'(z) and (f^n)''(z) by the chain rule, in mpmath."""
    with mpmath.workprec(prec):
        cs = [mpmath.mpc(c) for c in coeffs]
        d1 = [k * cs[k] for k in range(1, len(cs))]
        d2 = [k * d1[k] for k in range(1, len(d1))]
        w = mpmath.mpc(z)
        u, v = mpmath.mpc(1), mpmath.mpc(0)
        for _ in range(n):
            f1 = mpmath.polyval(d1[::-1], w)
            f2 = mpmath.polyval(d2[::-1], w) if d2 else mpmath.mpc(0)
            u, v = f1 * u, f2 * u * u + f1 * v
            w = mpmath.polyval(cs[::-1], w)
        return u, v


def mp_green(coeffs, z, steps=60, prec=PREC):
    """g_f(z) = lim d^-N (log|f^N(z)| + log|a_d|/(d-1)), by brute iteration.

    Stops once |f^N(z)| > 1e40, where the neglected tail is below 1e-40.
    """
    d = len(coeffs) - 1
    with mpmath.workprec(prec):
        cs = [mpmath.mpc(c) for c in coeffs]
        w = mpmath.mpc(z)
        shift = mpmath.log(abs(cs[-1])) / (d - 1)
        for k in range(steps):
            w = mpmath.polyval(cs[::-1], w)
            if abs(w) > mpmath.mpf(10) ** 40:
                # the remaining corrections are O(|w|^-1) / d^(k+1), far below double precision
                return float((mpmath.log(abs(w)) + shift) / mpmath.mpf(d) ** (k + 1))
        return 0.0


def mp_expand_iterate(coeffs, n, prec=PREC):
    """Coefficients of f^n by repeated substitution (ascending, mpmath)."""
    with mpmath.workprec(prec):
        cs = [mpmath.mpc(c) for c in coeffs]
        acc = [mpmath.mpc(0), mpmath.mpc(1)]  # identity map
        for _ in range(n):
            out = [mpmath.mpc(0)]
            power = [mpmath.mpc(1)]
            for c in cs:
                out = _add(out, [c * p for p in power])
                power = _mul(power, acc)
            acc = out
        return acc


def _add(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def _mul(a, b):
    out = [mpmath.mpc(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def monomial_pullback_roots(d, n, a, lead=1.0):
    """Closed-form roots of ((c z^d)^n)' = a."""
    m = d**n - 1
    w = complex(a) / (complex(lead) ** ((d**n - 1) // (d - 1)) * d**n)
    r = abs(w) ** (1.0 / m)
    return r * np.exp(1j * (np.angle(w) + 2.0 * np.pi * np.arange(m)) / m)


def matched_distance(x, y):
    """Largest distance after optimal pairing (Hungarian assignment)."""
    from scipy.optimize import linear_sum_assignment

    x, y = np.asarray(x), np.asarray(y)
    cost = np.abs(x[:, None] - y[None, :])
    i, j = linear_sum_assignment(cost)
    return float(cost[i, j].max())


def mp_critical_orbit(d, n, lam, prec=PREC):
    """p_1(lam), ..., p_n(lam) in mpmath."""
    with mpmath.workprec(prec):
        lam = mpmath.mpc(lam)
        p = lam
        out = []
        for _ in range(n):
            out.append(p)
            p = p**d + lam
        return out


def mp_green_param(d, lam, steps=80, prec=PREC):
    """g(lam) = lim d^-(k-1) log|p_k(lam)| by brute iteration."""
    with mpmath.workprec(prec):
        lam = mpmath.mpc(lam)
        p = lam
        for k in range(1, steps):
            if abs(p) > mpmath.mpf(10) ** 40:
                return float(mpmath.log(abs(p)) / mpmath.mpf(d) ** (k - 1))
            p = p**d + lam
        return 0.0


def radial_sphere_integral(h):
    """int h(|z|) d omega(z) = int_0^inf h(r) 2r/(1+r^2)^2 dr."""
    return float(mpmath.quad(lambda r: h(r) * 2 * r / (1 + r * r) ** 2, [0, 1, mpmath.inf]))


def zd_potential_l1(d, n, a=1.0):
    """int |log|d^n z^m - a|/m - log+|z|| d omega for z^d and a > 0, by quadrature.

    In polar coordinates only theta = m t matters, so the angular mean is a
    one-period integral in theta.
    """
    from scipy.integrate import quad

    m = d**n - 1
    r0 = (a / d**n) ** (1.0 / m)

    def angular(r):
        logA = n * math.log(d) + m * math.log(r) - math.log(a)
        c = max(math.log(r), 0.0) - math.log(a) / m
        # log|A e^{i theta} - 1| written so that large A cannot overflow
        big = logA > 0
        B = math.exp(-logA if big else logA)
        base = logA if big else 0.0

        def v(th):
            s = B * B - 2 * B * math.cos(th)
            inner = math.log(abs(2 * math.sin(th / 2))) if B == 1 else 0.5 * math.log1p(s)
            return abs((base + inner) / m - c)

        # symmetric in theta; log singularity at theta = 0 when A = 1
        return quad(v, 0.0, math.pi, limit=200, points=[1e-6])[0] / math.pi

    def radial(r):
        return angular(r) * 2 * r / (1 + r * r) ** 2

    pieces = [(0.0, r0), (r0, 1.0), (1.0, 2.0)]
    total = sum(quad(radial, lo, hi, limit=200)[0] for lo, hi in pieces)
    # beyond r = 2 substitute r = 1/s
    total += quad(lambda s: radial(1.0 / s) / (s * s), 0.0, 0.5, limit=200)[0]
    return total


def fit_log_linear(ns, values):
    """Slope/intercept of log(value) against n by the normal equations."""
    x = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    slope, icpt = np.linalg.lstsq(A, y, rcond=None)[0]
    return math.exp(slope), math.exp(icpt)
