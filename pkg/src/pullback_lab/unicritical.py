"""The unicritical family f_lam(z) = z^d + lam, seen from parameter space.

The critical orbit polynomials are p_1 = lam, p_{k+1} = p_k^d + lam, so
p_k(lam) = f_lam^k(0) and, by the chain rule,

    (f_lam^n)'(lam) = d^n * prod_{j=1..n} p_j(lam)^(d-1),

a polynomial of degree d^n - 1 in lam.  Its Green function in the parameter
plane is g(lam) = g_{f_lam}(lam) = lim d^-(k-1) log|p_k(lam)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import mpmath
import numpy as np
from gmpy2 import mpc

from .discrepancy import Estimate, TestFunctionBank, _estimate, _require_samples, weak_gap_from_potential
from .errors import CapExceeded, CriticalParameter
from .green import DEFAULT_N_MAX, DEFAULT_TOL, GreenValue, fs_sample
from .measures import WeightedMeasure
from .poly import (DEFAULT_DEGREE_CAP, Poly, exact_mpc, int_poly_mul, int_poly_pow, log_half_one_plus_sq,
                   log_minus_const, wrap_log)
from .roots import RootSet, SolverConfig, Target, solve_target

__all__ = [
    "UnicriticalFamily",
    "critical_orbit_poly",
    "deriv_at_critical_value_poly",
    "ParamTarget",
    "critical_orbit_logs",
    "log_deriv_at_critical_value",
    "green_param",
    "green_param_array",
    "param_roots",
    "param_pullback_measure",
    "param_potential_discrepancy",
    "param_weak_gap",
    "param_proximity",
    "param_upper_gap",
    "unicritical_log_identity",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class UnicriticalFamily:
    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError("the family needs an integer degree d >= 2")

    @property
    def map_id(self) -> str:
        return f"unicritical:{self.d}"

    def map_at(self, lam: complex) -> Poly:
        return Poly(tuple([complex(lam)] + [0j] * (self.d - 1) + [1.0]))


# ---------------------------------------------------------------------------
# exact polynomials in lam (nonnegative integer coefficients)


@lru_cache(maxsize=64)
def _orbit_int(d: int, n: int) -> tuple[tuple[int, ...], ...]:
    """Integer coefficient lists of p_1, ..., p_n."""
    ps = [[0, 1]]
    for _ in range(n - 1):
        nxt = int_poly_pow(ps[-1], d)
        nxt[1] += 1
        ps.append(nxt)
    return tuple(tuple(p) for p in ps)


@lru_cache(maxsize=64)
def _deriv_int(d: int, n: int) -> tuple[int, ...]:
    acc = [d**n]
    for p in _orbit_int(d, n):
        acc = int_poly_mul(acc, int_poly_pow(p, d - 1))
    return tuple(acc)


def _int_poly(coeffs) -> Poly:
    return Poly(tuple(exact_mpc(c, 0, 0) for c in coeffs), prec=max(64, max(c.bit_length() for c in coeffs) + 64))


def critical_orbit_poly(fam: UnicriticalFamily, n: int, cap: int = DEFAULT_DEGREE_CAP) -> Poly:
    """p_n(lam) = f_lam^n(0), of degree d^(n-1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if fam.d ** (n - 1) > cap:
        raise CapExceeded(f"degree {fam.d ** (n - 1)} exceeds cap {cap}")
    return _int_poly(_orbit_int(fam.d, n)[-1])


def deriv_at_critical_value_poly(fam: UnicriticalFamily, n: int, cap: int = DEFAULT_DEGREE_CAP) -> Poly:
    """(f_lam^n)'(lam) expanded: degree d^n - 1, leading coefficient d^n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if fam.d**n - 1 > cap:
        raise CapExceeded(f"degree {fam.d**n - 1} exceeds cap {cap}")
    return _int_poly(_deriv_int(fam.d, n))


# ---------------------------------------------------------------------------
# log-space critical orbits


def _escape_radius(d: int, lam: np.ndarray) -> np.ndarray:
    # beyond this |p^d| >= 2|lam| and |p^d + lam| >= |p|
    return np.maximum(2.0, (2.0 * np.abs(lam)) ** (1.0 / d))


def critical_orbit_logs(d: int, lam, n: int, ratios: bool = False):
    """Complex logs of p_1(lam), ..., p_n(lam) as an (n, len(lam)) array.

    With ``ratios`` also returns p_j'(lam)/p_j(lam).  Orbits are carried
    directly until they pass the escape radius and as logarithms afterwards.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    K = lam.size
    R = _escape_radius(d, lam)
    logs = np.empty((n, K), dtype=complex)
    rat = np.empty((n, K), dtype=complex) if ratios else None
    p = lam.copy()
    dp = np.ones(K, dtype=complex)
    big = np.abs(p) >= R
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        L = np.where(big, np.log(np.where(big, p, 1.0)), 0j)
        r = np.where(big, dp / np.where(big, p, 1.0), 0j)
        for j in range(n):
            logs[j] = np.where(big, L, np.log(p))
            if ratios:
                rat[j] = np.where(big, r, dp / p)
            if j == n - 1:
                break
            # escaped points: L <- d L + log(1 + lam e^{-dL})
            inv = np.exp(-d * L)
            e = lam * inv
            r = np.where(big, (d * r + inv) / (1.0 + e), r)
            L = np.where(big, d * L + np.log1p(e), L)
            # bounded points: direct recursion
            pd1 = p ** (d - 1)
            dp = np.where(big, dp, d * pd1 * dp + 1.0)
            p = np.where(big, p, pd1 * p + lam)
            switch = ~big & (np.abs(p) >= R)
            if np.any(switch):
                L[switch] = np.log(p[switch])
                r[switch] = dp[switch] / p[switch]
                big = big | switch
    return (logs, rat) if ratios else logs


def log_deriv_at_critical_value(d: int, n: int, lam, derivative: bool = False):
    """log (f_lam^n)'(lam) from the product formula (and log of its lam-derivative)."""
    out = critical_orbit_logs(d, lam, n, ratios=derivative)
    logs, rat = out if derivative else (out, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        LG = wrap_log(n * math.log(d) + (d - 1) * logs.sum(axis=0))
        if not derivative:
            return LG
        LdG = wrap_log(LG + np.log((d - 1) * rat.sum(axis=0)))
    return LG, LdG


class ParamTarget(Target):
    """G(lam) = (f_lam^n)'(lam) for the root engine."""

    def __init__(self, fam: UnicriticalFamily, n: int, a: complex):
        self.fam = fam
        self.d = fam.d
        self.n = n
        self.a = complex(a)
        self.m = fam.d**n - 1

    def log_G(self, z):
        return log_deriv_at_critical_value(self.d, self.n, z, derivative=True)

    def fixed_coeffs(self, prec: int):
        cs = _deriv_int(self.d, self.n)
        return [c << prec for c in cs], [0] * len(cs)

    def log_majorant(self, r):
        # all coefficients are nonnegative, so the majorant is G itself on r >= 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return log_deriv_at_critical_value(self.d, self.n, r.astype(complex)).real

    def search_radius(self) -> float:
        d, n = self.d, self.n
        base = max(2.0, 2.0 ** (1.0 / (d - 1)))
        if self.a != 0:
            base = max(base, (2.0 * abs(self.a) / d**n) ** (1.0 / ((d - 1) * n)))
        return 2.0 * base


def param_roots(fam: UnicriticalFamily, n: int, a: complex, cfg: SolverConfig | None = None) -> RootSet:
    return solve_target(ParamTarget(fam, n, a), cfg)


def param_pullback_measure(fam: UnicriticalFamily, n: int, a: complex,
                           cfg: SolverConfig | None = None) -> WeightedMeasure:
    rs = param_roots(fam, n, a, cfg)
    m = fam.d**n - 1
    return WeightedMeasure(rs.locations(), np.array([r.multiplicity for r in rs.roots], dtype=float) / m)


# ---------------------------------------------------------------------------
# parameter-plane Green function


def green_param_array(fam: UnicriticalFamily, lam, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX):
    """g(lam) = g_{f_lam}(lam) with certificates: arrays (value, err, escaped).

    Once |p_k| passes the escape radius, g = d^-(k-1) log|p_k| up to
    d^-(k-1) log 2/(d-1).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = fam.d
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    value = np.zeros(lam.size)
    err = np.zeros(lam.size)
    escaped = np.zeros(lam.size, dtype=bool)
    idx = np.arange(lam.size)
    lm = lam.copy()
    logR = np.log(_escape_radius(d, lm))
    p = lm.copy()
    big = np.zeros(lm.size, dtype=bool)
    L = np.zeros(lm.size, dtype=complex)
    c_err = LN2 / (d - 1)
    for k in range(1, n_max + 1):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            la = np.where(big, L.real, np.log(np.abs(p)))
        switch = ~big & (la >= logR)
        if np.any(switch):
            L[switch] = np.log(p[switch])
            big |= switch
        scale = float(d) ** (-(k - 1))
        if scale * c_err <= tol:
            # bounded orbits are settled once the a-priori bound drops below tol
            stay = ~big & (scale * (logR + c_err) <= tol)
            done = big | stay
            if np.any(done):
                hit = idx[big]
                value[hit] = scale * L[big].real
                err[hit] = scale * c_err
                escaped[hit] = True
                err[idx[stay]] = scale * (logR[stay] + c_err)
                keep = ~done
                idx, lm, logR, p, big, L = idx[keep], lm[keep], logR[keep], p[keep], big[keep], L[keep]
        if idx.size == 0 or k == n_max:
            break
        with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
            L = np.where(big, d * L + np.log1p(lm * np.exp(-d * L)), L)
            p = np.where(big, 0j, p**d + lm)
    if idx.size:
        err[idx] = float(d) ** (-(n_max - 1)) * (logR + c_err)
    return value, err, escaped


def green_param(fam: UnicriticalFamily, lam: complex, tol: float = DEFAULT_TOL,
                n_max: int = DEFAULT_N_MAX) -> GreenValue:
    v, e, s = green_param_array(fam, np.array([lam]), tol, n_max)
    return GreenValue(float(v[0]), float(e[0]), bool(s[0]))


def param_potential_discrepancy(fam: UnicriticalFamily, n: int, a: complex, samples: int = 10_000,
                                seed: int = 0) -> Estimate:
    """Monte Carlo estimate of int |log|(f_lam^n)'(lam) - a|/(d^n-1) - g(lam)| d omega(lam)."""
    _require_samples(samples)
    a = complex(a)
    if np.isinf(a):
        raise ValueError("a must be finite")
    lam = fs_sample(seed, samples)
    m = fam.d**n - 1
    LG = log_deriv_at_critical_value(fam.d, n, lam)
    g, _, _ = green_param_array(fam, lam)
    return _estimate(np.abs(log_minus_const(LG, a).real / m - g))


def param_weak_gap(fam: UnicriticalFamily, n: int, a: complex, samples: int = 10_000, seed: int = 0,
                   bank: TestFunctionBank | None = None) -> Estimate:
    """Weak gap to the harmonic measure of the connectedness locus, via potentials.

    That measure is never sampled: its potential is g, so the gap is a Monte
    Carlo integral of (log|G - a|/(d^n-1) - g) against dd^c phi.
    """
    _require_samples(samples)
    lam = fs_sample(seed, samples)
    m = fam.d**n - 1
    diff = log_minus_const(log_deriv_at_critical_value(fam.d, n, lam), complex(a)).real / m \
        - green_param_array(fam, lam)[0]
    return weak_gap_from_potential(lam, diff, bank)


def param_proximity(fam: UnicriticalFamily, n: int, a: complex, samples: int = 10_000, seed: int = 0) -> Estimate:
    """Monte Carlo estimate of int log 1/[(f_lam^n)'(lam), a] d omega(lam)."""
    _require_samples(samples)
    lam = fs_sample(seed, samples)
    LG = log_deriv_at_critical_value(fam.d, n, lam)
    vals = log_half_one_plus_sq(LG.real)
    a = complex(a)
    if not np.isinf(a):
        vals = vals + 0.5 * math.log1p(abs(a) ** 2) - log_minus_const(LG, a).real
    return _estimate(vals)


def param_upper_gap(fam: UnicriticalFamily, n: int, lam):
    """log max{1, |(f_lam^n)'(lam)|}/(d^n-1) - g(lam), with the Green error."""
    m = fam.d**n - 1
    LG = log_deriv_at_critical_value(fam.d, n, lam)
    g, err, _ = green_param_array(fam, lam)
    return np.maximum(LG.real, 0.0) / m - g, err


# ---------------------------------------------------------------------------
# expansion versus product


def unicritical_log_identity(fam: UnicriticalFamily, n: int, lam: complex) -> float:
    """|log|(f_lam^n)'(lam)| - n log d - (d-1) sum_j log|p_j(lam)||.

    The left side evaluates the expanded polynomial with gmpy2, raising the
    precision until a running-error bound certifies 40 correct bits; the right
    side runs the critical orbit in mpmath.
    """
    d = fam.d
    lam = complex(lam)
    m = d**n - 1
    # right-hand side from the orbit recursion
    with mpmath.workprec(256):
        L = mpmath.mpc(lam)
        p = L
        s = mpmath.mpf(0)
        for j in range(1, n + 1):
            if p == 0 or abs(p) < mpmath.mpf(2) ** -200:
                raise CriticalParameter(f"p_{j}(lam) vanishes at lam = {lam}")
            s += mpmath.log(abs(p))
            p = p**d + L
        rhs = float(n * mpmath.log(d) + (d - 1) * s)
    # left-hand side from the expansion
    coeffs = _deriv_int(d, n)
    log_major = float(log_deriv_at_critical_value(d, n, np.array([abs(lam) + 0j])).real[0])
    prec = 64 + int(max(log_major - rhs, 0.0) / LN2) + 48
    while True:
        with gmpy2.context(gmpy2.get_context(), precision=prec):
            z = mpc(lam)
            acc = mpc(0)
            for c in reversed(coeffs):
                acc = acc * z + c
            absval = abs(acc)
            lhs = float(gmpy2.log(absval)) if absval > 0 else -math.inf
        bound_log = math.log(4.0 * (m + 2)) - prec * LN2 + log_major
        if lhs > -math.inf and bound_log - lhs < -40 * LN2:
            break
        if prec > 1 << 16:
            raise CriticalParameter(f"cannot certify |(f_lam^n)'(lam)| at lam = {lam}")
        prec *= 2
    return abs(lhs - rhs)
