"""Chordal geometry of the Riemann sphere and dynamical Green functions.

The chordal metric is normalised so that ``[z, inf] = 1/sqrt(1 + |z|^2)``, and
the Fubini-Study area ``omega`` is the rotation-invariant probability measure
on the sphere.  Points at infinity are represented by complex infinity
(``complex(inf, 0)``); anything for which ``numpy.isinf`` is true counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .poly import Orbit, Poly, escape_radius

__all__ = [
    "INF",
    "GreenValue",
    "chordal",
    "log_chordal",
    "fs_sample",
    "escape_radius",
    "green",
    "green_array",
    "green_from_log",
    "green_gap_sup",
    "constant_Cf",
]

INF = complex(math.inf, 0.0)
DEFAULT_N_MAX = 2048
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class GreenValue:
    value: float
    err: float
    escaped: bool


def chordal(z, w):
    """Chordal distance |z-w| / (sqrt(1+|z|^2) sqrt(1+|w|^2)), with infinity."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zi, wi = np.isinf(z), np.isinf(w)
    zf = np.where(zi, 0j, z)
    wf = np.where(wi, 0j, w)
    az, aw = np.abs(zf), np.abs(wf)
    finite = np.abs(zf - wf) / (np.sqrt(1 + az**2) * np.sqrt(1 + aw**2))
    out = np.where(zi & wi, 0.0, finite)
    out = np.where(zi & ~wi, 1.0 / np.sqrt(1 + aw**2), out)
    out = np.where(wi & ~zi, 1.0 / np.sqrt(1 + az**2), out)
    return out if out.ndim else float(out)


def log_chordal(z, w):
    """log [z, w] for finite points, computed without forming the quotient."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    with np.errstate(divide="ignore"):
        out = (np.log(np.abs(z - w))
               - 0.5 * np.log1p(np.abs(z) ** 2) - 0.5 * np.log1p(np.abs(w) ** 2))
    return out if out.ndim else float(out)


def fs_sample(seed: int, count: int) -> np.ndarray:
    """``count`` points distributed by the Fubini-Study area element.

    Uniform points on the unit sphere, mapped to the plane by stereographic
    projection from the north pole.  The height is drawn from [-1, 1) so the
    pole itself (infinity) never occurs.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    t = 2.0 * rng.random(count) - 1.0
    phi = 2.0 * math.pi * rng.random(count)
    r = np.sqrt((1.0 + t) / (1.0 - t))
    return r * np.exp(1j * phi)


def _growth_radius(f: Poly) -> float:
    """Radius beyond which both escape-radius bounds hold and |f(z)| >= |z|."""
    d = f.degree
    lead = abs(complex(f.lead))
    return max(escape_radius(f), (2.0 / lead) ** (1.0 / (d - 1)))


def _green_run(f: Poly, orbit: Orbit, tol: float, n_max: int):
    d = f.degree
    lead = abs(complex(f.lead))
    shift = math.log(lead) / (d - 1)
    c_err = math.log(2.0) / (d - 1)
    log_Rg = math.log(_growth_radius(f))
    size = orbit.w.shape[0]
    value = np.zeros(size)
    err = np.zeros(size)
    escaped = np.zeros(size, dtype=bool)
    idx = np.arange(size)
    # sup of g_f on the disk |w| <= R_g
    gmax = max(log_Rg + (math.log(lead) + math.log(2.0)) / (d - 1), 0.0)
    for N in range(n_max + 1):
        scale = float(d) ** (-N)
        if scale * c_err <= tol:
            la = orbit.log_abs()
            out = la >= log_Rg
            # an orbit still inside the disk once d^-N gmax <= tol is settled: g_f in [0, tol]
            stay = ~out & (scale * gmax <= tol)
            done = out | stay
            if np.any(done):
                hit = idx[out]
                value[hit] = scale * (la[out] + shift)
                err[hit] = scale * c_err
                escaped[hit] = True
                err[idx[stay]] = scale * gmax
                keep = ~done
                idx = idx[keep]
                orbit.keep(keep)
        if idx.size == 0 or N == n_max:
            break
        orbit.step()
    if idx.size:
        err[idx] = float(d) ** (-n_max) * gmax
    return value, err, escaped


def green_array(f: Poly, z, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX):
    """Vectorised Green function: arrays ``(value, err, escaped)``.

    The orbit is followed until it passes the growth radius and d^-N log 2/(d-1)
    drops below ``tol``; then g_f(z) = d^-N (log|f^N z| + log|a_d|/(d-1)) up to
    that error, by telescoping.  Points whose orbit is still inside the growth
    radius after N steps get value 0 and the a-priori bound d^-N sup_{|w|=R} g_f
    as error, as soon as that bound is below ``tol`` (or N reaches ``n_max``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    inf = np.isinf(z)
    value = np.full(z.shape, math.inf)
    err = np.zeros(z.shape)
    escaped = np.ones(z.shape, dtype=bool)
    if np.any(~inf):
        v, e, s = _green_run(f, Orbit(f, z[~inf]), tol, n_max)
        value[~inf], err[~inf], escaped[~inf] = v, e, s
    return value, err, escaped


def green_from_log(f: Poly, logz, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX):
    """Green function at points too large for doubles, given log z."""
    return _green_run(f, Orbit(f, logz=logz), tol, n_max)


def green(f: Poly, z: complex, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX) -> GreenValue:
    v, e, s = green_array(f, np.array([z]), tol, n_max)
    return GreenValue(float(v[0]), float(e[0]), bool(s[0]))


def _disk_grid(radius: float, count: int) -> np.ndarray:
    side = max(int(math.sqrt(count * 4 / math.pi)), 8)
    xs = np.linspace(-radius, radius, side)
    X, Y = np.meshgrid(xs, xs)
    pts = (X + 1j * Y).ravel()
    pts = pts[np.abs(pts) <= radius]
    # the unit circle is where the z^d gap peaks; include it explicitly
    circle = np.exp(2j * math.pi * np.arange(side * 4) / (side * 4))
    return np.concatenate([pts, circle])


def green_gap_sup(f: Poly, samples: int, seed: int = 0) -> float:
    """Sampled estimate (a lower bound) of sup |-log[z,inf] - g_f(z)| on the sphere."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    pts = np.concatenate([fs_sample(seed, samples), _disk_grid(_growth_radius(f), samples)])
    g, _, _ = green_array(f, pts)
    gap = np.abs(0.5 * np.log1p(np.abs(pts) ** 2) - g)
    return float(np.max(gap))


def constant_Cf(f: Poly, samples: int = 20000, seed: int = 0) -> float:
    """The constant of the upper bound for log max{1,|(f^n)'|}/(d^n-1) - g_f.

    C_f = (d-1) sup|-log[z,inf] - g_f| + (d-1) max_{w critical} |log[w,inf]|
          + log d + |log|a_d||,
    with the supremum replaced by its sampled estimate (callers inflate).
    """
    from .roots import poly_roots

    d = f.degree
    crit = poly_roots(_derivative_double(f))
    log_w_inf = max(0.5 * math.log1p(abs(r.location) ** 2) for r in crit)
    gap = green_gap_sup(f, samples, seed)
    return ((d - 1) * gap + (d - 1) * log_w_inf + math.log(d)
            + abs(math.log(abs(complex(f.lead)))))


def _derivative_double(f: Poly) -> Poly:
    cs = f.as_complex()
    return Poly(tuple(k * cs[k] for k in range(1, len(cs))))
