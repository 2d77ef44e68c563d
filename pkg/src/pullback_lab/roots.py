"""All roots of F_n = (f^n)' - a, by two independent strategies.

``expand_aberth`` expands F_n exactly in fixed point and runs Ehrlich-Aberth
simultaneous iteration.  Evaluation starts in double precision when the
coefficients allow it and moves to multiprecision (gmpy2) otherwise; every root
carries a running-error certificate, and precision is raised until each
non-clustered root is certified.

``implicit_newton`` never expands: it evaluates log (f^n)' and log (f^n)'' along
forward orbits, runs Newton on log F_n from a ring grid of starts, clusters the
limits, and fills in whatever is still missing by winding-number bisection of
rectangles.
"""

from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpc, mpq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import CapExceeded, ContourTooClose, IncompleteRootSet
from .poly import (
    DEFAULT_DEGREE_CAP,
    Poly,
    _fx_derivative,
    _fx_from_poly,
    abs_poly,
    default_expand_prec,
    escape_radius,
    exact_mpc,
    iterate_fixed,
    log_deriv_iterate,
    log_minus_const,
    wrap_arg,
    wrap_log,
)

STRATEGIES = ("expand_aberth", "implicit_newton")
LN2 = math.log(2.0)


@dataclass(frozen=True)
class SolverConfig:
    strategy: str = "expand_aberth"
    degree_cap: int = DEFAULT_DEGREE_CAP
    tol: float = 1e-12
    cluster_rel: float = 1e-7
    max_sweeps: int = 400
    max_prec: int = 1 << 15
    start_factor: int = 8
    max_newton_iter: int = 300
    topup_budget: int = 4000
    deflation_rounds: int = 12

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")


@dataclass(frozen=True)
class Root:
    location: complex
    multiplicity: int
    residual: float = 0.0


@dataclass
class RootSet:
    roots: list
    residual_max: float
    method: str
    flagged: bool = False
    precision: int = 53
    meta: dict = field(default_factory=dict)

    @property
    def total_multiplicity(self) -> int:
        return sum(r.multiplicity for r in self.roots)

    def locations(self, expand: bool = False) -> np.ndarray:
        if expand:
            return np.array([r.location for r in self.roots for _ in range(r.multiplicity)])
        return np.array([r.location for r in self.roots])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "multiplicity", "residual"])
        for r in self.roots:
            w.writerow([repr(r.location.real), repr(r.location.imag), r.multiplicity, repr(r.residual)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "residual_max": self.residual_max,
            "flagged": self.flagged,
            "precision": self.precision,
            "roots": [[r.location.real, r.location.imag, r.multiplicity, r.residual] for r in self.roots],
        }, sort_keys=True)


# ---------------------------------------------------------------------------
# targets: the polynomial whose roots are wanted, seen through both routes


class Target:
    """G(z) - a where G is a polynomial known both implicitly and by expansion.

    Subclasses provide ``m`` (degree of G), ``n`` (iteration depth, used for
    precision schedules), ``a``, and the methods below.
    """

    m: int
    n: int
    a: complex

    def log_G(self, z):
        """Complex logs of G(z) and G'(z) (real part -inf at zeros)."""
        raise NotImplementedError

    def fixed_coeffs(self, prec: int):
        """Fixed-point coefficients (re, im) of G scaled by 2**prec."""
        raise NotImplementedError

    def log_majorant(self, r):
        """Upper bound for log sum_k |g_k| r^k at radii r."""
        raise NotImplementedError

    def search_radius(self) -> float:
        raise NotImplementedError

    # derived helpers ------------------------------------------------------

    def log_F(self, z):
        LG, LdG = self.log_G(z)
        return log_minus_const(LG, self.a), LG, LdG

    def newton_step(self, z):
        """Newton correction and log|F| at z.

        The correction is taken on log G - log a when a != 0 (well scaled far
        from the roots, where G is huge), and on G itself when a = 0.
        """
        LG, LdG = self.log_G(z)
        LF = log_minus_const(LG, self.a)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            if self.a != 0:
                La = complex(math.log(abs(self.a)), cmath.phase(self.a))
                step = wrap_log(LG - La) * np.exp(LG - LdG)
            else:
                step = np.exp(LG - LdG)
            plain = np.exp(LF - LdG)
        return step, plain, LF.real

    def log_abs_F(self, z):
        LG, _ = self.log_G(z)
        return log_minus_const(LG, self.a).real


class DynamicTarget(Target):
    """G = (f^n)' for a polynomial map f."""

    def __init__(self, f: Poly, n: int, a: complex):
        self.f = f
        self.n = n
        self.a = complex(a)
        self.m = f.degree**n - 1
        self._majorant_map = abs_poly(f)

    def log_G(self, z):
        return log_deriv_iterate(self.f, self.n, np.atleast_1d(np.asarray(z, dtype=complex)), second=True)

    def fixed_coeffs(self, prec: int):
        return _fx_derivative(iterate_fixed(self.f, self.n, prec, cap=1 << 62))

    def log_majorant(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float)).astype(complex)
        return log_deriv_iterate(self._majorant_map, self.n, r).real

    def search_radius(self) -> float:
        return 2.0 * escape_radius(self.f)


class ExplicitTarget(Target):
    """A polynomial given by its (double) coefficients, minus zero."""

    def __init__(self, p: Poly):
        self.p = p
        self.coeffs = p.as_complex()
        self.dcoeffs = np.array([k * self.coeffs[k] for k in range(1, len(self.coeffs))]) \
            if p.degree > 0 else np.zeros(1, dtype=complex)
        self.m = p.degree
        self.n = 1
        self.a = 0j

    def log_G(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        with np.errstate(divide="ignore"):
            return (np.log(np.polyval(self.coeffs[::-1], z)),
                    np.log(np.polyval(self.dcoeffs[::-1], z)))

    def fixed_coeffs(self, prec: int):
        return _fx_from_poly(self.p, prec)

    def log_majorant(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        with np.errstate(divide="ignore"):
            return np.log(np.polyval(np.abs(self.coeffs)[::-1], r))

    def search_radius(self) -> float:
        c = np.abs(self.coeffs)
        # Cauchy bound
        return 2.0 * (1.0 + float(np.max(c[:-1]) / c[-1])) if self.m > 0 else 1.0


# ---------------------------------------------------------------------------
# clustering


def cluster_groups(z: np.ndarray, rel: float = 1e-7) -> list[list[int]]:
    """Group approximations whose mutual distances are below ``rel`` times the
    distance to the next point outside the group (local root spacing)."""
    z = np.asarray(z, dtype=complex)
    N = len(z)
    if N <= 1:
        return [[i] for i in range(N)]
    pts = np.column_stack([z.real, z.imag])
    k = min(N, 33)
    dist, nbr = cKDTree(pts).query(pts, k=k)
    ds = dist[:, 1:]
    # distance to the next neighbour out; the last one is compared with the scale of z
    nxt = np.concatenate([ds[:, 1:], np.maximum(1.0, np.abs(z))[:, None]], axis=1)
    cond = ds <= rel * nxt
    has = cond.any(axis=1)
    first = np.argmax(cond, axis=1)
    cols = np.arange(k - 1)
    mask = has[:, None] & (cols[None, :] <= first[:, None])
    rows = np.broadcast_to(np.arange(N)[:, None], mask.shape)[mask]
    labels = _components(N, rows, nbr[:, 1:][mask])
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _components(N: int, rows, cols) -> np.ndarray:
    """Connected-component labels of the graph on N nodes with the given edges."""
    graph = coo_matrix((np.ones(len(rows)), (np.asarray(rows), np.asarray(cols))), shape=(N, N))
    return connected_components(graph, directed=False)[1]


def _spacing(z: np.ndarray) -> np.ndarray:
    if len(z) < 2:
        return np.ones(len(z))
    pts = np.column_stack([z.real, z.imag])
    d, _ = cKDTree(pts).query(pts, k=2)
    return d[:, 1]


# ---------------------------------------------------------------------------
# Aberth on expanded coefficients


def _log_abs_fixed(re: int, im: int, prec: int) -> float:
    s = re * re + im * im
    if s == 0:
        return -math.inf
    return 0.5 * math.log(s) - prec * LN2


def _newton_polygon_starts(logc: list[float], offset: float = 0.7) -> np.ndarray:
    """Initial points on circles whose radii come from the Newton polygon."""
    m = len(logc) - 1
    pts = [(k, v) for k, v in enumerate(logc) if v > -math.inf]
    hull: list[tuple[int, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    out = []
    for (k0, v0), (k1, v1) in zip(hull[:-1], hull[1:]):
        cnt = k1 - k0
        radius = math.exp((v0 - v1) / cnt)
        j = np.arange(cnt)
        ang = 2 * math.pi * j / cnt + 2 * math.pi * k0 / m + offset
        out.append(radius * np.exp(1j * ang))
    return np.concatenate(out)


class _Evaluator:
    """Horner evaluation of p and p' with a running-error bound, at one precision."""

    def __init__(self, target: Target, coeffs_fx, frac_bits: int, prec: int, a: complex):
        self.target = target
        self.prec = prec
        self.frac_bits = frac_bits
        self.m = len(coeffs_fx[0]) - 1
        self.a = a
        re, im = coeffs_fx
        den = 1 << frac_bits
        if prec <= 53:
            c = np.array([complex(float(mpq(x, den)), float(mpq(y, den))) for x, y in zip(re, im)])
            c[0] -= a
            self.c = c
            self.abs_c = np.abs(c)
            self.mp = False
        else:
            cs = [exact_mpc(x, y, frac_bits) for x, y in zip(re, im)]
            with gmpy2.context(gmpy2.get_context(), precision=max(prec, 64) + 64):
                cs[0] = cs[0] - mpc(a)
            self.c = cs
            self.mp = True
        self.gamma_log = math.log(4.0 * (self.m + 2)) - prec * LN2

    def __call__(self, z: np.ndarray):
        """Return (newton ratio p/p', certificate E/|p'|) for each point."""
        if not self.mp:
            c = self.c
            acc = np.full(z.shape, c[-1])
            dacc = np.zeros(z.shape, dtype=complex)
            absacc = np.full(z.shape, self.abs_c[-1])
            az = np.abs(z)
            with np.errstate(over="ignore", invalid="ignore"):
                for k in range(self.m - 1, -1, -1):
                    dacc = dacc * z + acc
                    acc = acc * z + c[k]
                    absacc = absacc * az + self.abs_c[k]
                ratio = acc / dacc
                cert = math.exp(self.gamma_log) * absacc / np.abs(dacc)
            return ratio, cert
        K = len(z)
        with gmpy2.context(gmpy2.get_context(), precision=self.prec):
            zz = np.array([mpc(complex(v)) for v in z], dtype=object)
            acc = np.empty(K, dtype=object)
            acc[:] = [self.c[-1]] * K
            dacc = np.empty(K, dtype=object)
            dacc[:] = [mpc(0)] * K
            for ck in reversed(self.c[:-1]):
                dacc = dacc * zz + acc
                acc = acc * zz + ck
            ratio = np.empty(K, dtype=complex)
            logdp = np.empty(K)
            for i in range(K):
                dp = dacc[i]
                if dp == 0:
                    ratio[i] = complex(math.inf, 0)
                    logdp[i] = -math.inf
                else:
                    ratio[i] = complex(acc[i] / dp)
                    logdp[i] = float(gmpy2.log(abs(dp)))
        az = np.abs(z)
        logA = np.logaddexp(self.target.log_majorant(az), math.log(abs(self.a)) if self.a != 0 else -math.inf)
        # coefficient rounding from the fixed-point expansion
        logcoef = (math.log((self.m + 1) * max(self.target.n, 1)) - self.frac_bits * LN2
                   + self.m * np.log(np.maximum(az, 1.0)))
        with np.errstate(over="ignore"):
            cert = np.exp(np.logaddexp(self.gamma_log + logA, logcoef) - logdp)
        return ratio, cert


def _aberth_sum(z: np.ndarray, act: np.ndarray) -> np.ndarray:
    out = np.empty(len(act), dtype=complex)
    chunk = max(1, 4_000_000 // max(len(z), 1))
    for s in range(0, len(act), chunk):
        idx = act[s:s + chunk]
        diff = z[idx, None] - z[None, :]
        diff[np.arange(len(idx)), idx] = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            out[s:s + chunk] = np.sum(1.0 / diff, axis=1)
    return out


def _aberth_sweeps(ev: _Evaluator, z: np.ndarray, tol: float, max_sweeps: int, active=None):
    """Jacobi-style Aberth sweeps over the ``active`` roots (all by default).

    Returns (z, certificate, converged mask)."""
    m = len(z)
    active = np.ones(m, dtype=bool) if active is None else active.copy()
    cert = np.full(m, np.inf)
    stall = np.zeros(m, dtype=int)
    last = np.full(m, np.inf)
    for _ in range(max_sweeps):
        act = np.nonzero(active)[0]
        if act.size == 0:
            break
        ratio, c = ev(z[act])
        cert[act] = c
        S = _aberth_sum(z, act)
        with np.errstate(over="ignore", invalid="ignore"):
            step = ratio / (1.0 - ratio * S)
        bad = ~np.isfinite(step)
        if np.any(bad):
            # exact critical point of p or coincident approximations: nudge
            step[bad] = 1e-3 * np.exp(1j * (act[bad] + 0.5)) * np.maximum(1.0, np.abs(z[act[bad]]))
        z[act] = z[act] - step
        size = np.abs(step)
        scale = np.maximum(1.0, np.abs(z[act]))
        done = (size <= tol * scale) | (size <= 2.0 * c)
        stall[act] = np.where(size >= 0.5 * last[act], stall[act] + 1, 0)
        last[act] = size
        done |= (stall[act] >= 8) & (size <= 1e-6 * scale)
        active[act[done]] = False
    return z, cert, ~active


def _solve_aberth(target: Target, cfg: SolverConfig):
    m = target.m
    n = target.n
    frac = default_expand_prec(n)
    re, im = target.fixed_coeffs(frac)
    # exact zero roots are deflated before iterating
    a = target.a
    logc = [_log_abs_fixed(x, y, frac) for x, y in zip(re, im)]
    if a != 0:
        logc[0] = _log_abs_fixed(*_sub_const_fixed(re[0], im[0], a, frac), frac)
    k0 = next(k for k, v in enumerate(logc) if v > -math.inf)
    z = _newton_polygon_starts(logc[k0:]) if m - k0 > 0 else np.zeros(0, dtype=complex)
    r_max = float(np.max(np.abs(z))) * 1.1 if z.size else 1.0
    max_logc = max(v for v in logc if v > -math.inf)
    # double precision first whenever the coefficients fit; the certificate
    # decides which roots need more bits
    prec = 53 if max_logc + (m - k0) * math.log(max(r_max, 1.0)) < 600 else 64 + 8 * n
    active = np.ones(len(z), dtype=bool)
    cert = np.full(len(z), np.inf)
    ratio = np.zeros(len(z), dtype=complex)
    escalations = 0
    while True:
        frac_bits = prec + int(math.ceil(max(m - k0, 1) * max(math.log2(r_max), 0.0))) + 32
        if frac_bits > frac:
            frac = frac_bits
            re, im = target.fixed_coeffs(frac)
        ev = _Evaluator(target, (re[k0:], im[k0:]), frac, prec, a if k0 == 0 else 0j)
        z, _, _ = _aberth_sweeps(ev, z, cfg.tol, cfg.max_sweeps, active)
        idx = np.nonzero(active)[0]
        if idx.size:
            ratio[idx], cert[idx] = ev(z[idx])
        scale = np.maximum(1.0, np.abs(z))
        ok = (cert <= cfg.tol * scale) & (np.abs(ratio) <= cfg.tol * scale)
        groups = cluster_groups(z, cfg.cluster_rel)
        in_cluster = np.zeros(len(z), dtype=bool)
        for g in groups:
            if len(g) > 1:
                in_cluster[g] = True
        pending = ~ok & ~in_cluster
        if not np.any(pending):
            break
        if prec >= cfg.max_prec or escalations >= 10:
            raise IncompleteRootSet(
                f"{int(pending.sum())} roots uncertified at {prec} bits; raise max_prec")
        worst = float(np.max(cert[pending] / (cfg.tol * scale[pending])))
        need = int(math.ceil(math.log2(max(worst, 2.0)))) + 16
        prec = min(cfg.max_prec, max(prec + need, 64 + 8 * n))
        active = ~ok
        escalations += 1
    roots = []
    if k0:
        roots.append((0j, k0))
    for g in groups:
        roots.append((complex(np.mean(z[g])), len(g)))
    return roots, prec


def _sub_const_fixed(re0: int, im0: int, a: complex, frac: int):
    ar = a.real.as_integer_ratio()
    ai = a.imag.as_integer_ratio()
    return re0 - (ar[0] << frac) // ar[1], im0 - (ai[0] << frac) // ai[1]


# ---------------------------------------------------------------------------
# implicit Newton with winding-number top-up


def _ring_grid(radius: float, count: int, rings: int = 16) -> np.ndarray:
    radii = radius * (np.arange(rings) + 0.5) / rings
    per = np.maximum(8, np.ceil(count * radii / radii.sum()).astype(int))
    out = []
    for i, (r, k) in enumerate(zip(radii, per)):
        ang = 2 * math.pi * np.arange(k) / k + 2.399963 * i
        out.append(r * np.exp(1j * ang))
    return np.concatenate(out)


def _deflation(z: np.ndarray, known: np.ndarray | None, weights: np.ndarray | None = None):
    """Sums of k/(z - r) and of k*log|z - r| over known roots r of multiplicity k."""
    if known is None or known.size == 0:
        return np.zeros(z.shape, dtype=complex), np.zeros(z.shape)
    w = np.ones(known.size) if weights is None else np.asarray(weights, dtype=float)
    S = np.empty(z.shape, dtype=complex)
    L = np.empty(z.shape)
    chunk = max(1, 2_000_000 // known.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(0, z.size, chunk):
            diff = z[s:s + chunk, None] - known[None, :]
            S[s:s + chunk] = (1.0 / diff) @ w
            L[s:s + chunk] = np.log(np.abs(diff)) @ w
    return S, L


def _newton_batch(target: Target, z0: np.ndarray, max_iter: int, radius: float, known=None, weights=None):
    """Newton with backtracking on |F| from many starts.

    Returns the converged limits and a mask of those that converged
    quadratically to a nonzero-derivative point, i.e. to a simple root.  When
    successive corrections shrink by a steady ratio q (linear convergence at a
    root of multiplicity k ~ 1/(1-q)) the correction is multiplied by that k.

    log|F| is harmonic off the roots, so a monotone descent can only stall at
    a root (or, non-generically, a critical point of F).  With ``known`` roots
    the iteration runs on F / prod(z - r) instead (implicit deflation), which
    pushes the iterates away from roots already found.
    """
    deflate = known is not None and known.size > 0
    z = np.array(z0, dtype=complex)
    active = np.ones(len(z), dtype=bool)
    conv = np.zeros(len(z), dtype=bool)
    precise = np.zeros(len(z), dtype=bool)
    cap = radius / 4.0
    last = np.full(len(z), np.inf)
    prev_base = np.full(len(z), np.inf)
    prev_q = np.zeros(len(z))
    kmul = np.ones(len(z))
    for _ in range(max_iter):
        act = np.nonzero(active)[0]
        if act.size == 0:
            break
        step, plain, lf0 = target.newton_step(z[act])
        if deflate:
            S, Lk = _deflation(z[act], known, weights)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                plain = 1.0 / (1.0 / plain - S)
            step = plain.copy()
            lf0 = lf0 - Lk
        hit = np.isneginf(lf0)
        if np.any(hit):
            # landed exactly on a root; its multiplicity is settled by winding later
            conv[act[hit]] = True
            active[act[hit]] = False
            keep = ~hit
            act, step, plain, lf0 = act[keep], step[keep], plain[keep], lf0[keep]
            if act.size == 0:
                continue
        use_plain = ~np.isfinite(step)
        step[use_plain] = plain[use_plain]
        bad = ~np.isfinite(step)
        step[bad] = 1e-3 * radius * np.exp(1j * act[bad])
        base = np.abs(step)
        with np.errstate(invalid="ignore"):
            q = base / prev_base[act]
        steady = (kmul[act] == 1) & (q > 0.45) & (q < 0.97) & (np.abs(q - prev_q[act]) < 0.02)
        kmul[act[steady]] = np.rint(1.0 / (1.0 - q[steady]))
        prev_q[act] = q
        prev_base[act] = base
        step = step * kmul[act]
        size = np.abs(step)
        step = step * np.minimum(1.0, cap / np.maximum(size, 1e-300))
        scale = np.maximum(1.0, np.abs(z[act]))
        t = np.ones(act.size)
        todo = np.arange(act.size)
        tried_plain = np.zeros(act.size, dtype=bool)
        for _ls in range(40):
            cand = z[act[todo]] - t[todo] * step[todo]
            lf = target.log_abs_F(cand)
            if deflate:
                lf = lf - _deflation(cand, known, weights)[1]
            ok = (lf <= lf0[todo] + np.log1p(-0.25 * t[todo])) | (t[todo] * size[todo] <= 1e-12 * scale[todo])
            z[act[todo[ok]]] = cand[ok]
            todo = todo[~ok]
            if todo.size == 0:
                break
            # the log-space direction may not descend; retry once with plain Newton
            swap = ~tried_plain[todo] & (t[todo] < 1e-3)
            if np.any(swap):
                sw = todo[swap]
                step[sw] = plain[sw] * np.minimum(1.0, cap / np.maximum(np.abs(plain[sw]), 1e-300))
                size[sw] = np.abs(step[sw])
                t[sw] = 1.0
                tried_plain[sw] = True
            t[todo[~swap]] *= 0.5
        taken = t * size
        # quadratic convergence (a last step far below the previous one) marks a simple root
        tiny = taken <= 4e-15 * scale
        done = tiny & (taken <= 1e-2 * last[act]) & (kmul[act] == 1) & np.isfinite(lf0)
        exact = tiny & ~done & ((lf0 == -np.inf) | (kmul[act] > 1))
        stalled = (taken >= 0.9 * last[act]) & (taken <= 1e-8 * scale)
        last[act] = taken
        lost = np.abs(z[act]) > 4.0 * radius
        conv[act[done | stalled | exact]] = True
        precise[act[done]] = True
        active[act[done | stalled | exact | lost]] = False
    # slow linear convergence at multiple roots: tiny steps count as converged
    act = np.nonzero(active)[0]
    if act.size:
        conv[act[last[act] <= 1e-6 * np.maximum(1.0, np.abs(z[act]))]] = True
    return z[conv], precise[conv]


def _dedupe(z: np.ndarray, existing: np.ndarray | None = None, rel: float = 1e-9):
    """Merge points closer than rel*max(1,|z|); drop those near ``existing``."""
    if z.size == 0:
        return z
    order = np.lexsort((z.imag, z.real))
    z = z[order]
    pts = np.column_stack([z.real, z.imag])
    tree = cKDTree(pts)
    tol = rel * max(1.0, float(np.max(np.abs(z))))
    pairs = tree.query_pairs(tol, output_type="ndarray")
    labels = _components(len(z), pairs[:, 0], pairs[:, 1])
    # the first index of each component is its representative, in sorted order
    reps = np.sort(np.unique(labels, return_index=True)[1])
    out = z[reps]
    if existing is not None and existing.size:
        d, _ = cKDTree(np.column_stack([existing.real, existing.imag])).query(
            np.column_stack([out.real, out.imag]), k=1)
        out = out[d > tol]
    return out


def _circle_windings(target: Target, centers: np.ndarray, radii: np.ndarray,
                     samples: int = 16, max_samples: int = 1 << 14,
                     allow_unresolved: bool = False) -> np.ndarray:
    """Winding numbers of F around small circles, refining each circle until
    the sampled argument increments agree with the integral of F'/F.

    With ``allow_unresolved`` circles that never settle get -1 instead of
    raising ContourTooClose."""
    out = np.zeros(len(centers), dtype=int)
    todo = np.arange(len(centers))
    k = samples
    while todo.size:
        t = np.exp(2j * math.pi * np.arange(k + 1) / k)
        z = centers[todo, None] + radii[todo, None] * t[None, :]
        LF, _, LdG = target.log_F(z.ravel())
        LF = LF.reshape(z.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = np.exp(LdG.reshape(z.shape) - LF)
            pred = np.imag(0.5 * (ratio[:, :-1] + ratio[:, 1:]) * np.diff(z, axis=1))
        dtheta = wrap_arg(np.diff(LF.imag, axis=1))
        good = (np.all(np.abs(dtheta) < math.pi / 3, axis=1)
                & np.all(np.abs(pred - dtheta) < math.pi / 6, axis=1)
                & ~np.any(np.isneginf(LF.real), axis=1))
        out[todo[good]] = np.rint(dtheta[good].sum(axis=1) / (2 * math.pi)).astype(int)
        todo = todo[~good]
        k *= 2
        if k > max_samples and todo.size:
            if not allow_unresolved:
                raise ContourTooClose("could not resolve winding around a cluster")
            out[todo] = -1
            break
    return out


def _contour_winding(target: Target, path, n0: int, max_pts: int = 4_000_000, close_rel: float = 1e-10):
    """Winding number of F along the closed path t -> path(t), t in [0, 1]."""
    t = np.linspace(0.0, 1.0, n0 + 1)
    z = path(t)
    LF, LG, LdG = target.log_F(z)
    scale = max(1.0, float(np.max(np.abs(z))))
    while True:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            ratio = np.exp(LdG - LF)  # F'/F
            dist = np.exp(LF.real - LdG.real)  # |F/F'|, roughly the distance to a root
        if np.any(np.isneginf(LF.real)) or np.any(dist < 10 * close_rel * scale):
            raise ContourTooClose("a root lies on or very near the contour")
        dtheta = wrap_arg(np.diff(LF.imag))
        dz = np.diff(z)
        with np.errstate(over="ignore", invalid="ignore"):
            pred = np.imag(0.5 * (ratio[:-1] + ratio[1:]) * dz)
        bad = (np.abs(dtheta) > math.pi / 3) | ~np.isfinite(pred) | (np.abs(pred - dtheta) > math.pi / 6)
        if not np.any(bad):
            return int(round(float(np.sum(dtheta)) / (2 * math.pi)))
        if len(t) > max_pts:
            raise ContourTooClose("contour sampling budget exhausted")
        idx = np.nonzero(bad)[0]
        tm = 0.5 * (t[idx] + t[idx + 1])
        zm = path(tm)
        LFm, LGm, LdGm = target.log_F(zm)
        t = np.insert(t, idx + 1, tm)
        z = np.insert(z, idx + 1, zm)
        LF = np.insert(LF, idx + 1, LFm)
        LdG = np.insert(LdG, idx + 1, LdGm)


def _circle_path(center: complex, radius: float):
    return lambda t: center + radius * np.exp(2j * math.pi * np.asarray(t))


def _rect_path(x0: float, x1: float, y0: float, y1: float):
    corners = np.array([complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1), complex(x0, y0)])

    def path(t):
        t = np.asarray(t) * 4.0
        i = np.minimum(np.floor(t).astype(int), 3)
        s = t - i
        return corners[i] + s * (corners[i + 1] - corners[i])
    return path


def _winding_samples(target: Target, radius: float) -> int:
    return 8 * target.m + 64


def _rect_winding(target: Target, rect, n0: int) -> tuple[int, tuple]:
    """Winding count of a rectangle, nudging the sides off nearby roots."""
    x0, x1, y0, y1 = rect
    w = x1 - x0
    for attempt in range(6):
        try:
            return _contour_winding(target, _rect_path(x0, x1, y0, y1), n0), (x0, x1, y0, y1)
        except ContourTooClose:
            eps = w * 1e-3 * (attempt + 1) * 0.6180339887
            x0, x1, y0, y1 = x0 - eps, x1 + eps * 0.7, y0 - eps * 0.3, y1 + eps * 0.9
    raise ContourTooClose("rectangle sides keep passing through roots")


def _inside(z: np.ndarray, rect) -> np.ndarray:
    x0, x1, y0, y1 = rect
    return (z.real > x0) & (z.real < x1) & (z.imag > y0) & (z.imag < y1)


def _merge_hits(target: Target, precise: np.ndarray, noisy: np.ndarray, radius: float,
                existing: np.ndarray | None = None):
    """Distinct roots with multiplicities from Newton limits.

    Full-precision limits are simple roots.  The rest (slow convergence at
    multiple roots, limited by rounding to roughly eps**(1/k)) are grouped by
    a relative gap of 1e-2 and their multiplicity read off a winding number.
    """
    existing = np.zeros(0, dtype=complex) if existing is None else existing
    known = np.concatenate([existing, precise])
    noisy = _dedupe(noisy, known, rel=1e-7)
    if noisy.size == 0:
        return precise, np.ones(precise.size, dtype=int)
    # clusters that swallow an already known root belong to that root
    pool = np.concatenate([known, noisy])
    groups = [[i - known.size for i in g] for g in cluster_groups(pool, 1e-2) if min(g) >= known.size]
    if not groups:
        return precise, np.ones(precise.size, dtype=int)
    centers = np.array([np.mean(noisy[g]) for g in groups])
    diam = np.array([np.max(np.abs(noisy[g] - np.mean(noisy[g]))) for g in groups])
    allpts = np.concatenate([existing, precise, centers])
    skip = existing.size + precise.size
    gap = _spacing(allpts)[skip:] if allpts.size > 1 else np.full(centers.size, radius)
    rho = np.clip(np.sqrt(diam * gap), 1e-3 * gap, 0.25 * gap)
    rho = np.maximum(rho, 2.0 * diam)
    mult = np.full(centers.size, -1)
    todo = np.arange(centers.size)
    for _ in range(4):
        mult[todo] = _circle_windings(target, centers[todo], rho[todo], allow_unresolved=True)
        todo = todo[mult[todo] < 0]
        if todo.size == 0:
            break
        # rounding noise near the root reached the circle: widen it
        rho[todo] = np.minimum(4.0 * rho[todo], 0.25 * gap[todo])
    if todo.size:
        raise ContourTooClose("could not resolve winding around a cluster")
    keep = mult > 0
    return (np.concatenate([precise, centers[keep]]),
            np.concatenate([np.ones(precise.size, dtype=int), mult[keep]]))


def _solve_implicit(target: Target, cfg: SolverConfig):
    m = target.m
    radius = target.search_radius()
    starts = _ring_grid(radius, max(4, cfg.start_factor) * m)
    hits, fine = _newton_batch(target, starts, cfg.max_newton_iter, radius)
    found, mult = _merge_hits(target, _dedupe(hits[fine]), hits[~fine], radius)
    # restart from the duplicate hits with everything found so far deflated
    for _ in range(cfg.deflation_rounds):
        if mult.sum() >= m:
            break
        spacing = _spacing(found) if found.size > 1 else np.ones(max(found.size, 1))
        nudge = 0.25 * np.median(spacing) * np.exp(2j * math.pi * 0.6180339887 * np.arange(hits.size))
        hits, fine = _newton_batch(target, hits + nudge, cfg.max_newton_iter, radius, known=found, weights=mult)
        new, nm = _merge_hits(target, _dedupe(hits[fine], found), hits[~fine], radius, existing=found)
        if new.size == 0:
            break
        found = np.concatenate([found, new])
        mult = np.concatenate([mult, nm])
    if mult.sum() < m:
        found, mult = _topup(target, cfg, found, mult, radius)
    if mult.sum() != m:
        raise IncompleteRootSet(f"implicit strategy accounted for {int(mult.sum())} of {m} roots")
    return list(zip((complex(v) for v in found), (int(k) for k in mult)))


def _topup(target: Target, cfg: SolverConfig, found, mult, radius: float):
    """Bisect rectangles whose winding count exceeds the roots already found,
    running deflated Newton inside each deficient one."""
    side = radius * 1.0137
    stack = [(-side, side * 1.0021, -side * 0.9987, side * 1.0043)]
    n_total = _winding_samples(target, radius)
    budget = cfg.topup_budget
    while stack and budget > 0 and mult.sum() < target.m:
        budget -= 1
        rect = stack.pop()
        width = rect[1] - rect[0]
        count, rect = _rect_winding(target, rect, max(64, int(n_total * width / (2 * radius))))
        have = int(mult[_inside(found, rect)].sum()) if found.size else 0
        if count <= have:
            continue
        gx = np.linspace(rect[0], rect[1], 10)[1:-1]
        gy = np.linspace(rect[2], rect[3], 10)[1:-1]
        starts = (gx[None, :] + 1j * gy[:, None]).ravel()
        hits, fine = _newton_batch(target, starts, cfg.max_newton_iter, radius, known=found, weights=mult)
        precise = _dedupe(hits[fine], found)
        new, nm = _merge_hits(target, precise, hits[~fine], radius, existing=found)
        if new.size:
            found = np.concatenate([found, new])
            mult = np.concatenate([mult, nm])
            have = int(mult[_inside(found, rect)].sum())
        if count > have:
            xm = 0.5 * (rect[0] + rect[1]) + width * 0.0123
            ym = 0.5 * (rect[2] + rect[3]) - (rect[3] - rect[2]) * 0.0079
            stack.extend([
                (rect[0], xm, rect[2], ym), (xm, rect[1], rect[2], ym),
                (rect[0], xm, ym, rect[3]), (xm, rect[1], ym, rect[3]),
            ])
    return found, mult


# ---------------------------------------------------------------------------
# public entry points


def _residuals(target: Target, roots: list[tuple[complex, int]]):
    z = np.array([r for r, _ in roots], dtype=complex)
    if z.size == 0:
        return np.zeros(0)
    LF, _, LdG = target.log_F(z)
    spacing = _spacing(z) if z.size > 1 else np.ones(1)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        Fabs = np.exp(LF.real)
        dF = np.exp(LdG.real)
        res = Fabs / (1.0 + dF * spacing)
    return np.nan_to_num(res, nan=0.0)


def solve_target(target: Target, cfg: SolverConfig | None = None) -> RootSet:
    cfg = cfg or SolverConfig()
    if cmath.isinf(target.a) or cmath.isnan(target.a):
        raise ValueError("a must be a finite complex number")
    prec = 53
    if cfg.strategy == "expand_aberth":
        if target.m > cfg.degree_cap:
            raise CapExceeded(f"degree {target.m} exceeds cap {cfg.degree_cap}")
        roots, prec = _solve_aberth(target, cfg)
    else:
        roots = _solve_implicit(target, cfg)
    roots.sort(key=lambda r: (round(r[0].real, 12), round(r[0].imag, 12)))
    res = _residuals(target, roots)
    out = [Root(z, k, float(r)) for (z, k), r in zip(roots, res)]
    return RootSet(out, float(np.max(res)) if res.size else 0.0, cfg.strategy,
                   flagged=(target.a == 0), precision=prec)


def solve_pullback(f: Poly, n: int, a: complex, cfg: SolverConfig | None = None) -> RootSet:
    """Roots of (f^n)'(z) - a with multiplicities (the support of ((f^n)')^* delta_a)."""
    a = complex(a)
    if cmath.isinf(a):
        raise ValueError("a = infinity is excluded: the pullback is the Dirac mass at infinity")
    return solve_target(DynamicTarget(f, n, a), cfg)


def poly_roots(p: Poly, cfg: SolverConfig | None = None) -> list[Root]:
    """Roots of an explicit polynomial with multiplicities (expanded Aberth)."""
    if p.degree == 0:
        return []
    cfg = cfg or SolverConfig()
    if cfg.strategy != "expand_aberth":
        cfg = SolverConfig(**{**cfg.__dict__, "strategy": "expand_aberth"})
    return solve_target(ExplicitTarget(p), cfg).roots


def count_roots_in_disk(f: Poly, n: int, a: complex, center: complex, radius: float) -> int:
    """Number of roots of (f^n)' - a inside the disk, by the argument principle."""
    target = DynamicTarget(f, n, complex(a))
    return count_target_in_disk(target, center, radius)


def count_target_in_disk(target: Target, center: complex, radius: float) -> int:
    return _contour_winding(target, _circle_path(complex(center), float(radius)), 8 * target.m + 64)
