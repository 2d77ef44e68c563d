"""Pointwise checks of the exact identities and inequalities behind the rates.

Each check is falsification-style: a bound counts as violated only when it
fails by more than the certified numerical error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import CriticalOrbitPoint
from .green import constant_Cf, fs_sample, green, green_array, green_from_log
from .poly import Poly, deriv_iterate_eval, derivative, log_deriv_iterate
from .roots import poly_roots
from .unicritical import UnicriticalFamily, param_upper_gap

__all__ = [
    "BoundReport",
    "critical_points",
    "check_buff",
    "check_upper",
    "check_telescope_identity",
    "check_param_upper",
]

IDENTITY_PREC = 96


@dataclass
class BoundReport:
    """Outcome of a pointwise bound check.

    ``worst_margin`` is the minimum of (bound - quantity) over checked points;
    ``details`` lists the violating points as (z, quantity, bound).
    """

    name: str
    checked: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    skipped: int = 0
    details: list = field(default_factory=list)

    def __post_init__(self):
        if self.violations > self.checked:
            raise ValueError("violations cannot exceed checked")

    def record(self, z, quantity, bound, err):
        """Fold in arrays of points; a violation is quantity > bound + err."""
        z, quantity, bound, err = (np.broadcast_to(np.asarray(v), np.shape(z)) for v in (z, quantity, bound, err))
        if z.size == 0:
            return
        margin = bound - quantity
        self.checked += int(z.size)
        self.worst_margin = min(self.worst_margin, float(np.min(margin)))
        bad = margin < -err
        self.violations += int(np.count_nonzero(bad))
        for zi, qi, bi in zip(z[bad], quantity[bad], bound[bad]):
            self.details.append((complex(zi), float(qi), float(bi)))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "checked": self.checked,
            "violations": self.violations,
            "skipped": self.skipped,
            "worst_margin": self.worst_margin,
            "details": [[z.real, z.imag, q, b] for z, q, b in self.details],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def violations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "quantity", "bound"])
        for z, q, b in self.details:
            w.writerow([repr(z.real), repr(z.imag), repr(q), repr(b)])
        return buf.getvalue()


def critical_points(f: Poly) -> list[tuple[complex, int]]:
    """Finite critical points with multiplicities (they sum to d - 1)."""
    roots = poly_roots(derivative(f))
    return [(complex(r.location), int(r.multiplicity)) for r in roots]


# ---------------------------------------------------------------------------
# derivative bound on the escaping side of the critical values


def check_buff(f: Poly, samples: int = 10_000, seed: int = 0) -> BoundReport:
    """|f'(z)| <= d^2 e^{(d-1) g_f(z)} wherever g_f(z) >= max_c g_f(c).

    Omega-samples are drawn until ``samples`` of them meet the hypothesis with
    certainty; points within the combined Green error of the threshold are
    skipped and counted.  When some critical point certainly escapes, the
    inequality must also be strict by more than the error.
    """
    d = f.degree
    crit = critical_points(f)
    gc = [green(f, c) for c, _ in crit]
    g_thr = max(v.value for v in gc)
    e_thr = max(v.err for v in gc)
    strict = any(v.escaped and v.value > v.err for v in gc)
    rep = BoundReport("buff")
    # draw until ``samples`` points satisfy the hypothesis (or the pool is large)
    pool = samples
    while True:
        z = fs_sample(seed, pool)
        g, err, _ = green_array(f, z)
        keep = g - g_thr > err + e_thr
        if np.count_nonzero(keep) >= samples or pool >= 64 * samples:
            break
        pool *= 2
    cut = np.flatnonzero(keep)[samples - 1] + 1 if np.count_nonzero(keep) >= samples else pool
    z, g, err, keep = z[:cut], g[:cut], err[:cut], keep[:cut]
    rep.skipped = int(np.count_nonzero(~keep & (np.abs(g - g_thr) <= err + e_thr)))
    z, g, err = z[keep], g[keep], err[keep]
    lhs = log_deriv_iterate(f, 1, z).real
    bound = 2.0 * math.log(d) + (d - 1) * g
    tol = (d - 1) * err + 1e-12 * np.maximum(1.0, np.abs(bound))
    # strictness turns "<=" into "<" by more than the error
    rep.record(z, lhs, bound, -tol if strict else tol)
    return rep


# ---------------------------------------------------------------------------
# upper bound on the normalised potential


def check_upper(f: Poly, n: int, samples: int = 10_000, seed: int = 0, C: float | None = None,
                inflate: float = 1.05) -> BoundReport:
    """log max{1, |(f^n)'|}/(d^n - 1) - g_f <= C n/(d^n - 1) at omega-samples."""
    if C is None:
        C = inflate * constant_Cf(f)
    m = f.degree**n - 1
    z = fs_sample(seed, samples)
    Lu = log_deriv_iterate(f, n, z).real
    g, err, _ = green_array(f, z)
    quantity = np.maximum(Lu, 0.0) / m - g
    rep = BoundReport(f"upper_n{n}")
    rep.record(z, quantity, C * n / m, err + 1e-12)
    return rep


def check_param_upper(fam: UnicriticalFamily, n: int, samples: int = 10_000, seed: int = 0) -> BoundReport:
    """log max{1, |(f_lam^n)'(lam)|}/(d^n - 1) - g(lam) <= n log(d^2)/(d^n - 1)."""
    d = fam.d
    m = d**n - 1
    lam = fs_sample(seed, samples)
    quantity, err = param_upper_gap(fam, n, lam)
    rep = BoundReport(f"param_upper_n{n}")
    rep.record(lam, quantity, n * math.log(d * d) / m, err + 1e-12)
    return rep


# ---------------------------------------------------------------------------
# the telescoped decomposition of log|(f^n)'|


def _log_chordal_mp(u, w):
    """log [u, w] in mpmath, w finite."""
    return mpmath.log(abs(u - w)) - 0.5 * mpmath.log1p(abs(u) ** 2) - 0.5 * mpmath.log1p(abs(w) ** 2)


def check_telescope_identity(f: Poly, n: int, z: complex, crit=None) -> float:
    """Absolute residual of the chordal decomposition of log|(f^n)'(z)|/(d^n-1) - g_f(z).

    The left side comes from the chain rule in log space and the Green
    function at z.  The right side runs the orbit in mpmath and adds, for
    each j < n, the chordal logs to the critical points, the chordal log to
    infinity, the Green function at f^j(z), and the constant term
    -sum_w m_w log[w, inf] + log d + log|a_d| once per step.
    """
    d = f.degree
    m = d**n - 1
    crit = critical_points(f) if crit is None else crit
    # left side
    lu = deriv_iterate_eval(f, n, complex(z))
    if lu.is_zero:
        raise CriticalOrbitPoint(f"(f^n)' vanishes at {z}")
    lhs = lu.log_mod / m - green(f, complex(z)).value
    # right side
    with mpmath.workprec(IDENTITY_PREC):
        coeffs = [mpmath.mpc(complex(c)) for c in f.as_complex()]
        ws = [(mpmath.mpc(w), k) for w, k in crit]
        const = -sum(k * (-0.5 * mpmath.log1p(abs(w) ** 2)) for w, k in ws) + mpmath.log(d) \
            + mpmath.log(abs(coeffs[-1]))
        u = mpmath.mpc(complex(z))
        crit_sum = mpmath.mpf(0)
        inf_sum = mpmath.mpf(0)
        green_sum = 0.0
        for _ in range(n):
            for w, k in ws:
                if u == w:
                    raise CriticalOrbitPoint(f"the orbit of {z} hits the critical point {complex(w)}")
                crit_sum += k * _log_chordal_mp(u, w)
            inf_sum += 0.5 * mpmath.log1p(abs(u) ** 2)
            green_sum += float(green_from_log(f, np.array([complex(mpmath.log(u))]))[0][0]) \
                if u != 0 else green(f, 0j).value
            u = mpmath.polyval(coeffs[::-1], u)
        rhs = (crit_sum + (d - 1) * (inf_sum - green_sum) + n * const) / m
        return abs(lhs - float(rhs))
