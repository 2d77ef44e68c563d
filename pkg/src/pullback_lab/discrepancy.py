"""How far a measure is from the equilibrium measure, and how fast that shrinks.

Two routes are measured.  The weak route integrates a fixed bank of smooth
test functions against both measures.  The potential route compares
log|(f^n)' - a|/(d^n - 1) with the Green function g_f in L^1 of the
Fubini-Study area, by Monte Carlo; this is what controls the weak gap, since
for a C^2 test function phi

    |int phi d(nu_n - mu_f)| <= sup|dd^c phi / omega| * ||potential gap||_1 .
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateSeries
from .green import chordal, fs_sample, green_array
from .measures import WeightedMeasure
from .poly import Poly, log_deriv_iterate, log_half_one_plus_sq, log_minus_const

__all__ = [
    "Estimate",
    "TestFunction",
    "TestFunctionBank",
    "integrate",
    "weak_gap",
    "weak_gap_from_potential",
    "potential_weak_gap",
    "potential_terms",
    "potential_discrepancy",
    "proximity",
    "fit_rate",
    "DiscrepancyReport",
    "REPORT_COLUMNS",
]

BATCH = 1 << 14


class Estimate(float):
    """A Monte Carlo mean that also carries its standard error."""

    stderr: float

    def __new__(cls, value: float, stderr: float, samples: int = 0):
        obj = super().__new__(cls, value)
        obj.stderr = float(stderr)
        obj.samples = int(samples)
        return obj

    def __repr__(self):
        return f"Estimate({float(self)!r}, stderr={self.stderr!r})"


def _estimate(values: np.ndarray) -> Estimate:
    n = values.size
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return Estimate(mean, math.sqrt(var / n), n)


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """A test function with its Laplacian density ``dd`` = dd^c phi / omega."""

    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    c2_bound: float
    dd: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=complex))

    def density(self, z):
        return self.dd(np.asarray(z, dtype=complex))


def _embed(z: np.ndarray) -> np.ndarray:
    """Unit-sphere coordinates (x1, x2, x3) of z, infinity at the north pole."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape + (3,))
    fin = ~np.isinf(z)
    zf = z[fin]
    s = 1.0 + np.abs(zf) ** 2
    out[fin] = np.stack([2.0 * zf.real / s, 2.0 * zf.imag / s, (np.abs(zf) ** 2 - 1.0) / s], axis=-1)
    out[~fin] = (0.0, 0.0, 1.0)
    return out


def _member(name, pair, c2_bound=2.0):
    fn, dd = pair
    return TestFunction(name, fn, c2_bound, dd)


def _chordal_sq(w0: complex):
    y = _embed(np.array([w0]))[0]
    return (lambda z: chordal(z, w0) ** 2), (lambda z: 2.0 * (_embed(z) @ y))


def _sphere_coord(part: str):
    k = 0 if part == "re" else 1

    def phi(z):
        return 0.5 * _embed(z)[..., k]

    return phi, (lambda z: -2.0 * _embed(z)[..., k])


@dataclass(frozen=True)
class TestFunctionBank:
    """Test functions with bounds on the density of dd^c phi against omega.

    On the unit sphere [z,w]^2 = (1 - <x, y>)/2 and Re z/(1+|z|^2) = x_1/2 are
    affine in the embedding coordinates, which are first spherical harmonics;
    that gives dd^c phi / omega = 2<x, y> and -2 x_1 respectively, so every
    default member has bound 2.
    """

    __test__ = False

    members: tuple = field(default_factory=tuple)

    @classmethod
    def default(cls) -> "TestFunctionBank":
        inf = complex(math.inf, 0.0)
        return cls((
            _member("chordal_sq_0", _chordal_sq(0j)),
            _member("chordal_sq_1", _chordal_sq(1 + 0j)),
            _member("chordal_sq_i", _chordal_sq(1j)),
            _member("chordal_sq_inf", _chordal_sq(inf)),
            _member("sphere_re", _sphere_coord("re")),
            _member("sphere_im", _sphere_coord("im")),
        ))

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    @property
    def max_c2(self) -> float:
        return max(m.c2_bound for m in self.members)


def integrate(mu: WeightedMeasure, phi: TestFunction) -> float:
    # fsum is exactly rounded, so the result does not depend on atom order
    return math.fsum(mu.weights * phi(mu.points))


def weak_gap(nu: WeightedMeasure, mu: WeightedMeasure, bank: TestFunctionBank | None = None) -> float:
    bank = bank or TestFunctionBank.default()
    return max(abs(integrate(nu, phi) - integrate(mu, phi)) for phi in bank)


def weak_gap_from_potential(z: np.ndarray, diff: np.ndarray, bank: TestFunctionBank | None = None) -> Estimate:
    """Weak gap of two probability measures from their potentials.

    With p_nu - p_mu sampled as ``diff`` at omega-distributed points z,
    int phi d(nu - mu) = int (p_nu - p_mu) dd^c phi, a Monte Carlo mean.  An
    additive constant in ``diff`` drops out since dd^c phi has total mass 0.
    Returns the largest |mean| over the bank, with that member's stderr.
    """
    bank = bank or TestFunctionBank.default()
    best = None
    for phi in bank:
        est = _estimate(diff * phi.density(z))
        if best is None or abs(est) > abs(best):
            best = est
    return Estimate(abs(best), best.stderr, best.samples)


# ---------------------------------------------------------------------------
# potential route


def _require_samples(samples: int):
    if samples < 1000:
        raise ValueError("at least 1000 samples are required")


def potential_terms(f: Poly, n: int, a: complex, z: np.ndarray) -> dict:
    """Per-sample pieces of the potential comparison at the points z.

    Keys: ``gap`` = |log|u - a|/(d^n-1) - g_f|, ``prox`` = log 1/[u, a],
    ``inf_gap`` = log 1/[u, inf]/(d^n-1) - g_f and ``a_term`` = log 1/[a, inf],
    where u = (f^n)'(z).  Everything is computed from log u, never from u.
    """
    m = f.degree**n - 1
    Lu = log_deriv_iterate(f, n, z)
    g, _, _ = green_array(f, z)
    half_u = log_half_one_plus_sq(Lu.real)  # log 1/[u, inf]
    a = complex(a)
    out = {"inf_gap": half_u / m - g}
    if np.isinf(a):
        out["prox"] = half_u
        out["a_term"] = 0.0
        return out
    La_inf = 0.5 * math.log1p(abs(a) ** 2)
    log_diff = log_minus_const(Lu, a).real
    out["gap"] = np.abs(log_diff / m - g)
    out["prox"] = half_u + La_inf - log_diff
    out["a_term"] = La_inf
    return out


def _sampled(f: Poly, n: int, a: complex, samples: int, seed: int, key: str) -> Estimate:
    z = fs_sample(seed, samples)
    vals = np.concatenate([potential_terms(f, n, a, z[s:s + BATCH])[key] for s in range(0, samples, BATCH)])
    return _estimate(vals)


def potential_discrepancy(f: Poly, n: int, a: complex, samples: int = 10_000, seed: int = 0) -> Estimate:
    """Monte Carlo estimate of int |log|(f^n)' - a|/(d^n-1) - g_f| d omega."""
    _require_samples(samples)
    a = complex(a)
    if a == 0 or np.isinf(a):
        raise ValueError("a must be finite and nonzero")
    return _sampled(f, n, a, samples, seed, "gap")


def potential_weak_gap(f: Poly, n: int, a: complex, samples: int = 10_000, seed: int = 0,
                       bank: TestFunctionBank | None = None) -> Estimate:
    """Weak gap between the normalised pullback of delta_a and mu_f, without roots."""
    _require_samples(samples)
    a = complex(a)
    if np.isinf(a):
        raise ValueError("a must be finite")
    z = fs_sample(seed, samples)
    m = f.degree**n - 1
    diff = np.concatenate([
        log_minus_const(log_deriv_iterate(f, n, z[s:s + BATCH]), a).real / m - green_array(f, z[s:s + BATCH])[0]
        for s in range(0, samples, BATCH)])
    return weak_gap_from_potential(z, diff, bank)


def proximity(f: Poly, n: int, a: complex, samples: int = 10_000, seed: int = 0) -> Estimate:
    """Monte Carlo estimate of int log 1/[(f^n)', a] d omega (a may be infinite)."""
    _require_samples(samples)
    return _sampled(f, n, a, samples, seed, "prox")


# ---------------------------------------------------------------------------
# rates and reports


def fit_rate(series) -> tuple[float, float, float]:
    """Least-squares fit of log value = log c + n log rho; returns (rho, c, r2)."""
    pts = [(float(n), float(v)) for n, v in series]
    if len(pts) < 4:
        raise DegenerateSeries("need at least 4 points to fit a rate")
    if any(not (v > 0) for _, v in pts):
        raise DegenerateSeries("all values must be positive")
    x = np.array([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 or ss_res <= 1e-28 * max(ss_tot, 1.0) else 1.0 - ss_res / ss_tot
    return math.exp(slope), math.exp(icpt), r2


REPORT_COLUMNS = ("map_id", "n", "a_re", "a_im", "weak_gap", "potential_l1", "proximity", "samples", "seed")


@dataclass(frozen=True)
class DiscrepancyReport:
    map_id: str
    n: int
    a: complex
    weak_gap: float
    potential_l1: float
    proximity: float
    samples: int
    seed: int

    def __post_init__(self):
        for name in ("weak_gap", "potential_l1", "proximity"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def row(self) -> list:
        return [self.map_id, self.n, repr(self.a.real), repr(self.a.imag), repr(float(self.weak_gap)),
                repr(float(self.potential_l1)), repr(float(self.proximity)), self.samples, self.seed]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["a"] = [self.a.real, self.a.imag]
        for k in ("weak_gap", "potential_l1", "proximity"):
            d[k] = float(d[k])
        return d

    @staticmethod
    def to_csv(reports, extra: dict | None = None) -> str:
        """CSV text; ``extra`` adds constant columns (recipe, build tag, ...)."""
        extra = extra or {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(REPORT_COLUMNS) + list(extra))
        for r in reports:
            w.writerow(r.row() + list(extra.values()))
        return buf.getvalue()
