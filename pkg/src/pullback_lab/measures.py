"""Weighted point measures on the Riemann sphere.

Atoms are complex numbers; complex infinity stands for the point at infinity.
Equilibrium measures are approached two ways here: as normalised pullbacks of
a Dirac mass under (f^n)', and by random backward orbits (Brolin sampling).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ExceptionalStart
from .green import INF
from .poly import Poly
from .roots import SolverConfig, solve_pullback

__all__ = [
    "WeightedMeasure",
    "pullback_measure",
    "circle_measure",
    "preimages",
    "brolin_sample",
    "exceptional_set",
    "pullback_under",
    "balance_residual",
]


@dataclass(frozen=True)
class WeightedMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape != w.shape:
            raise ValueError("points and weights must have the same length")
        if np.any(~(w > 0)):
            raise ValueError("weights must be positive")
        # one canonical spelling of infinity
        pts = np.where(np.isinf(pts), INF, pts)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return math.fsum(self.weights)

    def __len__(self):
        return len(self.points)

    def normalized(self) -> "WeightedMeasure":
        return WeightedMeasure(self.points, self.weights / self.mass)

    @classmethod
    def dirac(cls, z: complex) -> "WeightedMeasure":
        return cls(np.array([z]), np.array([1.0]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "weight", "is_inf"])
        for z, wt in zip(self.points, self.weights):
            if np.isinf(z):
                w.writerow(["", "", repr(float(wt)), 1])
            else:
                w.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(wt)), 0])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "WeightedMeasure":
        rows = list(csv.DictReader(io.StringIO(text)))
        pts = [INF if r["is_inf"] == "1" else complex(float(r["re"]), float(r["im"])) for r in rows]
        return cls(np.array(pts, dtype=complex), np.array([float(r["weight"]) for r in rows]))


def pullback_measure(f: Poly, n: int, a: complex, cfg: SolverConfig | None = None) -> WeightedMeasure:
    """((f^n)')^* delta_a / (d^n - 1): the roots with weight multiplicity/(d^n - 1)."""
    rs = solve_pullback(f, n, a, cfg)
    m = f.degree**n - 1
    return WeightedMeasure(rs.locations(), np.array([r.multiplicity for r in rs.roots], dtype=float) / m)


def circle_measure(count: int, radius: float = 1.0, center: complex = 0j) -> WeightedMeasure:
    """Equal atoms at ``count`` equally spaced points of a circle."""
    theta = 2.0 * math.pi * np.arange(count) / count
    return WeightedMeasure(center + radius * np.exp(1j * theta), np.full(count, 1.0 / count))


def preimages(f: Poly, values) -> np.ndarray:
    """All d solutions of f(w) = c for each c, as rows of a (len(values), d) array.

    Repeated solutions appear repeatedly (counted with local degree); infinite
    values have infinity as their only preimage.
    """
    c = np.atleast_1d(np.asarray(values, dtype=complex))
    coeffs = f.as_complex()
    d = f.degree
    out = np.full((c.size, d), INF, dtype=complex)
    fin = ~np.isinf(c)
    cf = c[fin]
    if d == 1:
        out[fin, 0] = (cf - coeffs[0]) / coeffs[1]
        return out
    if d == 2:
        a2, a1, a0 = coeffs[2], coeffs[1], coeffs[0] - cf
        disc = np.sqrt(a1 * a1 - 4.0 * a2 * a0)
        # pick the sign that avoids cancellation, then use the product of roots
        sgn = np.where((np.conj(a1) * disc).real >= 0, 1.0, -1.0)
        q = -0.5 * (a1 + sgn * disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q / a2
            r2 = np.where(q != 0, a0 / q, r1)
        out[fin, 0], out[fin, 1] = r1, r2
        return out
    monic = coeffs / coeffs[-1]
    comp = np.zeros((cf.size, d, d), dtype=complex)
    comp[:, 1:, :-1] = np.eye(d - 1)
    comp[:, :, -1] = -monic[:-1]
    comp[:, 0, -1] = -(coeffs[0] - cf) / coeffs[-1]
    out[fin] = np.linalg.eigvals(comp)
    return out


def exceptional_set(f: Poly, rtol: float = 1e-10) -> list[complex]:
    """E(f): always infinity, plus b when f(z) - b = a_d (z - b)^d."""
    out = [INF]
    c = f.as_complex()
    d = f.degree
    b = -c[d - 1] / (d * c[d])
    target = np.array([c[d] * math.comb(d, k) * (-b) ** (d - k) for k in range(d + 1)])
    target[0] += b
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.max(np.abs(target - c)) <= rtol * scale:
        out.append(complex(b))
    return out


def _is_exceptional(f: Poly, z0: complex) -> bool:
    if np.isinf(z0):
        return True
    for e in exceptional_set(f)[1:]:
        if abs(z0 - e) <= 1e-10 * max(1.0, abs(e)):
            return True
    return False


def brolin_sample(f: Poly, z0: complex, depth: int = 20, count: int = 10_000, seed: int = 0) -> WeightedMeasure:
    """Endpoints of ``count`` random backward orbits of length ``depth`` from z0.

    Each step picks one of the d preimages (listed with multiplicity) uniformly,
    which samples (1/d^depth) (f^depth)^* delta_{z0}.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    if _is_exceptional(f, complex(z0)):
        raise ExceptionalStart(f"{z0} lies in the exceptional set of f")
    rng = np.random.default_rng(seed)
    w = np.full(count, complex(z0))
    rows = np.arange(count)
    for _ in range(depth):
        pre = preimages(f, w)
        w = pre[rows, rng.integers(0, f.degree, size=count)]
    return WeightedMeasure(w, np.full(count, 1.0 / count))


def pullback_under(f: Poly, mu: WeightedMeasure) -> WeightedMeasure:
    """(1/d) f^* mu: each atom spread equally over its d preimages."""
    pre = preimages(f, mu.points)
    d = f.degree
    return WeightedMeasure(pre.ravel(), np.repeat(mu.weights / d, d))


def balance_residual(f: Poly, mu: WeightedMeasure, bank=None) -> float:
    """max over the bank of |int phi d((1/d) f^* mu) - int phi d mu|."""
    from .discrepancy import TestFunctionBank, weak_gap

    if abs(mu.mass - 1.0) > 1e-9:
        raise ValueError("balance_residual expects a probability measure")
    bank = bank or TestFunctionBank.default()
    return weak_gap(pullback_under(f, mu), mu, bank)
