"""Complex polynomials, their iterates, and overflow-safe derivative evaluation.

Two evaluation routes live here.  Expanded coefficients of iterates are built
exactly in fixed point (Gaussian integers scaled by ``2**prec``) using
Kronecker substitution, so the cost of an expansion is a handful of big-integer
multiplications.  The implicit route never expands anything: ``(f^n)'(z)`` is
accumulated along the forward orbit as a sum of complex logarithms, and orbit
points beyond the escape radius are themselves carried as logarithms.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr, mpz

from .errors import CapExceeded, OrbitOverflow

DEFAULT_DEGREE_CAP = 2**14
TWO_PI = 2.0 * math.pi


def wrap_arg(theta):
    """Wrap angles into (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    out = theta - TWO_PI * np.ceil((theta - math.pi) / TWO_PI)
    return out if out.ndim else float(out)


def wrap_log(L):
    """Complex logarithm(s) with the imaginary part wrapped into (-pi, pi]."""
    L = np.asarray(L, dtype=complex)
    with np.errstate(invalid="ignore"):
        im = np.where(np.isfinite(L.imag), wrap_arg(L.imag), 0.0)
    return L.real + 1j * im


@dataclass(frozen=True)
class LogComplex:
    """A complex number stored as (log-modulus, argument).

    ``is_zero`` marks the exact zero, for which the other two fields carry no
    meaning.
    """

    log_mod: float
    arg: float
    is_zero: bool = False

    @classmethod
    def zero(cls) -> "LogComplex":
        return cls(-math.inf, 0.0, True)

    @classmethod
    def from_complex(cls, z: complex) -> "LogComplex":
        if z == 0:
            return cls.zero()
        return cls(math.log(abs(z)), float(wrap_arg(cmath.phase(z))))

    @classmethod
    def from_log(cls, L: complex) -> "LogComplex":
        if math.isinf(L.real) and L.real < 0:
            return cls.zero()
        return cls(float(L.real), float(wrap_arg(L.imag)))

    def __mul__(self, other: "LogComplex") -> "LogComplex":
        if self.is_zero or other.is_zero:
            return LogComplex.zero()
        return LogComplex(self.log_mod + other.log_mod, float(wrap_arg(self.arg + other.arg)))

    def to_complex(self) -> complex:
        if self.is_zero:
            return 0j
        return cmath.rect(math.exp(self.log_mod), self.arg)

    @property
    def log(self) -> complex:
        return complex(self.log_mod, self.arg) if not self.is_zero else complex(-math.inf, 0.0)


def _is_zero_coeff(c) -> bool:
    return c == 0


@dataclass(frozen=True)
class Poly:
    """Polynomial in one complex variable, ascending coefficients.

    Coefficients are Python complex numbers or, for expanded iterates whose
    coefficients overflow doubles, ``gmpy2.mpc`` values.  ``prec`` is the
    working precision (bits) used when evaluating mpc-coefficient polynomials;
    ``None`` means plain double arithmetic.
    """

    coeffs: tuple
    prec: int | None = None

    def __post_init__(self):
        cs = list(self.coeffs)
        while len(cs) > 1 and _is_zero_coeff(cs[-1]):
            cs.pop()
        if not cs or _is_zero_coeff(cs[-1]):
            raise ValueError("the zero polynomial is not a valid Poly")
        if self.prec is None:
            cs = [complex(c) for c in cs]
        object.__setattr__(self, "coeffs", tuple(cs))

    @classmethod
    def monomial(cls, d: int, c: complex = 1.0) -> "Poly":
        return cls(tuple([0j] * d + [complex(c)]))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def lead(self):
        return self.coeffs[-1]

    def as_complex(self) -> np.ndarray:
        """Coefficients as a complex128 array (overflowing entries become inf)."""
        return np.array([complex(c) for c in self.coeffs], dtype=complex)

    def __call__(self, z):
        return eval(self, z)

    def to_json(self) -> str:
        return json.dumps([[float(complex(c).real), float(complex(c).imag)] for c in self.coeffs])

    @classmethod
    def from_json(cls, text: str) -> "Poly":
        pairs = json.loads(text)
        return cls(tuple(complex(re, im) for re, im in pairs))


# ---------------------------------------------------------------------------
# evaluation and formal operations


def eval(p: Poly, z):  # noqa: A001 - mirrors the operation name
    """Horner evaluation.  Double arithmetic overflows to infinity."""
    if p.prec is None:
        acc = 0j
        for c in reversed(p.coeffs):
            acc = acc * z + c
        return acc
    return complex(eval_mp(p, z, p.prec))


def eval_mp(p: Poly, z, prec: int):
    """Horner evaluation at ``prec`` bits; returns an mpc value."""
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        zz = mpc(z)
        acc = mpc(0)
        for c in reversed(p.coeffs):
            acc = acc * zz + c
        return acc


def derivative(p: Poly) -> Poly:
    if p.degree == 0:
        raise ValueError("derivative of a constant is not a valid Poly")
    if p.prec is None:
        return Poly(tuple(k * p.coeffs[k] for k in range(1, len(p.coeffs))))
    bits = max(max(c.precision) for c in p.coeffs) + 32
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        cs = tuple(k * p.coeffs[k] for k in range(1, len(p.coeffs)))
    return Poly(cs, prec=p.prec)


# ---------------------------------------------------------------------------
# fixed-point Gaussian-integer polynomials with Kronecker multiplication


def _q_to_fixed(num, den, prec: int) -> int:
    q, r = divmod(int(num) << prec, int(den))
    return q + (2 * r >= den)


def _to_fixed(c, prec: int) -> tuple[int, int]:
    if isinstance(c, type(mpc(0))):
        re, im = c.real, c.imag
    else:
        c = complex(c)
        re, im = c.real, c.imag
    return _q_to_fixed(*re.as_integer_ratio(), prec), _q_to_fixed(*im.as_integer_ratio(), prec)


def _slot_bytes(bound_bits: int) -> int:
    return (bound_bits + 8) // 8 + 1


def _pack(vals: Sequence[int], nb: int) -> int:
    pos = b"".join((v if v > 0 else 0).to_bytes(nb, "little") for v in vals)
    neg = b"".join((-v if v < 0 else 0).to_bytes(nb, "little") for v in vals)
    return int.from_bytes(pos, "little") - int.from_bytes(neg, "little")


def _unpack(N: int, count: int, nb: int) -> list[int]:
    half = 1 << (8 * nb - 1)
    bias = int.from_bytes((b"\x00" * (nb - 1) + b"\x80") * count, "little")
    raw = (N + bias).to_bytes(nb * count, "little")
    return [int.from_bytes(raw[i * nb:(i + 1) * nb], "little") - half for i in range(count)]


def _maxbits(*seqs) -> int:
    return max((abs(v).bit_length() for s in seqs for v in s), default=0)


def _rescale(vals: list[int], prec: int) -> list[int]:
    if prec == 0:
        return vals
    half = 1 << (prec - 1)
    return [(v + half) >> prec for v in vals]


def _fx_mul(a, b, prec: int):
    """Product of two fixed-point complex polynomials ``(re, im)``."""
    ar, ai = a
    br, bi = b
    count = len(ar) + len(br) - 1
    bits = _maxbits(ar, ai) + _maxbits(br, bi) + min(len(ar), len(br)).bit_length() + 3
    nb = _slot_bytes(bits)
    Ar, Ai, Br, Bi = (mpz(_pack(s, nb)) for s in (ar, ai, br, bi))
    P1 = Ar * Br
    P2 = Ai * Bi
    P3 = (Ar + Ai) * (Br + Bi)
    re = _unpack(int(P1 - P2), count, nb)
    im = _unpack(int(P3 - P1 - P2), count, nb)
    return _rescale(re, prec), _rescale(im, prec)


def int_poly_mul(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Exact product of integer coefficient lists (ascending), one big multiply."""
    count = len(a) + len(b) - 1
    nb = _slot_bytes(_maxbits(a) + _maxbits(b) + min(len(a), len(b)).bit_length() + 2)
    return _unpack(int(mpz(_pack(a, nb)) * mpz(_pack(b, nb))), count, nb)


def int_poly_pow(a: Sequence[int], k: int) -> list[int]:
    out = [1]
    base = list(a)
    while k:
        if k & 1:
            out = int_poly_mul(out, base)
        k >>= 1
        if k:
            base = int_poly_mul(base, base)
    return out


def _fx_scale(c: tuple[int, int], a, prec: int):
    cr, ci = c
    ar, ai = a
    re = [cr * x - ci * y for x, y in zip(ar, ai)]
    im = [cr * y + ci * x for x, y in zip(ar, ai)]
    return _rescale(re, prec), _rescale(im, prec)


def _fx_add_const(a, c: tuple[int, int]):
    ar, ai = list(a[0]), list(a[1])
    ar[0] += c[0]
    ai[0] += c[1]
    return ar, ai


def _fx_from_poly(p: Poly, prec: int):
    pairs = [_to_fixed(c, prec) for c in p.coeffs]
    return [x for x, _ in pairs], [y for _, y in pairs]


def _fx_compose(p: Poly, q_fx, prec: int):
    """Fixed-point coefficients of ``p(q)`` by Horner."""
    cs = [_to_fixed(c, prec) for c in p.coeffs]
    acc = _fx_scale(cs[-1], q_fx, prec)
    for k in range(len(cs) - 2, 0, -1):
        acc = _fx_mul(_fx_add_const(acc, cs[k]), q_fx, prec)
    return _fx_add_const(acc, cs[0])


def _fx_derivative(a):
    ar, ai = a
    return [k * ar[k] for k in range(1, len(ar))], [k * ai[k] for k in range(1, len(ai))]


def _fx_trim(a):
    ar, ai = list(a[0]), list(a[1])
    while len(ar) > 1 and ar[-1] == 0 and ai[-1] == 0:
        ar.pop()
        ai.pop()
    return ar, ai


def exact_mpc(x: int, y: int, frac: int):
    """The mpc value (x + iy) / 2**frac, held exactly."""
    bits = max(x.bit_length(), y.bit_length(), 2)
    # mpc() rounds to the context precision, so widen the context first
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        return mpc(mpfr(x) / (1 << frac) if frac else mpfr(x), mpfr(y) / (1 << frac) if frac else mpfr(y))


def _fx_to_poly(a, prec: int, work_prec: int) -> Poly:
    ar, ai = _fx_trim(a)
    return Poly(tuple(exact_mpc(x, y, prec) for x, y in zip(ar, ai)), prec=work_prec)


def default_expand_prec(n: int) -> int:
    return 64 + 8 * n


def iterate_fixed(f: Poly, n: int, prec: int, cap: int = DEFAULT_DEGREE_CAP):
    """Fixed-point coefficients ``(re, im)`` of f^n, scaled by 2**prec."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = f.degree
    if d**n > cap:
        raise CapExceeded(f"degree {d}^{n} exceeds cap {cap}")
    q = _fx_from_poly(f, prec)
    for _ in range(n - 1):
        q = _fx_compose(f, q, prec)
    return q


def compose(p: Poly, q: Poly, cap: int = DEFAULT_DEGREE_CAP, prec: int | None = None) -> Poly:
    """Coefficients of p o q.

    With ``prec=None`` and double-coefficient inputs the result is rounded back
    to doubles; otherwise it is returned with mpc coefficients.
    """
    if p.degree * q.degree > cap:
        raise CapExceeded(f"degree {p.degree * q.degree} exceeds cap {cap}")
    work = prec if prec is not None else 128
    a = _fx_compose(p, _fx_from_poly(q, work), work)
    out = _fx_to_poly(a, work, work)
    if prec is None and p.prec is None and q.prec is None:
        cs = tuple(complex(c) for c in out.coeffs)
        if all(cmath.isfinite(c) for c in cs):
            return Poly(cs)
    return out


def iterate_expand(f: Poly, n: int, cap: int = DEFAULT_DEGREE_CAP, prec: int | None = None) -> Poly:
    """Expanded coefficients of the n-th iterate f^n (degree d**n)."""
    prec = default_expand_prec(n) if prec is None else prec
    return _fx_to_poly(iterate_fixed(f, n, prec, cap), prec, prec)


# ---------------------------------------------------------------------------
# escape radius (shared with the Green-function module)


def escape_radius(f: Poly) -> float:
    """Smallest R >= 2 (up to bisection tolerance) with
    |f(z) - a_d z^d| <= |a_d| |z|^d / 2 for all |z| >= R.

    That condition gives both |a_d||z|^d/2 <= |f(z)| <= 2|a_d||z|^d.
    """
    c = np.abs(f.as_complex())
    d = f.degree
    if d < 2:
        raise ValueError("escape radius needs degree >= 2")
    lead = c[-1] / 2.0

    def tail(R):
        return sum(c[k] * R ** (k - d) for k in range(d))

    if tail(2.0) <= lead:
        return 2.0
    lo, hi = 2.0, 4.0
    while tail(hi) > lead:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tail(mid) <= lead:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * hi:
            break
    return hi


# ---------------------------------------------------------------------------
# log-space orbit machinery (vectorised over arrays of points)


def cexpm1(z):
    """exp(z) - 1 for complex arrays without cancellation at small |z|."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    with np.errstate(invalid="ignore", over="ignore"):
        re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
        im = np.exp(x) * np.sin(y)
    return re + 1j * im


def log_add(A, B):
    """log(e^A + e^B) for complex logs, exact zeros carried as real part -inf."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    swap = A.real < B.real
    X = np.where(swap, B, A)
    Y = np.where(swap, A, B)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = X + np.log1p(np.exp(Y - X))
    out = np.where(np.isneginf(Y.real), X, out)
    out = np.where(np.isneginf(X.real), X, out)
    return out


def log_minus_const(L, a: complex):
    """log(e^L - a), stable when e^L is close to a or much larger/smaller."""
    L = np.asarray(L, dtype=complex)
    if a == 0:
        return L
    La = complex(math.log(abs(a)), cmath.phase(a))
    delta = wrap_log(La - L)
    upper = L.real >= La.real
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out_hi = L + np.log(-cexpm1(delta))
        out_lo = La + np.log(cexpm1(-delta))
    out = np.where(upper, out_hi, out_lo)
    out = np.where(np.isneginf(L.real), La + 1j * math.pi, out)
    return wrap_log(out)


def log_half_one_plus_sq(logmod):
    """0.5*log(1 + e^(2*logmod)), i.e. -log[u, inf] from log|u|."""
    logmod = np.asarray(logmod, dtype=float)
    return 0.5 * np.logaddexp(0.0, 2.0 * logmod)


class Orbit:
    """Forward orbit of an array of points under a polynomial map.

    Points are carried directly while |w| < R (the escape radius) and as
    complex logarithms afterwards; once switched they stay in log form, which
    is safe because |f(w)| >= |w| beyond R.
    """

    def __init__(self, f: Poly, z=None, logz=None):
        self.coeffs = f.as_complex()
        if not np.all(np.isfinite(self.coeffs)):
            raise OrbitOverflow("map coefficients are not representable in double precision")
        self.d = f.degree
        self.R = escape_radius(f)
        if logz is not None:
            # points given by their logarithms, assumed beyond the escape radius
            self.L = np.atleast_1d(np.asarray(logz, dtype=complex)).copy()
            self.big = np.ones(self.L.shape, dtype=bool)
            self.w = np.zeros(self.L.shape, dtype=complex)
            return
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        self.big = np.abs(z) >= self.R
        with np.errstate(divide="ignore", invalid="ignore"):
            self.L = np.where(self.big, np.log(np.where(self.big, z, 1.0)), 0j)
        self.w = np.where(self.big, 0j, z)

    def keep(self, mask):
        """Drop every point where ``mask`` is False."""
        self.w = self.w[mask]
        self.L = self.L[mask]
        self.big = self.big[mask]

    def log_abs(self):
        with np.errstate(divide="ignore"):
            return np.where(self.big, self.L.real, np.log(np.abs(self.w)))

    def log_value(self):
        with np.errstate(divide="ignore"):
            return np.where(self.big, self.L, np.log(self.w))

    def step(self):
        small = ~self.big
        nw = np.polyval(self.coeffs[::-1], self.w[small])
        newL = self.L.copy()
        if np.any(self.big):
            newL[self.big] = log_poly_big(self.coeffs, self.L[self.big])
        w = self.w.copy()
        w[small] = nw
        switch = np.zeros_like(self.big)
        switch[small] = np.abs(nw) >= self.R
        with np.errstate(divide="ignore"):
            newL[switch] = np.log(w[switch])
        w[switch] = 0j
        self.big = self.big | switch
        self.L = newL
        self.w = w
        if np.any(~np.isfinite(self.L.real[self.big])):
            raise OrbitOverflow("orbit left the representable range in log space")


def log_poly_big(coeffs: np.ndarray, Lw):
    """log q(w) for |w| large, given L = log w (complex)."""
    deg = len(coeffs) - 1
    lead = coeffs[-1]
    out = np.log(lead) + deg * Lw
    if deg == 0:
        return np.broadcast_to(out, Lw.shape).astype(complex)
    s = np.zeros_like(Lw)
    with np.errstate(under="ignore", over="ignore", invalid="ignore"):
        for k in range(deg):
            if coeffs[k] != 0:
                s = s + (coeffs[k] / lead) * np.exp((k - deg) * Lw)
        return out + np.log1p(s)


def log_poly_on_orbit(coeffs: np.ndarray, orbit: Orbit):
    """Complex log of q(w) at the current orbit points (-inf real part at zeros)."""
    out = np.empty(orbit.w.shape, dtype=complex)
    small = ~orbit.big
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = np.log(np.polyval(coeffs[::-1], orbit.w[small]))
    if np.any(orbit.big):
        out[orbit.big] = log_poly_big(coeffs, orbit.L[orbit.big])
    return out


def log_deriv_iterate(f: Poly, n: int, z, second: bool = False):
    """Vectorised log of (f^n)'(z) and, optionally, of (f^n)''(z).

    Returns complex arrays whose real parts are log-moduli (``-inf`` for exact
    zeros) and imaginary parts are arguments in (-pi, pi].  The recurrences are
    u_{j+1} = f'(z_j) u_j and v_{j+1} = f''(z_j) u_j^2 + f'(z_j) v_j.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    orbit = Orbit(f, z)
    c1 = np.array([k * orbit.coeffs[k] for k in range(1, len(orbit.coeffs))])
    c2 = np.array([k * c1[k] for k in range(1, len(c1))])
    Lu = np.zeros(orbit.w.shape, dtype=complex)
    Lv = np.full(orbit.w.shape, complex(-math.inf, 0.0))
    for j in range(n):
        Lf1 = log_poly_on_orbit(c1, orbit)
        if second:
            Lf2 = log_poly_on_orbit(c2, orbit)
            Lv = wrap_log(log_add(Lf2 + Lu + Lu, Lf1 + Lv))
        Lu = wrap_log(Lu + Lf1)
        if j < n - 1:
            orbit.step()
    if second:
        return Lu, Lv
    return Lu


def deriv_iterate_eval(f: Poly, n: int, z: complex) -> LogComplex:
    """(f^n)'(z) as a LogComplex, via the chain rule along the orbit."""
    Lu = log_deriv_iterate(f, n, np.array([z]))
    return LogComplex.from_log(complex(Lu[0]))


def deriv2_iterate_eval(f: Poly, n: int, z: complex) -> LogComplex:
    """(f^n)''(z) as a LogComplex."""
    _, Lv = log_deriv_iterate(f, n, np.array([z]), second=True)
    return LogComplex.from_log(complex(Lv[0]))


def abs_poly(f: Poly) -> Poly:
    """The majorant polynomial with coefficients |c_k|."""
    return Poly(tuple(complex(abs(complex(c))) for c in f.coeffs))
