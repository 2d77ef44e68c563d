import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles as O
from pullback_lab import Poly
from pullback_lab.errors import CapExceeded
from pullback_lab.poly import (LogComplex, compose, deriv2_iterate_eval, deriv_iterate_eval, derivative,
                               escape_radius, int_poly_mul, int_poly_pow, iterate_expand, log_deriv_iterate,
                               log_half_one_plus_sq, log_minus_const, wrap_log)

Z2I = Poly((1j, 0, 1))

small = st.floats(-2.0, 2.0, allow_nan=False)
coef = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


def test_zero_polynomial_rejected():
    with pytest.raises(ValueError):
        Poly((0, 0))


def test_trailing_zeros_trimmed():
    assert Poly((1, 2, 0, 0)).degree == 1


def test_json_roundtrip():
    f = Poly((1 + 2j, -0.5, 3j))
    assert Poly.from_json(f.to_json()) == f


def test_escape_radius_z2_plus_i():
    assert escape_radius(Z2I) == 2.0


def test_escape_radius_large_constant():
    f = Poly((100, 0, 1))
    R = escape_radius(f)
    # |c| <= |z|^2 / 2 is the defining condition
    assert 100 <= R * R / 2 <= 100 * (1 + 1e-10)


def test_deriv_matches_chain_rule_oracle(frozen):
    want = complex(*frozen["deriv_z2_plus_i_n3_at_2"]["value"])
    got = deriv_iterate_eval(Z2I, 3, 2 + 0j).to_complex()
    assert abs(got - want) <= 1e-12 * abs(want)


def test_second_derivative_matches_oracle(frozen):
    want = complex(*frozen["deriv2_z2_plus_i_n2_at_1p1j"]["value"])
    got = deriv2_iterate_eval(Z2I, 2, 1 + 1j).to_complex()
    assert abs(got - want) <= 1e-12 * abs(want)


def test_deriv_of_monomial_at_zero_is_exact_zero():
    assert deriv_iterate_eval(Poly.monomial(2), 3, 0j).is_zero


def test_log_space_survives_huge_orbits():
    # |z| = 10 squared 12 times is far beyond double range
    L = log_deriv_iterate(Poly.monomial(2), 12, np.array([10.0 + 0j]))[0]
    want = 12 * math.log(2) + (2**12 - 1) * math.log(10)
    assert math.isclose(L.real, want, rel_tol=1e-12)


@given(x=small, y=small, n=st.integers(1, 5))
def test_log_deriv_agrees_with_mpmath(x, y, n):
    z = complex(x, y)
    u, _ = O.mp_orbit_deriv([1j, 0, 1], n, z)
    u = complex(u)
    L = complex(log_deriv_iterate(Z2I, n, np.array([z]))[0])
    if u == 0:
        assert math.isinf(L.real)
        return
    assert math.isclose(L.real, math.log(abs(u)), abs_tol=1e-9)


def test_expansion_matches_mpmath_substitution():
    f = Poly((0.3 - 0.2j, 0.5, 1))
    want = O.mp_expand_iterate([0.3 - 0.2j, 0.5, 1], 3)
    got = iterate_expand(f, 3)
    assert got.degree == 8
    for c, w in zip(got.coeffs, want):
        assert abs(complex(c) - complex(w)) <= 1e-14 * max(1.0, abs(complex(w)))


def test_expansion_cap():
    with pytest.raises(CapExceeded):
        iterate_expand(Poly.monomial(2), 20)


@given(a=st.lists(coef, min_size=2, max_size=4), b=st.lists(coef, min_size=2, max_size=4),
       z=coef)
def test_compose_evaluates_like_nesting(a, b, z):
    if a[-1] == 0 or b[-1] == 0:
        return
    p, q = Poly(tuple(a)), Poly(tuple(b))
    got = compose(p, q)(z)
    want = p(q(z))
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_derivative():
    assert derivative(Poly((5, 1, 3, 2))) == Poly((1, 6, 6))


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=6), st.lists(st.integers(-50, 50), min_size=1, max_size=6))
def test_int_poly_mul_is_convolution(a, b):
    assert int_poly_mul(a, b) == [int(v) for v in np.convolve(a, b)]


def test_int_poly_pow():
    # (1 + z)^5 binomials
    assert int_poly_pow([1, 1], 5) == [math.comb(5, k) for k in range(6)]


@given(r=st.floats(-30, 30), t=st.floats(-3, 3), a=coef)
def test_log_minus_const(r, t, a):
    if a == 0:
        return
    L = complex(r, t)
    got = complex(log_minus_const(np.array([L]), a)[0])
    with np.errstate(all="ignore"):
        diff = cmath.exp(L) - a
    if abs(diff) < 1e-6 * max(1.0, abs(a)):
        return  # cancellation: the double reference is unreliable here
    assert math.isclose(got.real, math.log(abs(diff)), abs_tol=1e-9)


def test_log_half_one_plus_sq_extremes():
    assert log_half_one_plus_sq(800.0) == 800.0
    assert log_half_one_plus_sq(-800.0) == 0.0


def test_wrap_log_range():
    w = wrap_log(np.array([complex(0, 7.0), complex(0, -7.0)]))
    assert np.all(np.abs(w.imag) <= math.pi)


def test_logcomplex_roundtrip():
    z = -3 + 4j
    assert abs(LogComplex.from_complex(z).to_complex() - z) < 1e-14
