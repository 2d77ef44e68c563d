import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pullback_lab import Poly
from pullback_lab.green import (chordal, constant_Cf, fs_sample, green, green_array, green_from_log, green_gap_sup,
                                log_chordal)

Z2I = Poly((1j, 0, 1))
coef = st.complex_numbers(max_magnitude=4.0, allow_nan=False, allow_infinity=False)


def test_chordal_to_infinity():
    assert chordal(3 + 4j, complex(math.inf, 0)) == pytest.approx(1 / math.sqrt(26))
    assert chordal(complex(math.inf, 0), complex(math.inf, 0)) == 0.0


@given(z=coef, w=coef)
def test_chordal_symmetric_and_bounded(z, w):
    c = chordal(z, w)
    assert c == pytest.approx(chordal(w, z))
    assert 0.0 <= c <= 1.0 + 1e-15


@given(z=coef, w=coef)
def test_log_chordal_matches_chordal(z, w):
    if z == w:
        return
    assert log_chordal(z, w) == pytest.approx(math.log(chordal(z, w)), abs=1e-12)


def test_fs_sample_is_deterministic_and_uniform_in_height():
    z = fs_sample(7, 200_000)
    assert np.array_equal(z, fs_sample(7, 200_000))
    # height on the sphere is uniform on [-1, 1]
    h = (np.abs(z) ** 2 - 1) / (np.abs(z) ** 2 + 1)
    assert abs(h.mean()) < 0.01
    assert abs(np.mean(h**2) - 1 / 3) < 0.01
    assert abs(np.mean(np.abs(z) < 1) - 0.5) < 0.01


def test_green_chebyshev_closed_form(frozen):
    g = green(Poly((-2, 0, 1)), 3 + 0j)
    assert g.escaped
    assert abs(g.value - frozen["green_chebyshev_at_3"]["value"]) <= max(g.err, 1e-14)


def test_green_matches_mpmath_oracle(frozen):
    e = frozen["green_z2_plus_i"]
    z = np.array([complex(*p) for p in e["points"]])
    g, err, esc = green_array(Z2I, z)
    assert np.all(esc)
    assert np.all(np.abs(g - np.array(e["values"])) <= err + 1e-13)


def test_green_is_zero_on_bounded_orbits():
    # the critical orbit 0, i, i - 1, -i, i - 1, ... stays bounded
    g, err, esc = green_array(Z2I, np.array([0j, 1j, -1j, -1 + 1j]))
    assert np.all(g == 0) and not np.any(esc)
    assert np.all(err <= 1e-12)


def test_green_at_infinity():
    assert green(Z2I, complex(math.inf, 0)).value == math.inf


def test_green_from_log_for_huge_points():
    # log z = 1000, beyond double range for z itself
    g, err, _ = green_from_log(Poly.monomial(2), np.array([1000 + 0j]))
    assert abs(g[0] - 1000) <= err[0] + 1e-12


@given(z=coef)
def test_green_functional_equation(z):
    # g(f(z)) = d g(z)
    f = Z2I
    g0, e0, _ = green_array(f, np.array([z]))
    g1, e1, _ = green_array(f, np.array([f(z)]))
    assert abs(g1[0] - 2 * g0[0]) <= 2 * e0[0] + e1[0] + 1e-12


@given(t=st.floats(-math.pi, math.pi))
def test_green_tracks_log_modulus_far_out(t):
    # g(z) - log|z| -> log|a_d|/(d-1) for large |z|
    w = 1e8 * complex(math.cos(t), math.sin(t))
    f = Poly((1, 0, 0, 2))
    g = green(f, w)
    assert g.value - math.log(abs(w)) == pytest.approx(math.log(2) / 2, abs=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_gap_sup_monomial(d):
    # for z^d the gap is 0.5 log(1+|z|^2) - log+|z|, largest on the unit circle
    assert green_gap_sup(Poly.monomial(d), 5000) == pytest.approx(0.5 * math.log(2), abs=1e-9)


def test_constant_cf_monomials(frozen):
    e = frozen["constant_Cf_monomial"]
    for d, want in zip(e["d"], e["values"]):
        assert constant_Cf(Poly.monomial(d), samples=5000) == pytest.approx(want, abs=1e-8)
