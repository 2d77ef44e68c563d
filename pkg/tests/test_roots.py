import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles as O
from pullback_lab import Poly
from pullback_lab.errors import CapExceeded
from pullback_lab.roots import (RootSet, SolverConfig, cluster_groups, count_roots_in_disk, poly_roots,
                                solve_pullback)

Z2I = Poly((1j, 0, 1))
IMPLICIT = SolverConfig(strategy="implicit_newton")


def test_unknown_strategy():
    with pytest.raises(ValueError):
        SolverConfig(strategy="bisection")


def test_infinite_value_rejected():
    with pytest.raises(ValueError):
        solve_pullback(Z2I, 2, complex(math.inf, 0))


def test_small_case_matches_polyroots(frozen):
    want = [complex(*r) for r in frozen["roots_z2_plus_i_n2_a1"]["roots"]]
    rs = solve_pullback(Z2I, 2, 1.0)
    assert rs.total_multiplicity == 3
    assert O.matched_distance(rs.locations(), want) <= 1e-12


@pytest.mark.parametrize("n", [1, 3, 6])
def test_monomial_closed_form(n):
    rs = solve_pullback(Poly.monomial(2), n, 1.0)
    want = O.monomial_pullback_roots(2, n, 1.0)
    assert rs.total_multiplicity == 2**n - 1
    assert O.matched_distance(rs.locations(), want) <= 1e-10


def test_monomial_closed_form_cubic_leading_coefficient():
    f = Poly((0, 0, 0, 0.5 + 0.5j))
    rs = solve_pullback(f, 3, 2 - 1j)
    want = O.monomial_pullback_roots(3, 3, 2 - 1j, lead=0.5 + 0.5j)
    assert O.matched_distance(rs.locations(), want) <= 1e-10


@pytest.mark.parametrize("n", [4, 6])
def test_strategies_agree(n):
    a = 0.7 - 0.2j
    e = solve_pullback(Z2I, n, a)
    i = solve_pullback(Z2I, n, a, IMPLICIT)
    assert e.total_multiplicity == i.total_multiplicity == 2**n - 1
    assert O.matched_distance(e.locations(True), i.locations(True)) <= 1e-9


def test_residuals_small():
    rs = solve_pullback(Poly((-1, 0, 1)), 5, 1.0)
    assert rs.residual_max <= 1e-8


def test_value_zero_is_flagged_and_has_full_multiplicity():
    rs = solve_pullback(Poly.monomial(2), 4, 0.0)
    assert rs.flagged
    assert len(rs.roots) == 1
    assert rs.roots[0].multiplicity == 15 and abs(rs.roots[0].location) < 1e-10


def test_repeated_roots_are_clustered():
    # -(z - 1)^3 (z + 2)
    roots = {round(r.location.real): r.multiplicity for r in poly_roots(Poly((2, -5, 3, 1, -1)))}
    assert roots == {1: 3, -2: 1}


def test_degree_cap():
    with pytest.raises(CapExceeded):
        solve_pullback(Z2I, 6, 1.0, SolverConfig(degree_cap=32))


def test_argument_principle_count_matches_roots():
    rs = solve_pullback(Z2I, 5, 1.0)
    inside = int(np.sum(np.abs(rs.locations(True)) < 1.0))
    assert count_roots_in_disk(Z2I, 5, 1.0, 0j, 1.0) == inside


def test_cluster_groups():
    assert cluster_groups(np.array([0, 1e-12, 1, 2 + 0j])) == [[0, 1], [2], [3]]


def test_serialisation():
    rs = solve_pullback(Z2I, 2, 1.0)
    assert rs.to_csv().splitlines()[0] == "re,im,multiplicity,residual"
    assert '"method": "expand_aberth"' in rs.to_json()
    assert isinstance(rs, RootSet)


@given(st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.integers(1, 4))
def test_root_count_invariant(a, n):
    rs = solve_pullback(Z2I, n, a)
    assert rs.total_multiplicity == 2**n - 1
