import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pullback_lab import Poly
from pullback_lab.discrepancy import (DiscrepancyReport, Estimate, TestFunctionBank, fit_rate, potential_discrepancy,
                                      potential_terms, potential_weak_gap, proximity, weak_gap,
                                      weak_gap_from_potential)
from pullback_lab.errors import DegenerateSeries
from pullback_lab.green import fs_sample, green_array, log_chordal
from pullback_lab.measures import circle_measure, pullback_measure

Z2 = Poly.monomial(2)
Z2I = Poly((1j, 0, 1))
BANK = TestFunctionBank.default()


def test_bank_bounds():
    assert len(BANK) == 6 and BANK.max_c2 == 2.0


def test_bank_values_in_range():
    z = fs_sample(1, 1000)
    for phi in BANK:
        v = phi(z)
        assert np.all(np.abs(v) <= 1.0)


@pytest.mark.parametrize("phi", list(BANK), ids=lambda p: p.name)
def test_densities_have_zero_mass(phi):
    z = fs_sample(2, 200_000)
    vals = phi.density(z)
    assert abs(vals.mean()) <= 5 * vals.std() / math.sqrt(z.size)


@pytest.mark.parametrize("phi", list(BANK), ids=lambda p: p.name)
@pytest.mark.parametrize("w", [0.3 + 0.1j, -2 + 1j, 10j])
def test_densities_reproduce_point_evaluation(phi, w):
    # phi(w) - int phi d omega = int log[z, w] dd^c phi
    z = fs_sample(3, 400_000)
    lhs = phi(np.array([w]))[0] - phi(z).mean()
    terms = log_chordal(z, w) * phi.density(z)
    err = terms.std() / math.sqrt(z.size)
    assert abs(terms.mean() - lhs) <= 5 * err + 1e-3


def test_weak_gap_is_zero_on_identical_measures():
    mu = circle_measure(100)
    assert weak_gap(mu, mu) == 0.0


def test_weak_gap_from_potential_matches_roots():
    n = 6
    roots = weak_gap(pullback_measure(Z2, n, 1.0), circle_measure(100_000))
    est = potential_weak_gap(Z2, n, 1.0, samples=200_000, seed=5)
    assert abs(float(est) - roots) <= 4 * est.stderr + 1e-4


def test_constant_shift_in_potential_drops_out():
    z = fs_sample(4, 50_000)
    diff = np.log1p(np.abs(z))
    a = weak_gap_from_potential(z, diff)
    b = weak_gap_from_potential(z, diff + 3.0)
    assert abs(a - b) <= 4 * (a.stderr + b.stderr)


def test_potential_l1_matches_quadrature(frozen):
    e = frozen["potential_l1_z2_a1"]
    for n, want in zip(e["n"], e["values"]):
        est = potential_discrepancy(Z2, n, 1.0, samples=100_000, seed=n)
        assert abs(est - want) <= 4 * est.stderr


def test_proximity_matches_radial_quadrature(frozen):
    est = proximity(Z2, 1, 0.0, samples=200_000, seed=9)
    assert abs(est - frozen["proximity_z2_a0_n1"]["value"]) <= 4 * est.stderr


@given(x=st.floats(-1.5, 1.5), y=st.floats(-1.5, 1.5),
       a=st.complex_numbers(min_magnitude=0.01, max_magnitude=100, allow_nan=False, allow_infinity=False))
def test_chordal_decomposition_includes_value_term(x, y, a):
    # log|u - a| = log[u, a] - log[u, inf] - log[a, inf]
    z = np.array([complex(x, y)])
    n = 2
    t = potential_terms(Z2I, n, a, z)
    u = 2 * z * (z * z + 1j) * 2
    if abs(u[0] - a) < 1e-8:
        return
    lhs = math.log(abs(u[0] - a))
    rhs = -t["prox"][0] + 0.5 * math.log1p(abs(u[0]) ** 2) + t["a_term"]
    assert lhs == pytest.approx(rhs, abs=1e-9)
    g = green_array(Z2I, z)[0][0]
    assert t["gap"][0] == pytest.approx(abs(lhs / 3 - g), abs=1e-9)


def test_large_value_is_finite():
    est = potential_discrepancy(Z2I, 4, 1e10, samples=2000)
    assert math.isfinite(est)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        potential_discrepancy(Z2I, 3, 0.0)
    with pytest.raises(ValueError):
        potential_discrepancy(Z2I, 3, 1.0, samples=10)


def test_estimate_carries_stderr():
    e = Estimate(1.5, 0.1, 10)
    assert e == 1.5 and e.stderr == 0.1 and e.samples == 10


def test_fit_rate_recovers_geometric():
    rho, c, r2 = fit_rate([(n, 3.0 * 0.5**n) for n in range(4, 10)])
    assert rho == pytest.approx(0.5) and c == pytest.approx(3.0) and r2 == 1.0


def test_fit_rate_matches_oracle_fit(frozen):
    e = frozen["fit_n_two_pow_minus_n"]
    rho, c, _ = fit_rate([(n, n * 2.0**-n) for n in range(4, 13)])
    assert rho == pytest.approx(e["rho"], rel=1e-12) and c == pytest.approx(e["c"], rel=1e-12)


def test_fit_rate_degenerate():
    with pytest.raises(DegenerateSeries):
        fit_rate([(1, 1.0), (2, 0.5), (3, 0.25)])
    with pytest.raises(DegenerateSeries):
        fit_rate([(1, 1.0), (2, 0.5), (3, 0.0), (4, 0.1)])


def test_report_validation_and_csv():
    with pytest.raises(ValueError):
        DiscrepancyReport("monomial:2", 3, 1 + 0j, -1.0, 0.1, 0.1, 1000, 0)
    r = DiscrepancyReport("monomial:2", 3, 1 + 0j, 0.2, 0.1, 0.1, 1000, 0)
    text = DiscrepancyReport.to_csv([r], {"recipe": "x"})
    assert text.splitlines()[0].endswith(",recipe")
    assert r.as_dict()["a"] == [1.0, 0.0]
