"""Regenerate tests/data/frozen.json from the independent oracles.

    python3 tests/make_frozen.py

The values are frozen so that the test suite does not rerun slow reference
computations; each entry records how it was obtained.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import mpmath

import oracles as O

OUT = Path(__file__).parent / "data" / "frozen.json"


def _c(z):
    z = complex(z)
    return [z.real, z.imag]


def build() -> dict:
    v = {}
    with mpmath.workprec(200):
        v["green_chebyshev_at_3"] = {
            "value": float(mpmath.log((3 + mpmath.sqrt(5)) / 2)),
            "how": "closed form log((3+sqrt5)/2) for z^2-2",
        }
    pts = [2.0, 0.5 + 1.0j, -1.5j, 3 + 3j, 1e3 - 2e3j]
    v["green_z2_plus_i"] = {
        "points": [_c(z) for z in pts],
        "values": [O.mp_green([1j, 0, 1], z) for z in pts],
        "how": "mpmath iteration until |f^N| > 1e40",
    }
    u, _ = O.mp_orbit_deriv([1j, 0, 1], 3, 2)
    v["deriv_z2_plus_i_n3_at_2"] = {"value": _c(complex(u)), "how": "mpmath chain rule"}
    _, w = O.mp_orbit_deriv([1j, 0, 1], 2, 1 + 1j)
    v["deriv2_z2_plus_i_n2_at_1p1j"] = {"value": _c(complex(w)), "how": "mpmath chain rule"}
    with mpmath.workprec(200):
        roots = mpmath.polyroots([4, 0, 4j, -1], maxsteps=200, extraprec=200)
    v["roots_z2_plus_i_n2_a1"] = {
        "roots": [_c(complex(r)) for r in roots],
        "how": "mpmath.polyroots on 4z^3 + 4iz - 1",
    }
    v["constant_Cf_monomial"] = {
        "d": [2, 3, 4],
        "values": [(d - 1) * 0.5 * math.log(2) + math.log(d) for d in (2, 3, 4)],
        "how": "closed forms: gap sup (1/2)log 2, critical point 0, a_d = 1",
    }
    v["proximity_z2_a0_n1"] = {
        "value": O.radial_sphere_integral(lambda r: 0.5 * mpmath.log(1 + 4 * r * r) - mpmath.log(2 * r)),
        "how": "radial quadrature of log 1/[2z, 0]",
    }
    v["potential_l1_z2_a1"] = {
        "n": [5, 10],
        "values": [O.zd_potential_l1(2, 5), O.zd_potential_l1(2, 10)],
        "how": "polar quadrature of |log|2^n z^m - 1|/m - log+|z||",
    }
    ns = list(range(4, 13))
    rho, c = O.fit_log_linear(ns, [n * 2.0**-n for n in ns])
    v["fit_n_two_pow_minus_n"] = {"rho": rho, "c": c, "how": "least squares on log(n 2^-n), n = 4..12"}
    v["green_param_d2"] = {
        "points": [_c(4), _c(1e6), _c(-2.5 + 0.5j)],
        "values": [O.mp_green_param(2, 4), O.mp_green_param(2, 1e6), O.mp_green_param(2, -2.5 + 0.5j)],
        "how": "mpmath critical-orbit iteration",
    }
    with mpmath.workprec(200):
        orbit = O.mp_critical_orbit(3, 4, 0.5 + 0.5j)
        logG = 4 * mpmath.log(3) + 2 * sum(mpmath.log(abs(p)) for p in orbit)
    v["log_deriv_crit_d3_n4_at_half_plus_half_i"] = {"value": float(logG), "how": "mpmath product over the critical orbit"}
    return v


if __name__ == "__main__":
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(json.dumps(build(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")
