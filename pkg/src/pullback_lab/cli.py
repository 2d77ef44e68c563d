"""Command-line runner: named recipes, flat key=value configs, seeded reports.

Usage::

    pullback-lab RECIPE [--map SPEC] [--d D] [--n-min N] [--n-max N] [--a A[,A...]]
                        [--samples K] [--seed S] [--strategy NAME] [--out-dir DIR]
                        [--tol T] [--config FILE]

Map specs are ``monomial:D``, ``unicritical:D`` or ascending coefficients
``c0,c1,...,cd`` (``i`` or ``j`` for the imaginary unit), e.g. ``i,0,1`` for
z^2 + i.  A config file holds one ``key = value`` per line (``#`` starts a
comment); its keys are the long flag names, with ``-`` or ``_``, plus
``points``, ``depth``, ``ref_atoms`` and ``workers``.  Flags override the file.

Every recipe writes ``<recipe>.csv`` and a ``<recipe>.json`` manifest to the
output directory.  Exit status: 0 when every exact check passes, 1 when one
fails, 2 for usage or config errors, 3 when a computation raises.  Fitted
rates only ever produce warnings.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundReport, check_buff, check_param_upper, check_telescope_identity, check_upper, critical_points
from .discrepancy import (DiscrepancyReport, fit_rate, potential_discrepancy, potential_weak_gap, proximity,
                          weak_gap)
from .errors import ConfigError, CriticalOrbitPoint, CriticalParameter, DegenerateSeries, PullbackLabError
from .green import constant_Cf, fs_sample, green_array
from .measures import balance_residual, brolin_sample, circle_measure, exceptional_set, pullback_measure
from .poly import Poly
from .roots import STRATEGIES, SolverConfig
from .unicritical import (UnicriticalFamily, param_potential_discrepancy, param_proximity, param_weak_gap,
                          unicritical_log_identity)

BUILD_TAG = f"v{__version__}"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    map: str | None = None
    d: int | None = None
    n_min: int | None = None
    n_max: int | None = None
    a: tuple = (1 + 0j,)
    samples: int = 10_000
    seed: int = 0
    strategy: str = "expand_aberth"
    out_dir: str = "runs"
    tol: float | None = None
    points: int = 100
    depth: int = 18
    ref_atoms: int | None = None
    workers: int = 1

    def validate(self):
        if self.samples < 1000:
            raise ConfigError("samples must be >= 1000")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.n_min is not None and self.n_max is not None and not 1 <= self.n_min <= self.n_max:
            raise ConfigError("need 1 <= n-min <= n-max")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.points < 1 or self.depth < 1 or self.workers < 1:
            raise ConfigError("points, depth and workers must be positive")
        return self

    def echo(self) -> dict:
        # the output location is left out so that manifests compare across directories
        out = asdict(self)
        del out["out_dir"]
        out["a"] = [format_complex(a) for a in self.a]
        return out


def parse_complex(text: str) -> complex:
    t = text.strip().lower().replace(" ", "")
    if t in ("inf", "infinity", "oo"):
        return complex(math.inf, 0.0)
    if t.endswith("i"):
        t = t[:-1] + "j"
    if t in ("j", "+j", "-j"):
        t = t.replace("j", "1j")
    try:
        return complex(t)
    except ValueError:
        raise ConfigError(f"cannot parse complex number {text!r}") from None


def format_complex(c: complex) -> str:
    c = complex(c)
    if math.isinf(c.real) or math.isinf(c.imag):
        return "inf"

    def part(x):
        return repr(int(x)) if x == int(x) and abs(x) < 1e15 else repr(x)

    if c.imag == 0:
        return part(c.real)
    if c.real == 0:
        return part(c.imag) + "j"
    sign = "+" if c.imag > 0 else "-"
    return f"{part(c.real)}{sign}{part(abs(c.imag))}j"


def parse_map(spec: str):
    """A Poly or a UnicriticalFamily from a map spec."""
    s = spec.strip()
    kind, _, rest = s.partition(":")
    try:
        if kind == "monomial" and rest:
            return Poly.monomial(int(rest))
        if kind == "unicritical" and rest:
            return UnicriticalFamily(int(rest))
    except ValueError as exc:
        raise ConfigError(f"bad map spec {spec!r}: {exc}") from None
    coeffs = [parse_complex(c) for c in s.split(",")]
    if len(coeffs) < 3:
        raise ConfigError(f"map {spec!r} must have degree at least 2")
    try:
        return Poly(tuple(coeffs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def map_id(obj) -> str:
    if isinstance(obj, UnicriticalFamily):
        return obj.map_id
    return "poly:" + ",".join(format_complex(c) for c in obj.coeffs)


_INT_KEYS = {"d", "n_min", "n_max", "samples", "seed", "points", "depth", "ref_atoms", "workers"}
_FLOAT_KEYS = {"tol"}
_STR_KEYS = {"map", "strategy", "out_dir"}


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    if key == "a":
        return tuple(parse_complex(v) for v in value.split(";" if ";" in value else ","))
    if key in _STR_KEYS:
        return value
    raise ConfigError(f"unknown config key {key!r}")


def read_config_file(path: str) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, value.strip())
    return out


# ---------------------------------------------------------------------------
# recipe plumbing


@dataclass
class RecipeResult:
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def cell_seed(seed: int, *key) -> int:
    """Independent seed for one grid cell, from a hash of (seed, key)."""
    text = "|".join([str(seed)] + [format_complex(k) if isinstance(k, complex) else str(k) for k in key])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def _n_range(cfg: ExperimentConfig, lo: int, hi: int) -> range:
    n_min = cfg.n_min if cfg.n_min is not None else min(lo, cfg.n_max or lo)
    n_max = cfg.n_max if cfg.n_max is not None else max(hi, n_min)
    if n_min > n_max:
        raise ConfigError("n-min exceeds n-max")
    return range(n_min, n_max + 1)


def _dynamic_map(cfg: ExperimentConfig, default: str) -> Poly:
    if cfg.map is None and cfg.d is not None:
        return Poly.monomial(cfg.d)
    f = parse_map(cfg.map or default)
    if not isinstance(f, Poly):
        raise ConfigError("this recipe needs a polynomial map, not a family")
    return f


def _family(cfg: ExperimentConfig) -> UnicriticalFamily:
    if cfg.map is not None:
        fam = parse_map(cfg.map)
        if not isinstance(fam, UnicriticalFamily):
            raise ConfigError("this recipe needs --map unicritical:D (or --d D)")
        return fam
    try:
        return UnicriticalFamily(cfg.d or 2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _finite_nonzero(cfg: ExperimentConfig):
    for a in cfg.a:
        if a == 0 or math.isinf(abs(a)):
            raise ConfigError("discrepancy recipes need finite nonzero values of a")


def _map_cells(fn, cells, workers: int):
    if workers == 1:
        return [fn(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*cells)))


def _fit_summary(res: RecipeResult, reports, column: str, rho_max: float, label: str):
    """Fit a geometric rate to one column per value of a; warn, never fail."""
    fits = {}
    for a in sorted({r.a for r in reports}, key=lambda c: (c.real, c.imag)):
        series = [(r.n, getattr(r, column)) for r in reports if r.a == a]
        key = format_complex(a)
        try:
            rho, c, r2 = fit_rate(series)
        except DegenerateSeries as exc:
            res.warnings.append(f"a={key}: no rate fitted ({exc})")
            continue
        fits[key] = {"column": column, "rho": rho, "c": c, "r2": r2}
        if rho > rho_max:
            res.warnings.append(f"a={key}: fitted rho {rho:.4f} for {column} exceeds {rho_max} ({label})")
    res.summary["fits"] = fits


def _monotone_summary(res: RecipeResult, reports, column: str, errs: dict):
    for a in sorted({r.a for r in reports}, key=lambda c: (c.real, c.imag)):
        rows = sorted((r for r in reports if r.a == a), key=lambda r: r.n)
        for prev, cur in zip(rows, rows[1:]):
            v0, v1 = getattr(prev, column), getattr(cur, column)
            slack = errs.get((prev.n, a), 0.0) + errs.get((cur.n, a), 0.0)
            if v1 >= v0 + slack:
                res.warnings.append(f"a={format_complex(a)}: {column} does not decrease from n={prev.n} to n={cur.n}")


def _discrepancy_table(recipe: str, reports) -> str:
    return DiscrepancyReport.to_csv(reports, {"recipe": recipe, "build": BUILD_TAG})


# ---------------------------------------------------------------------------
# recipes over measures


def _is_monomial(f: Poly) -> bool:
    return all(complex(c) == 0 for c in f.coeffs[:-1])


def _pullback_cell(f: Poly, n: int, a: complex, strategy: str, samples: int, seed: int):
    mu = pullback_measure(f, n, a, SolverConfig(strategy=strategy))
    pot = potential_discrepancy(f, n, a, samples, seed)
    prox = proximity(f, n, a, samples, seed)
    return mu, float(pot), pot.stderr, float(prox)


def _pullback_rows(recipe, cfg, f, ns, reference, res: RecipeResult, oracle: bool):
    cells = [(f, n, a, cfg.strategy, cfg.samples, cell_seed(cfg.seed, n, a)) for n in ns for a in cfg.a]
    outs = _map_cells(_pullback_cell, cells, cfg.workers)
    reports, errs, oracle_errs = [], {}, {}
    for (_, n, a, _, _, s), (mu, pot, pot_err, prox) in zip(cells, outs):
        m = f.degree**n - 1
        if abs(mu.mass - 1.0) > 1e-9 or len(mu) > m:
            res.failures.append(f"n={n}, a={format_complex(a)}: root set does not carry d^n-1 roots")
        if oracle:
            err = _monomial_oracle_cell(f, n, a, mu)
            oracle_errs[f"n={n},a={format_complex(a)}"] = err
            tol = cfg.tol if cfg.tol is not None else 1e-10
            if not err <= tol:
                res.failures.append(f"n={n}, a={format_complex(a)}: roots miss the closed form by {err:.3g}")
        reports.append(DiscrepancyReport(map_id(f), n, a, weak_gap(mu, reference), pot, prox, cfg.samples, s))
        errs[(n, a)] = pot_err
    if oracle:
        res.summary["oracle_max_error"] = oracle_errs
    return reports, errs


def _monomial_oracle_cell(f: Poly, n: int, a: complex, mu) -> float:
    """Largest distance between the atoms and the closed-form roots for c z^d."""
    d = f.degree
    m = d**n - 1
    lead = complex(f.lead)
    # (c z^d)^n = c^{(d^n-1)/(d-1)} z^{d^n}, so its derivative is d^n c^k z^m
    w = complex(a) / (lead ** ((d**n - 1) // (d - 1)) * d**n)
    if mu.points.size != m:
        return math.inf
    r = abs(w) ** (1.0 / m)
    base = np.angle(w) / m
    k = np.round((np.angle(mu.points) - base) * m / (2.0 * np.pi)).astype(int) % m
    if np.unique(k).size != m:
        return math.inf
    exact = r * np.exp(1j * (base + 2.0 * np.pi * k / m))
    return float(np.max(np.abs(mu.points - exact)))


def _reference_measure(f: Poly, cfg: ExperimentConfig, res: RecipeResult):
    if _is_monomial(f):
        count = cfg.ref_atoms or 100_000
        res.summary["reference"] = f"circle radius |c|^(-1/(d-1)), {count} atoms"
        radius = abs(complex(f.lead)) ** (-1.0 / (f.degree - 1))
        return circle_measure(count, radius)
    count = cfg.ref_atoms or 100_000
    z0 = _brolin_start(f)
    res.summary["reference"] = f"backward orbits from {format_complex(z0)}, depth {cfg.depth}, {count} atoms"
    return brolin_sample(f, z0, cfg.depth, count, cell_seed(cfg.seed, "reference"))


def _brolin_start(f: Poly) -> complex:
    excl = exceptional_set(f)
    for z0 in (0j, 1 + 0j, 1j):
        if all(np.isinf(e) or abs(z0 - e) > 1e-8 for e in excl):
            return z0
    return 2 + 0j


def recipe_remark_zd(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    if cfg.map is not None:
        raise ConfigError("remark-zd takes --d, not --map")
    _finite_nonzero(cfg)
    f = Poly.monomial(cfg.d or 2)
    ns = _n_range(cfg, 4, 10)
    reference = _reference_measure(f, cfg, res)
    reports, errs = _pullback_rows("remark-zd", cfg, f, ns, reference, res, oracle=True)
    _fit_summary(res, reports, "weak_gap", 0.62, "expected about 1/d with the n d^-n factor")
    res.tables["remark-zd.csv"] = _discrepancy_table("remark-zd", reports)
    return res


def recipe_thm_a_weak(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    _finite_nonzero(cfg)
    f = _dynamic_map(cfg, "i,0,1")
    ns = _n_range(cfg, 2, 8)
    reference = _reference_measure(f, cfg, res)
    reports, errs = _pullback_rows("thm-a-weak", cfg, f, ns, reference, res, oracle=False)
    _monotone_summary(res, reports, "potential_l1", errs)
    res.tables["thm-a-weak.csv"] = _discrepancy_table("thm-a-weak", reports)
    return res


def _potential_cell(f: Poly, n: int, a: complex, samples: int, seed: int):
    wg = potential_weak_gap(f, n, a, samples, seed)
    pot = potential_discrepancy(f, n, a, samples, seed)
    prox = proximity(f, n, a, samples, seed)
    return float(wg), float(pot), pot.stderr, float(prox)


def recipe_thm_b_rate(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    _finite_nonzero(cfg)
    f = _dynamic_map(cfg, "i,0,1")
    ns = _n_range(cfg, 4, 12)
    cells = [(f, n, a, cfg.samples, cell_seed(cfg.seed, n, a)) for n in ns for a in cfg.a]
    outs = _map_cells(_potential_cell, cells, cfg.workers)
    reports, errs = [], {}
    for (_, n, a, _, s), (wg, pot, pot_err, prox) in zip(cells, outs):
        reports.append(DiscrepancyReport(map_id(f), n, a, wg, pot, prox, cfg.samples, s))
        errs[(n, a)] = pot_err
    _monotone_summary(res, reports, "potential_l1", errs)
    _fit_summary(res, reports, "potential_l1", 0.7, "expected below eta/d for eta near 1")
    res.tables["thm-b-rate.csv"] = _discrepancy_table("thm-b-rate", reports)
    return res


def _param_cell(fam: UnicriticalFamily, n: int, a: complex, samples: int, seed: int):
    wg = param_weak_gap(fam, n, a, samples, seed)
    pot = param_potential_discrepancy(fam, n, a, samples, seed)
    prox = param_proximity(fam, n, a, samples, seed)
    return float(wg), float(pot), pot.stderr, float(prox)


def recipe_thm_c_param(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    _finite_nonzero(cfg)
    fam = _family(cfg)
    ns = _n_range(cfg, 4, 12)
    cells = [(fam, n, a, cfg.samples, cell_seed(cfg.seed, n, a)) for n in ns for a in cfg.a]
    outs = _map_cells(_param_cell, cells, cfg.workers)
    reports, errs = [], {}
    for (_, n, a, _, s), (wg, pot, pot_err, prox) in zip(cells, outs):
        reports.append(DiscrepancyReport(fam.map_id, n, a, wg, pot, prox, cfg.samples, s))
        errs[(n, a)] = pot_err
    _monotone_summary(res, reports, "potential_l1", errs)
    _fit_summary(res, reports, "potential_l1", 0.65, "expected near 1/d")
    res.tables["thm-c-param.csv"] = _discrepancy_table("thm-c-param", reports)
    return res


# ---------------------------------------------------------------------------
# recipes over exact identities and bounds


IDENTITY_HEADER = ["recipe", "map_id", "n", "z_re", "z_im", "residual", "status", "seed", "build"]


def _escaping_points(f: Poly, count: int, seed: int) -> np.ndarray:
    pool = max(4 * count, 1000)
    while True:
        z = fs_sample(seed, pool)
        g, err, esc = green_array(f, z)
        z = z[esc & (g > err)]
        if z.size >= count or pool > 1 << 22:
            return z[:count]
        pool *= 4


def recipe_telescope_identity(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    f = _dynamic_map(cfg, "i,0,1")
    ns = _n_range(cfg, 6, 6)
    tol = cfg.tol if cfg.tol is not None else 1e-8
    crit = critical_points(f)
    res.summary["critical_points"] = [[format_complex(w), k] for w, k in crit]
    if sum(k for _, k in crit) != f.degree - 1:
        res.failures.append("critical multiplicities do not sum to d - 1")
    rows, worst, skipped = [], 0.0, 0
    for n in ns:
        s = cell_seed(cfg.seed, n)
        for z in _escaping_points(f, cfg.points, s):
            try:
                r = check_telescope_identity(f, n, complex(z), crit)
                status = "ok" if r <= tol else "fail"
                worst = max(worst, r)
            except CriticalOrbitPoint:
                r, status = math.nan, "skipped"
                skipped += 1
            rows.append(["lemma-3-2-identity", map_id(f), n, _num(z.real), _num(z.imag), _num(r), status, s,
                         BUILD_TAG])
    res.summary.update({"max_residual": worst, "tol": tol, "skipped": skipped, "checked": len(rows) - skipped})
    if not worst <= tol:
        res.failures.append(f"identity residual {worst:.3g} exceeds {tol:g}")
    res.tables["lemma-3-2-identity.csv"] = _csv(IDENTITY_HEADER, rows)
    return res


def recipe_param_identity(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    fam = _family(cfg)
    ns = _n_range(cfg, 1, 8)
    tol = cfg.tol if cfg.tol is not None else 1e-8
    rows, worst, skipped = [], 0.0, 0
    for n in ns:
        s = cell_seed(cfg.seed, n)
        for lam in fs_sample(s, cfg.points):
            try:
                r = unicritical_log_identity(fam, n, complex(lam))
                status = "ok" if r <= tol else "fail"
                worst = max(worst, r)
            except CriticalParameter:
                r, status = math.nan, "skipped"
                skipped += 1
            rows.append(["lemma-5-2-identity", fam.map_id, n, _num(lam.real), _num(lam.imag), _num(r), status, s,
                         BUILD_TAG])
    res.summary.update({"max_residual": worst, "tol": tol, "skipped": skipped, "checked": len(rows) - skipped})
    if not worst <= tol:
        res.failures.append(f"identity residual {worst:.3g} exceeds {tol:g}")
    res.tables["lemma-5-2-identity.csv"] = _csv(IDENTITY_HEADER, rows)
    return res


BOUND_HEADER = ["recipe", "map_id", "n", "check", "checked", "violations", "skipped", "worst_margin", "seed", "build"]
VIOLATION_HEADER = ["recipe", "map_id", "n", "re", "im", "quantity", "bound"]


def _bound_tables(res: RecipeResult, recipe: str, mid: str, reps: list[tuple[int, BoundReport, int]]):
    rows, bad = [], []
    for n, rep, s in reps:
        rows.append([recipe, mid, n, rep.name, rep.checked, rep.violations, rep.skipped, _num(rep.worst_margin), s,
                     BUILD_TAG])
        bad.extend([recipe, mid, n, _num(z.real), _num(z.imag), _num(q), _num(b)] for z, q, b in rep.details)
        if rep.violations:
            res.failures.append(f"{rep.name}: {rep.violations} violations of {rep.checked}")
    res.tables[f"{recipe}.csv"] = _csv(BOUND_HEADER, rows)
    res.tables[f"{recipe}_violations.csv"] = _csv(VIOLATION_HEADER, bad)
    res.summary["violations"] = sum(rep.violations for _, rep, _ in reps)
    res.summary["checked"] = sum(rep.checked for _, rep, _ in reps)


def recipe_upper_bound(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    f = _dynamic_map(cfg, "i,0,1")
    ns = _n_range(cfg, 1, 10)
    C = 1.05 * constant_Cf(f, seed=cell_seed(cfg.seed, "constant"))
    res.summary["C_f_inflated"] = C
    reps = []
    for n in ns:
        s = cell_seed(cfg.seed, n)
        reps.append((n, check_upper(f, n, cfg.samples, s, C=C), s))
    _bound_tables(res, "lemma-3-3-bound", map_id(f), reps)
    return res


def recipe_buff(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    f = _dynamic_map(cfg, "0,0,1")
    s = cell_seed(cfg.seed, 1)
    _bound_tables(res, "buff", map_id(f), [(1, check_buff(f, cfg.samples, s), s)])
    return res


def recipe_param_bound(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    fam = _family(cfg)
    ns = _n_range(cfg, 1, 10)
    reps = []
    for n in ns:
        s = cell_seed(cfg.seed, n)
        reps.append((n, check_param_upper(fam, n, cfg.samples, s), s))
    _bound_tables(res, "lemma-5-1", fam.map_id, reps)
    return res


def recipe_brolin_balance(cfg: ExperimentConfig) -> RecipeResult:
    res = RecipeResult()
    f = _dynamic_map(cfg, "i,0,1")
    tol = cfg.tol if cfg.tol is not None else 1e-4
    z0 = _brolin_start(f)
    s = cell_seed(cfg.seed, "brolin", cfg.depth)
    mu = brolin_sample(f, z0, cfg.depth, cfg.samples, s)
    resid = balance_residual(f, mu)
    g, err, _ = green_array(f, mu.points)
    top = float(np.max(g + err))
    res.summary.update({"start": format_complex(z0), "balance_residual": resid, "max_green_bound": top,
                        "green_tol": tol})
    if not top <= tol:
        res.failures.append(f"atoms with certified Green value above {tol:g} (max {top:.3g})")
    if resid > 0.05:
        res.warnings.append(f"balance residual {resid:.4f} exceeds 0.05")
    header = ["recipe", "map_id", "depth", "count", "balance_residual", "max_green_bound", "seed", "build"]
    res.tables["brolin-balance.csv"] = _csv(header, [["brolin-balance", map_id(f), cfg.depth, cfg.samples,
                                                      _num(resid), _num(top), s, BUILD_TAG]])
    res.tables["brolin-balance_atoms.csv"] = mu.to_csv()
    return res


RECIPES = {
    "thm-a-weak": recipe_thm_a_weak,
    "thm-b-rate": recipe_thm_b_rate,
    "thm-c-param": recipe_thm_c_param,
    "remark-zd": recipe_remark_zd,
    "lemma-3-2-identity": recipe_telescope_identity,
    "lemma-3-3-bound": recipe_upper_bound,
    "buff": recipe_buff,
    "lemma-5-1": recipe_param_bound,
    "lemma-5-2-identity": recipe_param_identity,
    "brolin-balance": recipe_brolin_balance,
}


# ---------------------------------------------------------------------------
# entry points


def run_recipe(name: str, cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run one recipe, write its files, and return (exit status, manifest)."""
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe {name!r}")
    cfg.validate()
    out = Path(cfg.out_dir)
    manifest = {"recipe": name, "build": BUILD_TAG, "config": cfg.echo()}
    try:
        res = RECIPES[name](cfg)
    except ConfigError:
        raise
    except PullbackLabError as exc:
        manifest.update({"status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}})
        _write(out, name, {}, manifest)
        return EXIT_ERROR, manifest
    status = EXIT_FAIL if res.failures else EXIT_OK
    manifest.update({
        "status": "fail" if res.failures else "ok",
        "summary": res.summary,
        "failures": res.failures,
        "warnings": res.warnings,
    })
    _write(out, name, res.tables, manifest)
    return status, manifest


def _write(out: Path, name: str, tables: dict, manifest: dict):
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for fname, text in tables.items():
        (out / fname).write_text(text)
        digests[fname] = hashlib.sha256(text.encode()).hexdigest()
    manifest["outputs"] = digests
    (out / f"{name}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, complex):
        return format_complex(x)
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pullback-lab", description="Run a named experiment recipe.")
    p.add_argument("recipe", choices=sorted(RECIPES), metavar="RECIPE",
                   help="one of: " + ", ".join(RECIPES))
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--map", help="monomial:D, unicritical:D or ascending coefficients c0,...,cd")
    p.add_argument("--d", type=int)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--a", help="comma-separated values of a")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--out-dir")
    p.add_argument("--tol", type=float)
    p.add_argument("--points", type=int, help="points per n for identity recipes")
    p.add_argument("--depth", type=int, help="backward-orbit depth")
    p.add_argument("--ref-atoms", type=int, help="atoms in the reference measure")
    p.add_argument("--workers", type=int, help="processes for the (n, a) grid")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in ("map", "d", "n_min", "n_max", "samples", "seed", "strategy", "out_dir", "tol", "points", "depth",
                "ref_atoms", "workers"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.a is not None:
        values["a"] = _coerce("a", args.a)
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        status, manifest = run_recipe(args.recipe, cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"pullback-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for w in manifest.get("warnings", []):
        print(f"warning: {w}", file=sys.stderr)
    for msg in manifest.get("failures", []):
        print(f"FAIL: {msg}", file=sys.stderr)
    if "error" in manifest:
        print(f"error: {manifest['error']['type']}: {manifest['error']['message']}", file=sys.stderr)
    print(f"{args.recipe}: {manifest['status']} -> {Path(cfg.out_dir) / (args.recipe + '.json')}")
    return status


if __name__ == "__main__":
    sys.exit(main())
