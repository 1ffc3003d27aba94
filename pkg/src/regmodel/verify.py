"""Invariant suites: algebra, model, estimates, oracle.

Each suite returns a list of Check records; a suite passes when all of its
checks do.  Report rows (slopes, constants, convergence tables) are
collected alongside for CSV output.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import estimates as E
from . import oracle as O
from .config import RunConfig
from .group import GroupElement, compose, invert, matmul, random_characters
from .model import (
    build_centered,
    build_premodel,
    evaluate_model,
    recentred_premodel,
    reexpand,
)
from .multiindex import (
    MultiIndex,
    Window,
    bracket,
    en,
    enumerate_V,
    hom_less,
    is_pc1,
    is_populated,
    is_purely_polynomial,
    poly_label,
    poly_weight,
    precedence,
    render,
)
from .series import FormalSeries, multiply
from .torus import FourierField, Polynomial, PolyPeriodic, heat_residual

SUITES = ("algebra", "model", "estimates", "oracle")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def line(self) -> str:
        v = "" if self.value is None else f" value={self.value:.3e}"
        t = "" if self.threshold is None else f" threshold={self.threshold:.3e}"
        d = f" ({self.detail})" if self.detail else ""
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}/{self.name}{v}{t}{d}"

    def as_dict(self) -> dict:
        return {"suite": self.suite, "name": self.name, "pass": bool(self.passed),
                "value": self.value, "threshold": self.threshold, "detail": self.detail}


@dataclass
class SuiteResult:
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> list of row dicts

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *checks):
        self.checks.extend(checks)

    def extend(self, other: "SuiteResult"):
        self.checks.extend(other.checks)
        for k, v in other.tables.items():
            self.tables.setdefault(k, []).extend(v)


class Context:
    """Models built from a run configuration; shared across suites."""

    def __init__(self, config: RunConfig, premodel=None, threads: int = 1, beta_filter=None):
        self.config = config
        self.threads = max(1, int(threads))
        self.beta_filter = beta_filter
        self._pm = premodel
        self._centered = None
        self._n0 = None
        self._sweeps = None

    @property
    def window(self) -> Window:
        return self.config.window()

    @property
    def noise(self) -> FourierField:
        return self.config.noise_field()

    @property
    def premodel(self):
        if self._pm is None:
            self._pm = build_premodel(self.noise, self.window)
        return self._pm

    def map(self, f, items) -> list:
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [f(i) for i in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(f, items))

    @property
    def centered(self) -> list:
        if self._centered is None:
            pm = self.premodel
            self._centered = self.map(lambda x: build_centered(pm, x), self.config.base_points)
        return self._centered

    @property
    def N0(self) -> float:
        if self._n0 is None:
            self._n0 = E.noise_norm(self.premodel.noise, self.config.t_grid, alpha=self.config.alpha)
        return self._n0

    @property
    def sweeps(self) -> list:
        """Per base point: (model, reexpansion, character, rhs) reports."""
        if self._sweeps is None:
            self._sweeps = self.map(lambda c: slope_sweeps(self, c, self.N0), self.centered)
        return self._sweeps

    def selected(self, indices) -> list:
        if self.beta_filter is None:
            return list(indices)
        return [b for b in indices if self.beta_filter(b)]


# -- algebra ------------------------------------------------------------------

def split_counts(window: Window):
    """can(d, l): d is a sum of l populated indices."""

    @lru_cache(maxsize=None)
    def can(delta: MultiIndex, l: int) -> bool:
        if l == 0:
            return delta == MultiIndex()
        if l == 1:
            return is_populated(delta)
        return any(is_populated(g) and can(delta - g, l - 1) for g in delta.sub_indices())

    return can


def decomposition_violations(window: Window) -> tuple:
    """Populated decompositions e_l + b_1 + ... + b_(l+1) = b with some b_i not preceding b."""
    can = split_counts(window)
    pops = [b for b in enumerate_V(window.cutoff, window.lam, window.alpha) if is_populated(b)]
    bad, seen = [], 0
    for beta in pops:
        pb = precedence(beta, window.lam, window.alpha)
        for l, _ in beta.kpart:
            rest = beta - MultiIndex.ek(l)
            for g in rest.sub_indices():
                if not is_populated(g) or not can(rest - g, l):
                    continue
                seen += 1
                if not precedence(g, window.lam, window.alpha) < pb:
                    bad.append((beta, g))
    return seen, bad


def _binomial_row(n, h) -> dict:
    out = {}
    for m1 in range(n[0] + 1):
        for m2 in range(n[1] + 1):
            if (m1, m2) == (0, 0):
                continue
            v = math.comb(n[0], m1) * math.comb(n[1], m2) * h[0] ** (n[0] - m1) * h[1] ** (n[1] - m2)
            if v != 0:
                out[en((m1, m2))] = v
    return out


def family_checks(window: Window, seed: int) -> dict:
    """Exact checks on one seeded random character family; maps name -> ok."""
    rng = np.random.default_rng(seed)
    ch = random_characters(window, rng, density=0.6)
    chp = random_characters(window, np.random.default_rng(10_000 + seed), density=0.6)
    g, gp = GroupElement(ch), GroupElement(chp)
    scope = g.scope
    ok = {}
    gc = compose(g, gp)
    ok["composition"] = gc.matrix() == matmul(g.matrix(), gp.matrix(), scope)
    ok["shift_additivity"] = gc.chars.shift == (ch.shift[0] + chp.shift[0], ch.shift[1] + chp.shift[1])
    ident = {b: {b: 1} for b in scope}
    gi = invert(g)
    ok["inverse"] = compose(g, gi).matrix() == ident and compose(gi, g).matrix() == ident
    tri = True
    for b in scope:
        for c, v in g.row(b).items():
            if c == b:
                tri &= v == 1
            else:
                tri &= hom_less(c, b) and precedence(c, window.lam, window.alpha) < precedence(b, window.lam, window.alpha)
    ok["triangularity"] = tri
    rows = True
    for b in scope:
        if is_purely_polynomial(b):
            n = poly_label(b)
            rows &= g.polynomial_row(n) == _binomial_row(n, ch.shift)
            rows &= {k: v for k, v in g.row(b).items() if is_purely_polynomial(k)} == _binomial_row(n, ch.shift)
    ok["binomial_rows"] = rows
    tilde = [b for b in scope if is_populated(b) and not is_purely_polynomial(b)]

    def rand_series():
        return FormalSeries({b: Fraction(int(rng.integers(-4, 5)), 3) for b in tilde if rng.random() < 0.4}, window)

    p1, p2 = rand_series(), rand_series()
    sset = set(scope)
    lhs = g.apply(multiply(p1, p2))
    rhs = multiply(g.apply(p1), g.apply(p2)).truncate(window)
    rhs = FormalSeries({b: c for b, c in rhs.coeffs.items() if bracket(b) >= -1 and b in sset}, window)
    ok["multiplicativity"] = lhs == rhs
    return ok


def algebra_suite(ctx: Context, families: int | None = None) -> SuiteResult:
    w = ctx.config.algebra_window()
    families = ctx.config.algebra_families if families is None else families
    res = SuiteResult()
    seeds = [ctx.config.noise_seed * 1000 + i for i in range(families)]
    outs = ctx.map(lambda s: family_checks(w, s), seeds)
    for name in ("composition", "inverse", "multiplicativity", "triangularity", "binomial_rows", "shift_additivity"):
        bad = [s for s, o in zip(seeds, outs) if not o[name]]
        res.add(Check("algebra", name, not bad, float(len(bad)), 0.0,
                      f"{families} families" + (f", failing seeds {bad[:5]}" if bad else "")))
    seen, bad = decomposition_violations(w)
    res.add(Check("algebra", "decomposition_precedence", not bad and seen > 0, float(len(bad)), 0.0,
                  f"{seen} decompositions"))
    return res


# -- model --------------------------------------------------------------------

def premodel_checks(pm, tol_residual: float = 1e-10, tol_P: float = 1e-10) -> SuiteResult:
    res = SuiteResult()
    worst = 0.0
    degree_ok, poly_ok = True, True
    for b in pm.indices:
        r = heat_residual(pm.Pi[b], pm.P[b], pm.rhs[b]) / max(1.0, pm.rhs[b].max_abs())
        worst = max(worst, r)
        degree_ok &= pm.Pi[b].degree() <= poly_weight(b)
        if is_purely_polynomial(b):
            U = pm.Pi[b]
            poly_ok &= set(U.terms) == {poly_label(b)} and U.terms[poly_label(b)].band == 0 \
                and U.terms[poly_label(b)].c[0, 0] == 1.0
    res.add(Check("model", "premodel_residual", worst <= tol_residual, worst, tol_residual))
    res.add(Check("model", "premodel_degree", degree_ok))
    res.add(Check("model", "polynomial_components", poly_ok))
    # support: non-populated right-hand sides vanish, except pc1 (polynomial)
    hier = pm.hierarchy()
    bad, scanned = [], 0
    for b in enumerate_V(pm.window.cutoff, pm.window.lam, pm.window.alpha):
        if is_populated(b):
            continue
        try:
            f = hier.rhs(b)
        except KeyError:
            continue
        scanned += 1
        if is_pc1(b):
            if any(g.band != 0 for g in f.terms.values()):
                bad.append(render(b))
        elif not f.is_zero():
            bad.append(render(b))
    res.add(Check("model", "support", not bad, float(len(bad)), 0.0, f"{scanned} non-populated indices scanned"))
    worst = 0.0
    for b in pm.indices + pm.pc1:
        expect = pm.rhs[b].average()
        if is_purely_polynomial(b):
            expect = expect - Polynomial.monomial(poly_label(b)).heat()
        worst = max(worst, (pm.P[b] - expect).max_abs())
    res.add(Check("model", "P_identity", worst <= tol_P, worst, tol_P))
    return res


def centered_checks(c, tol_vanish: float = 1e-8, tol_P: float = 1e-10, tol_fm: float = 1e-9) -> SuiteResult:
    res = SuiteResult()
    alpha = c.window.alpha
    x = np.asarray(c.base)
    tag = f"x=({c.base[0]:.4g},{c.base[1]:.4g})"
    worst_v, worst_P = 0.0, 0.0
    from .model import anchor_labels
    for b in c.indices:
        U = c.Pi[b]
        scale = max(U.max_abs(), 1e-300)
        for n in anchor_labels(b, alpha):
            worst_v = max(worst_v, abs(float(U.Dn(n).diag(x))) / scale)
        if not is_purely_polynomial(b):
            worst_P = max(worst_P, c.P[b].max_abs())
    res.add(Check("model", "anchoring", worst_v <= tol_vanish, worst_v, tol_vanish, tag))
    res.add(Check("model", "centered_P", worst_P <= tol_P, worst_P, tol_P, tag))
    rp = recentred_premodel(c)
    worst = max((rp[b] - c.Pi[b]).max_abs() / max(1.0, c.Pi[b].max_abs()) for b in c.indices)
    res.add(Check("model", "recentering", worst <= tol_fm, worst, tol_fm, tag))
    return res


def reexpansion_checks(cx, cy, cz, tol: float = 1e-9) -> SuiteResult:
    res = SuiteResult()
    tag = f"x=({cx.base[0]:.4g},{cx.base[1]:.4g}) y=({cy.base[0]:.4g},{cy.base[1]:.4g})"
    gyx = reexpand(cy, cx)
    K = cx.premodel.K
    w6, w15 = 0.0, 0.0
    for b in cx.indices:
        acc = PolyPeriodic.monomial((0, 0), float(gyx.shift_char(b)), K)
        for gam, m in gyx.gamma.row(b).items():
            if gam in cx.Pi:
                acc = acc + cx.Pi[gam].scale(float(m))
        sc = max(1.0, cy.Pi[b].max_abs())
        w6 = max(w6, (acc - cy.Pi[b]).max_abs() / sc)
        w15 = max(w15, abs(float(gyx.shift_char(b)) - float(evaluate_model(cy, b, np.asarray(cx.base)))) / sc)
    res.add(Check("model", "reexpansion", w6 <= tol, w6, tol, tag))
    res.add(Check("model", "shift_character", w15 <= tol, w15, tol, tag))
    gzy, gzx = reexpand(cz, cy), reexpand(cz, cx)
    rows = cx.indices
    prod = matmul(gzy.gamma.matrix(rows), {b: gyx.gamma.row(b) for b in gzy.gamma.scope}, rows)
    w12 = 0.0
    for b in rows:
        direct = gzx.gamma.row(b)
        for k in set(direct) | set(prod[b]):
            w12 = max(w12, abs(float(direct.get(k, 0)) - float(prod[b].get(k, 0))))
    res.add(Check("model", "transitivity", w12 <= tol, w12, tol, tag + f" z=({cz.base[0]:.4g},{cz.base[1]:.4g})"))
    return res


def model_suite(ctx: Context) -> SuiteResult:
    cfg = ctx.config
    res = premodel_checks(ctx.premodel, cfg.tol_residual, cfg.tol_residual)
    cs = ctx.centered
    for sub in ctx.map(lambda c: centered_checks(c, cfg.tol_vanish, cfg.tol_residual, cfg.tol_identity), cs):
        res.extend(sub)
    if len(cs) >= 3:
        triples = [(cs[i], cs[(i + 1) % len(cs)], cs[(i + 2) % len(cs)]) for i in range(len(cs))]
        for sub in ctx.map(lambda t: reexpansion_checks(*t, tol=cfg.tol_identity), triples):
            res.extend(sub)
    return _merge_named(res)


def _merge_named(res: SuiteResult) -> SuiteResult:
    """Collapse repeated checks of one name into a worst-case record."""
    out = SuiteResult(tables=res.tables)
    groups: dict = {}
    for c in res.checks:
        groups.setdefault((c.suite, c.name), []).append(c)
    for (suite, name), cs in groups.items():
        if len(cs) == 1:
            out.add(cs[0])
            continue
        fails = [c for c in cs if not c.passed]
        vals = [c.value for c in cs if c.value is not None]
        worst = max(vals) if vals else None
        detail = f"{len(cs)} instances"
        if fails:
            detail += f", {len(fails)} failing; first: {fails[0].detail}"
        out.add(Check(suite, name, not fails, worst, cs[0].threshold, detail))
    return out


# -- estimates --------------------------------------------------------------

def _slope_summary(name: str, reps: list, threshold: float) -> Check:
    real = [r for r in reps if not r.vacuous]
    fails = [r for r in reps if not r.passed]
    worst = min((r.margin for r in real), default=math.inf)
    det = f"{len(reps)} fits, {len(fails)} below tolerance, {len(reps) - len(real)} vacuous"
    if fails:
        f = min(fails, key=lambda r: r.margin)
        det += f"; worst {f.beta} / {f.other or '-'} at {f.base}: slope {f.fitted_slope:.3f} vs {f.expected:.3f}"
    return Check("estimates", name, not fails, worst, -threshold, det)


def slope_sweeps(ctx: Context, model, N0: float) -> tuple:
    cfg = ctx.config
    betas = ctx.selected(model.indices)
    mb = E.sweep_model_bound(model, cfg.radii, cfg.directions, N0, cfg.tol_slope, betas=betas)
    sre = E.SphereReexpansion(model, cfg.radii, cfg.directions)
    rx, ch = E.sweep_reexpansion(sre, N0, cfg.tol_slope, betas=betas)
    mins = [E.check_rhs_bound(model, b, cfg.t_grid, cfg.radii, cfg.rhs_directions, N0)
            for b in betas if not is_purely_polynomial(b)]
    return mb, rx, ch, mins


def _constants(reps, key=None) -> dict:
    return {(r.base, r.beta, r.other): r.fitted_constant for r in reps if not r.vacuous and r.fitted_constant > 0}


def _ratio(groups: dict) -> tuple:
    worst, arg = 1.0, None
    for k, vals in groups.items():
        vals = [v for v in vals if v > 0]
        if len(vals) < 2:
            continue
        r = max(vals) / min(vals)
        if r > worst:
            worst, arg = r, k
    return worst, arg


def bounds_suite(ctx: Context) -> SuiteResult:
    """Slope fits, right-hand side constants and amplitude stability."""
    cfg = ctx.config
    res = SuiteResult()
    sweeps = ctx.sweeps
    mb = [r for s in sweeps for r in s[0]]
    rx = [r for s in sweeps for r in s[1]]
    ch = [r for s in sweeps for r in s[2]]
    mins = [r for s in sweeps for r in s[3]]
    res.add(_slope_summary("model_bound_slopes", mb, cfg.tol_slope),
            _slope_summary("reexpansion_slopes", rx, cfg.tol_slope),
            _slope_summary("character_slopes", ch, cfg.tol_slope))
    res.tables["slopes"] = [row for r in mb + rx + ch for row in r.rows()]
    bad = [r for r in mins if not r.passed]
    worst = max((r.variation for r in mins), default=1.0)
    det = f"{len(mins)} indices over {len(ctx.centered)} base points, {len(bad)} above bound"
    if bad:
        b = max(bad, key=lambda r: r.variation)
        det += f"; worst {b.beta} at {b.base}"
    res.add(Check("estimates", "rhs_bound_variation", not bad, worst, cfg.rhs_variation, det))
    res.tables["rhs_constants"] = [
        {"base": " ".join(f"{v:.6g}" for v in r.base), "beta": r.beta, "t": t, "r": rr,
         "constant": float(r.constants[i, j]), "variation": r.variation, "pass": r.passed}
        for r in mins for i, t in enumerate(r.t_grid) for j, rr in enumerate(r.radii)]
    # across base points (informative surrogate of uniformity in x)
    groups: dict = {}
    for r in mb:
        if not r.vacuous and r.fitted_constant > 0:
            groups.setdefault(r.beta, []).append(r.fitted_constant)
    ratio, arg = _ratio(groups)
    res.add(Check("estimates", "base_point_constants", ratio < 4, ratio, 4.0,
                  f"model-bound constants across {len(ctx.centered)} base points" + (f"; worst {arg}" if arg else "")))
    res.extend(amplitude_stability(ctx))
    return res


def estimates_suite(ctx: Context) -> SuiteResult:
    res = bounds_suite(ctx)
    res.extend(reconstruction_suite(ctx))
    res.extend(integration_suite(ctx))
    return res


def amplitude_stability(ctx: Context, factors=(0.5, 1.0, 2.0)) -> SuiteResult:
    """Normalised empirical constants under rescaling of the noise amplitude."""
    cfg = ctx.config
    res = SuiteResult()
    per: dict = {}
    for f in factors:
        if f == 1.0:
            sweeps = ctx.sweeps
        else:
            sweeps = Context(cfg.replace(amplitude=cfg.amplitude * f), threads=ctx.threads,
                             beta_filter=ctx.beta_filter).sweeps
        for s in sweeps:
            for kind, reps in zip(("model", "reexpansion", "character"), s[:3]):
                for k, v in _constants(reps).items():
                    per.setdefault((kind,) + k, []).append(v)
            for r in s[3]:
                per.setdefault(("rhs", r.base, r.beta, ""), []).append(r.constant)
    ratio, arg = _ratio(per)
    res.add(Check("estimates", "amplitude_stability", ratio < 4, ratio, 4.0,
                  f"amplitudes x{list(factors)}, {len(per)} constants" + (f"; worst {arg}" if arg and ratio >= 4 else "")))
    return res


def _sample_betas(ctx, model, count: int, rng) -> list:
    cand = [b for b in ctx.selected(model.indices) if not is_purely_polynomial(b)]
    if count >= len(cand):
        return cand
    idx = sorted(rng.choice(len(cand), size=count, replace=False))
    return [cand[i] for i in idx]


def reconstruction_suite(ctx: Context) -> SuiteResult:
    cfg = ctx.config
    res = SuiteResult()
    rng = np.random.default_rng(cfg.noise_seed + 17)
    rows, worst = [], 0.0
    for c in ctx.centered[:2]:
        for b in _sample_betas(ctx, c, cfg.telescope_betas, rng):
            if not b.kpart:
                continue
            for t in cfg.telescope_t:
                z = np.asarray(c.base) + np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05)])
                lhs, rhs = E.reconstruction_decomposition_check(c, b, t, z)
                err = abs(lhs - rhs)
                worst = max(worst, err)
                rows.append({"base": " ".join(f"{v:.6g}" for v in c.base), "beta": render(b), "t": t,
                             "z1": z[0], "z2": z[1], "lhs": lhs, "rhs": rhs, "abs_error": err,
                             "pass": err <= cfg.tol_telescope})
    res.add(Check("estimates", "telescoping", bool(rows) and worst <= cfg.tol_telescope, worst, cfg.tol_telescope,
                  f"{len(rows)} samples"))
    res.tables["telescope"] = rows
    return res


def integration_suite(ctx: Context) -> SuiteResult:
    cfg = ctx.config
    res = SuiteResult()
    rng = np.random.default_rng(cfg.noise_seed + 29)
    rows, worst = [], 0.0
    for c in ctx.centered[:2]:
        betas = _sample_betas(ctx, c, cfg.schauder_betas, rng)
        for b in betas:
            pts = np.asarray(c.base) + np.column_stack([rng.uniform(-0.3, 0.3, 5), rng.uniform(-0.3, 0.3, 5)])
            dev = E.schauder_reproduction_check(c, b, pts, ctx.N0)
            worst = max(worst, dev)
            rows.append({"base": " ".join(f"{v:.6g}" for v in c.base), "beta": render(b),
                         "relative_deviation": dev, "pass": dev <= cfg.tol_reproduce})
    res.add(Check("estimates", "schauder_reproduction", bool(rows) and worst <= cfg.tol_reproduce, worst,
                  cfg.tol_reproduce, f"{len(rows)} indices, 5 points each"))
    res.tables["schauder"] = rows
    return res


# -- oracle -------------------------------------------------------------------

def oracle_suite(ctx: Context) -> SuiteResult:
    cfg = ctx.config
    res = SuiteResult()
    xi = FourierField.random_noise(cfg.noise_seed, cfg.max_mode, cfg.oracle_amplitude, cfg.fourier_modes)
    rows = []
    for kind in ("linear", "quadratic"):
        st = O.convergence_study(kind, xi, tol=cfg.tol_order)
        rows.extend(st.rows())
        for n in st.orders:
            res.add(Check("oracle", f"order_{kind}_N{n}", st.passed(n), st.fitted[n], n + 1 - cfg.tol_order,
                          "errors " + ", ".join(f"{e:.2e}" for e in st.errors[n])))
            ok = st.fitted_lambda[n] >= n + 1 - cfg.tol_order
            res.add(Check("oracle", f"order_{kind}_N{n}_constant", ok, st.fitted_lambda[n], n + 1 - cfg.tol_order,
                          "errors " + ", ".join(f"{e:.2e}" for e in st.errors_lambda[n])))
    res.tables["convergence"] = rows
    d = O.linear_check(xi)
    res.add(Check("oracle", "linear_case", d <= cfg.tol_picard * 10, d, cfg.tol_picard * 10))
    return res


SUITE_FUNCS = {"algebra": algebra_suite, "model": model_suite, "estimates": estimates_suite, "oracle": oracle_suite}


def run_suites(ctx: Context, suite: str = "all") -> dict:
    names = SUITES if suite == "all" else (suite,)
    return {n: SUITE_FUNCS[n](ctx) for n in names}
