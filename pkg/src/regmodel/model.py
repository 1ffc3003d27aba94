"""Pre-model, centered models and re-expansion maps.

The pre-model solves, for each multi-index b in length order,

    (D_2 - D_1^2) Pi_b + P_b = Pi^-_b,
    Pi^-_b = sum_k sum_{e_k + b_1 + ... + b_{k+1} = b} Pi_{b_1} ... Pi_{b_k} D_1^2 Pi_{b_{k+1}} + xi [b = 0],

with torus averages y^n at b = e_n and zero otherwise.  The centered model at
x is built by the same hierarchy, re-anchored by adding sum_n c_n y^n with
the unique constants making D^n Pi_{xb}(x, x) vanish for |n| < |b|; these
constants are the characters of F_x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .group import CharacterFamily, GroupElement, compose, invert
from .multiindex import (
    DEFAULT_ALPHA,
    DEFAULT_LAMBDA,
    MultiIndex,
    Window,
    bracket,
    enumerate_populated,
    enumerate_V,
    hom_value,
    is_pc1,
    is_populated,
    is_purely_polynomial,
    labels_up_to,
    poly_label,
    poly_weight,
    precedence,
    zero,
)
from .torus import (
    DEFAULT_MODES,
    FourierField,
    Polynomial,
    PolyPeriodic,
    heat_solve,
    pweight,
    shifted_power,
)


def build_order(indices, lam=DEFAULT_LAMBDA, alpha=DEFAULT_ALPHA):
    return sorted(indices, key=lambda b: (b.length, round(precedence(b, lam, alpha), 9), b.sort_key()))


def anchor_labels(beta: MultiIndex, alpha: float) -> list:
    """Labels n with |n| < |beta|, by descending weight then lexicographically."""
    h = hom_value(beta, alpha)
    labs = [n for n in labels_up_to(math.ceil(h) + 1, include_zero=True) if pweight(n) < h - 1e-12]
    return sorted(labs, key=lambda n: (-pweight(n), n))


def falling(n, m) -> int:
    """n! / (n-m)! for pairs, 0 unless m <= n."""
    if m[0] > n[0] or m[1] > n[1]:
        return 0
    return math.perm(n[0], m[0]) * math.perm(n[1], m[1])


class Hierarchy:
    """Right-hand sides Pi^-_b of the model hierarchy with memoised powers.

    ``solution`` maps built indices to PolyPeriodic values; indices absent
    from it are treated as zero only when they are not populated.
    """

    def __init__(self, noise: FourierField, solution: dict, K: int):
        self.noise = noise
        self.sol = solution
        self.K = K
        self._pow: dict = {}
        self._d2: dict = {}

    def _get(self, b: MultiIndex):
        if not is_populated(b):
            return None
        v = self.sol.get(b)
        if v is None:
            raise KeyError(f"missing dependency {b}")
        return v

    def d2(self, b: MultiIndex):
        v = self._d2.get(b)
        if v is None and b not in self._d2:
            s = self._get(b)
            v = None if s is None else s.D(1).D(1)
            if v is not None and v.is_zero():
                v = None
            self._d2[b] = v
        return v

    def power(self, k: int, g: MultiIndex):
        """The g-component of the k-th power of the solution series."""
        if k == 0:
            return PolyPeriodic.monomial((0, 0), 1.0, self.K) if g == zero() else None
        key = (k, g)
        if key in self._pow:
            return self._pow[key]
        if k == 1:
            out = self._get(g)
        else:
            out = None
            for g1 in g.sub_indices():
                if not is_populated(g1):
                    continue
                rest = self.power(k - 1, g - g1)
                if rest is None:
                    continue
                term = self._get(g1) * rest
                out = term if out is None else out + term
        if out is not None and out.is_zero():
            out = None
        self._pow[key] = out
        return out

    def rhs(self, beta: MultiIndex) -> PolyPeriodic:
        out = PolyPeriodic.from_field(self.noise) if beta == zero() else PolyPeriodic.zero(self.K)
        for k, _ in beta.kpart:
            rest = beta - MultiIndex.ek(k)
            for last in rest.sub_indices():
                if not is_populated(last):
                    continue
                p = self.power(k, rest - last)
                if p is None:
                    continue
                d2 = self.d2(last)
                if d2 is None:
                    continue
                out = out + p * d2
        return out


@dataclass
class PreModel:
    """Pre-model (Pi, P) on the populated indices of a truncation window."""

    noise: FourierField
    window: Window
    indices: list
    Pi: dict
    P: dict
    rhs: dict
    pc1: list = field(default_factory=list)
    max_degree: int = 0

    @property
    def K(self) -> int:
        return self.noise.K

    def hierarchy(self) -> Hierarchy:
        return Hierarchy(self.noise, self.Pi, self.K)


def scope_indices(window: Window) -> tuple:
    """Populated indices and (pc1)-indices with precedence within the cutoff."""
    pop = enumerate_populated(window.cutoff, window.lam, window.alpha)
    pc1 = [b for b in enumerate_V(window.cutoff, window.lam, window.alpha) if not is_populated(b) and is_pc1(b)]
    return pop, pc1


def build_premodel(noise: FourierField, window: Window, indices=None) -> PreModel:
    """Solve the hierarchy for all populated indices (and pc1 indices for P)."""
    if abs(noise.mean) > 1e-14 * max(1.0, noise.max_abs()):
        raise ValueError("noise must have vanishing average")
    pop, pc1 = scope_indices(window)
    if indices is not None:
        pop = list(indices)
        pc1 = [b for b in pc1 if all(s in set(pop) or not is_populated(s) for s in b.sub_indices())]
    dmax = max([poly_weight(b) for b in pop] + [0])
    K = noise.K
    Pi: dict = {}
    P: dict = {}
    rhs: dict = {}
    hier = Hierarchy(noise, Pi, K)
    for beta in build_order(pop + pc1, window.lam, window.alpha):
        f = hier.rhs(beta)
        rhs[beta] = f
        if is_populated(beta):
            q = Polynomial.monomial(poly_label(beta)) if is_purely_polynomial(beta) else None
            U, Pb = heat_solve(f, q, max_degree=dmax)
            Pi[beta] = U
            P[beta] = Pb
        else:
            # the right-hand side is a polynomial, absorbed in P
            P[beta] = f.average()
    return PreModel(noise, window, build_order(pop, window.lam, window.alpha), Pi, P, rhs, pc1, dmax)


def premodel_rhs(pm: PreModel, beta: MultiIndex) -> PolyPeriodic:
    """Pi^-_b recomputed from the stored components (missing ones are errors)."""
    return pm.hierarchy().rhs(beta)


# -- centered model ------------------------------------------------------------

@dataclass
class CenteredModel:
    base: tuple
    premodel: PreModel
    Pi: dict
    P: dict
    rhs: dict
    chars: CharacterFamily

    @property
    def window(self) -> Window:
        return self.premodel.window

    @property
    def indices(self) -> list:
        return self.premodel.indices


def anchoring_constants(U: PolyPeriodic, beta: MultiIndex, x, alpha: float) -> dict:
    """Constants c_n, |n| < |beta|, with D^m (U + sum_n c_n y^n)(x, x) = 0.

    Triangular in descending |m| with diagonal m!.
    """
    labs = anchor_labels(beta, alpha)
    xp = np.asarray(x, dtype=float)
    c: dict = {}
    for m in labs:
        val = float(U.Dn(m).diag(xp))
        for n, cn in c.items():
            f = falling(n, m)
            if f:
                val += cn * f * xp[0] ** (n[0] - m[0]) * xp[1] ** (n[1] - m[1])
        diag = math.factorial(m[0]) * math.factorial(m[1])
        c[m] = -val / diag
    return c


def build_centered(pm: PreModel, x) -> CenteredModel:
    """Centered model at base point x, together with its characters."""
    x = (float(x[0]), float(x[1]))
    w = pm.window
    K = pm.K
    Pi: dict = {}
    P: dict = {}
    rhs: dict = {}
    chars: dict = {}
    hier = Hierarchy(pm.noise, Pi, K)
    for beta in build_order(pm.indices + pm.pc1, w.lam, w.alpha):
        f = hier.rhs(beta)
        rhs[beta] = f
        if is_purely_polynomial(beta):
            m = poly_label(beta)
            Pi[beta] = shifted_power(m, x).to_polyperiodic(K)
            P[beta] = -shifted_power(m, x).heat()
            continue
        if not is_populated(beta):
            P[beta] = f.average()
            continue
        U, Pt = heat_solve(f, None, max_degree=pm.max_degree)
        c = anchoring_constants(U, beta, x, w.alpha)
        poly = Polynomial(c)
        Pi[beta] = U + poly
        P[beta] = Pt - poly.heat()
        for n, v in c.items():
            if v != 0.0:
                chars.setdefault(n, {})[beta] = v
    fam = CharacterFamily(chars, (-x[0], -x[1]), w)
    return CenteredModel(x, pm, Pi, P, rhs, fam)


def f_star(c: CenteredModel) -> GroupElement:
    return GroupElement(c.chars)


def evaluate_model(c: CenteredModel, beta: MultiIndex, y) -> np.ndarray:
    """Pi_{x b}(y) = diagonal value of the two-variable object."""
    if beta not in c.Pi:
        if beta in c.window and not is_populated(beta):
            return np.zeros(np.asarray(y, dtype=float).shape[:-1])
        raise KeyError(f"unknown index {beta}")
    return c.Pi[beta].diag(y)


def recentred_premodel(c: CenteredModel, g: GroupElement | None = None) -> dict:
    """(F_x Pi + pi_x^(0))_b as PolyPeriodic objects, for populated b."""
    g = g or f_star(c)
    pm = c.premodel
    K = pm.K
    out = {}
    for beta in pm.indices:
        acc = PolyPeriodic.zero(K)
        for gam, m in g.row(beta).items():
            v = pm.Pi.get(gam)
            if v is not None:
                acc = acc + v.scale(float(m))
        const = c.chars.value((0, 0), beta)
        if const:
            acc = acc + PolyPeriodic.monomial((0, 0), float(const), K)
        out[beta] = acc
    return out


# -- re-expansion ----------------------------------------------------------------

@dataclass
class ReExpansion:
    x: tuple
    y: tuple
    gamma: GroupElement

    @property
    def chars(self) -> CharacterFamily:
        return self.gamma.chars

    def shift_char(self, beta: MultiIndex):
        return self.chars.value((0, 0), beta)


def reexpand(cy: CenteredModel, cx: CenteredModel) -> ReExpansion:
    """Gamma_yx = F_y F_x^{-1}."""
    if cy.window != cx.window:
        raise ValueError("truncation mismatch")
    g = compose(f_star(cy), invert(f_star(cx)))
    return ReExpansion(cx.base, cy.base, g)


def reexpand_anchored(cx: CenteredModel, ys) -> GroupElement:
    """Gamma_yx at many points y at once, from the anchoring conditions.

    Characters are numpy arrays over the points.  In precedence order, the
    row b computed with the b-characters still zero gives
    G = sum_g row[g] Pi_{x g}; the b-characters enter only through the
    columns e_n and the constant, so

        Pi_{y b}(z) = G(z) + sum_{|n| < |b|} pi^(n)_b (z - x)^n,

    and D^m Pi_{y b}(y) = 0 for |m| < |b| is triangular with diagonal m!.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    x = np.asarray(cx.base, dtype=float)
    w = cx.window
    d = ys - x
    shift = (x[0] - ys[:, 0], x[1] - ys[:, 1])
    fam = CharacterFamily({}, shift, w, validate=False)
    g = GroupElement(fam)
    dcache: dict = {}

    def deriv(gam, m):
        key = (gam, m)
        v = dcache.get(key)
        if v is None:
            v = cx.Pi[gam].Dn(m).diag(ys)
            dcache[key] = v
        return v

    order = sorted((b for b in cx.indices if not is_purely_polynomial(b)),
                   key=lambda b: (round(precedence(b, w.lam, w.alpha), 9), b.sort_key()))
    for beta in order:
        row = g.row(beta)
        labs = anchor_labels(beta, w.alpha)
        c: dict = {}
        for m in labs:
            val = np.zeros(len(ys))
            for gam, coef in row.items():
                if gam in cx.Pi:
                    val = val + coef * deriv(gam, m)
            for n, cn in c.items():
                f = falling(n, m)
                if f:
                    val = val + cn * f * d[:, 0] ** (n[0] - m[0]) * d[:, 1] ** (n[1] - m[1])
            c[m] = -val / (math.factorial(m[0]) * math.factorial(m[1]))
        g._rows.pop(beta, None)
        for n, v in c.items():
            fam.chars.setdefault(n, {})[beta] = v
    return GroupElement(fam)
