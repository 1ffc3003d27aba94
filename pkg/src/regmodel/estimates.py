"""Empirical checks of the model bounds.

Bounds of the form |f| <~ C r^e are tested by least-squares slopes of
log sup_{|y-x| = r} |f(y)| against log r over dyadic radii, on values above
a float-noise floor relative to the coefficient scale of f.  The
reconstruction and integration steps are checked through exact identities
(dyadic telescoping, semigroup representation of the solution).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CenteredModel, Hierarchy, anchor_labels, evaluate_model, reexpand_anchored
from .multiindex import (
    DEFAULT_ALPHA,
    MultiIndex,
    bracket,
    hom_value,
    is_populated,
    is_purely_polynomial,
    precedence,
    render,
)
from .torus import (
    FourierField,
    PolyPeriodic,
    cc_distance,
    mollify_diag,
    mollify_pointwise,
    pweight,
    sphere_points,
)

DEFAULT_RADII = tuple(2.0 ** -np.arange(1, 7))
DEFAULT_T_GRID = tuple(2.0 ** -np.arange(4, 21))
FLOAT_FLOOR = 1e-12
SLOPE_TOL = 0.15


@dataclass
class SlopeReport:
    kind: str
    beta: str
    other: str
    radii: list
    sup_values: list
    fitted_slope: float
    fitted_constant: float
    expected: float
    tol: float = SLOPE_TOL
    used: int = 0
    vacuous: bool = False
    base: tuple = ()

    @property
    def passed(self) -> bool:
        return self.vacuous or self.fitted_slope >= self.expected - self.tol

    @property
    def margin(self) -> float:
        return math.inf if self.vacuous else self.fitted_slope - self.expected

    def rows(self) -> list:
        out = []
        for r, v in zip(self.radii, self.sup_values):
            out.append({
                "kind": self.kind, "base": " ".join(f"{c:.6g}" for c in self.base),
                "beta": self.beta, "gamma_or_n": self.other, "r": r, "sup_value": v,
                "slope": self.fitted_slope, "constant": self.fitted_constant,
                "expected": self.expected, "pass": self.passed,
            })
        return out


def fit_slopes(radii, sups: np.ndarray, scale: np.ndarray, floor: float = FLOAT_FLOOR):
    """Least-squares log-log slopes for many profiles at once.

    ``sups`` has shape (m, R); values not above floor * scale are dropped.
    Returns slopes, log-constants and the number of points used; profiles
    with fewer than two usable points get NaN.
    """
    lr = np.log(np.asarray(radii, dtype=float))
    sups = np.atleast_2d(np.asarray(sups, dtype=float))
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (sups.shape[0],))
    ok = sups > floor * scale[:, None]
    ok &= sups > 0
    cnt = ok.sum(axis=1)
    lv = np.where(ok, np.log(np.where(ok, sups, 1.0)), 0.0)
    w = ok.astype(float)
    n = np.maximum(cnt, 1)
    mx = (w * lr).sum(1) / n
    my = (w * lv).sum(1) / n
    sxx = (w * (lr - mx[:, None]) ** 2).sum(1)
    sxy = (w * (lr - mx[:, None]) * (lv - my[:, None])).sum(1)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(cnt >= 2, sxy / np.where(sxx > 0, sxx, 1.0), np.nan)
    logc = my - np.nan_to_num(slope) * mx
    return slope, logc, cnt


def _report(kind, beta, other, radii, sups, scale, expected, norm, base, tol):
    s, lc, cnt = fit_slopes(radii, sups[None, :], scale)
    vac = bool(np.isnan(s[0]))
    return SlopeReport(kind, render(beta), other, list(map(float, radii)), list(map(float, sups)),
                       float(s[0]) if not vac else float("nan"),
                       float(math.exp(lc[0]) / norm) if not vac else 0.0,
                       float(expected), tol, int(cnt[0]), vac, tuple(base))


# -- noise norm ---------------------------------------------------------------

def noise_norm(xi: FourierField, t_grid=DEFAULT_T_GRID, y_grid: int | np.ndarray = 32,
               alpha: float = DEFAULT_ALPHA) -> float:
    """max over the grid of (t^{1/4})^{2 - alpha} |xi_t(y)|."""
    if isinstance(y_grid, (int, np.integer)):
        g = np.arange(int(y_grid)) / int(y_grid)
        Y1, Y2 = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([Y1, Y2], -1).reshape(-1, 2)
    else:
        pts = np.asarray(y_grid, dtype=float)
    best = 0.0
    for t in t_grid:
        v = np.abs(xi.mollify(float(t)).evaluate(pts)).max()
        best = max(best, float(t) ** (0.25 * (2 - alpha)) * v)
    return best


# -- model bound -----------------------------------------------------------------

def sphere_sups(f, x, radii, directions: int) -> np.ndarray:
    pts = np.concatenate([sphere_points(x, r, directions) for r in radii])
    v = np.abs(np.asarray(f(pts)))
    return v.reshape(len(radii), directions).max(axis=1)


def check_model_bound(model: CenteredModel, beta: MultiIndex, radii=DEFAULT_RADII, directions: int = 64,
              N0: float = 1.0, tol: float = SLOPE_TOL) -> SlopeReport:
    """Slope of sup_{|y-x|=r} |Pi_{xb}(y)| against the exponent |b|."""
    if not is_populated(beta):
        raise ValueError("check_model_bound needs a populated index")
    alpha = model.window.alpha
    sups = sphere_sups(lambda p: evaluate_model(model, beta, p), model.base, radii, directions)
    scale = model.Pi[beta].max_abs()
    return _report("model", beta, "", radii, sups, scale, hom_value(beta, alpha),
                   N0 ** (bracket(beta) + 1), model.base, tol)


class SphereReexpansion:
    """Gamma_yx for y on dyadic spheres about x, vectorised over the points."""

    def __init__(self, model: CenteredModel, radii=DEFAULT_RADII, directions: int = 64):
        self.model = model
        self.radii = tuple(float(r) for r in radii)
        self.directions = directions
        self.points = np.concatenate([sphere_points(model.base, r, directions) for r in self.radii])
        self.gamma = reexpand_anchored(model, self.points)

    def _sups(self, v) -> np.ndarray:
        v = np.broadcast_to(np.abs(np.asarray(v, dtype=float)), (len(self.points),))
        return v.reshape(len(self.radii), self.directions).max(axis=1)

    def entry_sups(self, beta, gamma) -> np.ndarray:
        return self._sups(self.gamma.row(beta).get(gamma, 0.0))

    def char_sups(self, beta, n) -> np.ndarray:
        return self._sups(self.gamma.chars.value(n, beta))


def check_reexpansion_bound(sre: SphereReexpansion, beta, gamma, N0: float = 1.0, tol: float = SLOPE_TOL) -> SlopeReport:
    """Slope of sup |(Gamma_yx - id)_b^g| against |b| - |g|.

    The float floor is relative to the largest sampled value of the entry,
    which scales with the noise like the entry itself.
    """
    alpha = sre.model.window.alpha
    if not hom_value(gamma, alpha) < hom_value(beta, alpha):
        raise ValueError("check_reexpansion_bound needs |gamma| < |beta|")
    sups = sre.entry_sups(beta, gamma)
    return _report("reexpansion", beta, render(gamma), sre.radii, sups, sups.max(),
                   hom_value(beta, alpha) - hom_value(gamma, alpha),
                   N0 ** (bracket(beta) - bracket(gamma)), sre.model.base, tol)


def check_character_bound(sre: SphereReexpansion, beta, n, N0: float = 1.0, tol: float = SLOPE_TOL) -> SlopeReport:
    """Slope of sup |pi_yx^(n)_b| against |b| - |n|."""
    alpha = sre.model.window.alpha
    if not pweight(n) < hom_value(beta, alpha):
        raise ValueError("check_character_bound needs |n| < |beta|")
    sups = sre.char_sups(beta, n)
    return _report("character", beta, f"({n[0]},{n[1]})", sre.radii, sups, sups.max(),
                   hom_value(beta, alpha) - pweight(n), N0 ** (bracket(beta) + 1), sre.model.base, tol)


def sweep_model_bound(model, radii=DEFAULT_RADII, directions=64, N0=1.0, tol=SLOPE_TOL, betas=None) -> list:
    return [check_model_bound(model, b, radii, directions, N0, tol) for b in (betas or model.indices)]


def sweep_reexpansion(sre: SphereReexpansion, N0=1.0, tol=SLOPE_TOL, betas=None) -> tuple:
    """All admissible (b, g) for the re-expansion bound and (b, n) for the characters.

    Entries that vanish identically at every sampled point are skipped.
    """
    model = sre.model
    alpha = model.window.alpha
    pop = model.indices
    rx, ch = [], []
    for beta in betas or pop:
        row = sre.gamma.row(beta)
        hb = hom_value(beta, alpha)
        for gamma in pop:
            if gamma == beta or gamma not in row or not hom_value(gamma, alpha) < hb:
                continue
            rx.append(check_reexpansion_bound(sre, beta, gamma, N0, tol))
        if is_purely_polynomial(beta):
            continue
        for n in anchor_labels(beta, alpha):
            if beta in sre.gamma.chars.chars.get(n, {}):
                ch.append(check_character_bound(sre, beta, n, N0, tol))
    return rx, ch


# -- right-hand side bound ------------------------------------------------------

@dataclass
class RhsReport:
    beta: str
    base: tuple
    t_grid: list
    radii: list
    constants: np.ndarray  # shape (len(t_grid), len(radii))
    variation: float
    bound: float = 4.0

    @property
    def passed(self) -> bool:
        return self.variation <= self.bound

    @property
    def constant(self) -> float:
        return float(self.constants.max())


def rhs_variation(constants: np.ndarray) -> float:
    """Growth of the measured constant under refinement of the t-grid.

    Ratio of the maximum over the whole grid to the maximum over the coarse
    half of the t-levels (all radii).  A constant blowing up as t -> 0 makes
    this ratio large; a bounded one keeps it near 1.
    """
    nt = constants.shape[0]
    # t_grid is decreasing, so the coarse levels come first
    coarse = constants[: (nt + 1) // 2].max()
    top = constants.max()
    if top == 0:
        return 1.0
    return float(top / coarse) if coarse > 0 else math.inf


def check_rhs_bound(model: CenteredModel, beta: MultiIndex, t_grid=DEFAULT_T_GRID, radii=DEFAULT_RADII,
                 directions: int = 16, N0: float = 1.0, bound: float = 4.0) -> RhsReport:
    """Constants |Pi^-_{xb,t}(y)| / (N0^{[b]+1} (t^1/4)^{a-2} (t^1/4 + |y-x|)^{|b|-a}) on a (t, r) grid."""
    if not is_populated(beta) or is_purely_polynomial(beta):
        raise ValueError("check_rhs_bound needs a populated, not purely polynomial index")
    alpha = model.window.alpha
    h = hom_value(beta, alpha)
    g = model.rhs[beta]
    pts = np.concatenate([sphere_points(model.base, r, directions) for r in radii])
    norm = N0 ** (bracket(beta) + 1)
    consts = np.zeros((len(t_grid), len(radii)))
    for i, t in enumerate(t_grid):
        vals = np.abs(mollify_diag(g, float(t)).diag(pts)).reshape(len(radii), directions).max(1)
        q = float(t) ** 0.25
        denom = q ** (alpha - 2) * (q + np.asarray(radii)) ** (h - alpha)
        consts[i] = vals / denom / norm
    return RhsReport(render(beta), model.base, list(map(float, t_grid)), list(map(float, radii)),
                     consts, rhs_variation(consts), bound)


# -- reconstruction -----------------------------------------------------------

def germ_terms(model: CenteredModel, beta: MultiIndex) -> list:
    """Pairs (a, b) with F_{xz}(y) = sum a(z) b(y), b = D_1^2 Pi_{x,last}."""
    hier = Hierarchy(model.premodel.noise, model.Pi, model.premodel.K)
    out = []
    for k, _ in beta.kpart:
        rest = beta - MultiIndex.ek(k)
        for last in rest.sub_indices():
            if not is_populated(last):
                continue
            a = hier.power(k, rest - last)
            if a is None:
                continue
            b = hier.d2(last)
            if b is None:
                continue
            out.append((a, b))
    return out


def _germ_product(terms, s: float) -> PolyPeriodic:
    acc = PolyPeriodic.zero(terms[0][0].K)
    for a, b in terms:
        acc = acc + a * mollify_diag(b, s)
    return acc


def telescope(terms, t: float, z, rtol: float = 1e-15, max_levels: int = 200) -> float:
    """sum over s = t/2, t/4, ... of (C_s F_s)_{t-2s}(z), C_s G = E(G_s) - (EG)_s."""
    z = np.asarray(z, dtype=float)
    total = 0.0
    s = t / 2
    small = 0
    for _ in range(max_levels):
        comm = _germ_product(terms, 2 * s) - mollify_diag(_germ_product(terms, s), s)
        term = float(mollify_diag(comm, t - 2 * s).diag(z))
        total += term
        small = small + 1 if abs(term) <= rtol * max(1.0, abs(total)) else 0
        if small >= 3:
            return total
        s /= 2
    return total


def reconstruction_decomposition_check(model: CenteredModel, beta: MultiIndex, t: float, z,
                                       rtol: float = 1e-15) -> tuple:
    """(lhs, rhs): lhs = F_{xzt}(z) - int psi_t(z-y) F_{xy}(y) dy by quadrature, rhs the telescope."""
    if is_purely_polynomial(beta) or not is_populated(beta) or not beta.kpart:
        raise ValueError("reconstruction needs an index with a k-part")
    terms = germ_terms(model, beta)
    z = np.asarray(z, dtype=float)
    coef = [float(a.diag(z)) for a, _ in terms]

    def defect(y):
        out = np.zeros(len(y))
        for (a, b), cz in zip(terms, coef):
            bv = b.diag(y)
            out += (cz - a.diag(y)) * bv
        return out

    lhs, _ = mollify_pointwise(defect, t, z, rtol=1e-10)
    return lhs, telescope(terms, t, z, rtol)


# -- integration ----------------------------------------------------------------

def _taylor(h: PolyPeriodic, x, k: int, pts: np.ndarray) -> np.ndarray:
    """Taylor polynomial of the diagonal of h at x, parabolic order <= k, at pts."""
    x = np.asarray(x, dtype=float)
    d = pts - x
    out = np.zeros(len(pts))
    for n1 in range(k + 1):
        for n2 in range((k - n1) // 2 + 1):
            c = float(h.Dn((n1, n2)).diag(x)) / (math.factorial(n1) * math.factorial(n2))
            out += c * d[:, 0] ** n1 * d[:, 1] ** n2
    return out


def _integrand(g: PolyPeriodic, t: float, x, k: int, pts) -> np.ndarray:
    gt = mollify_diag(g, t)
    h = gt.D(2) + gt.D(1).D(1)
    return h.diag(pts) - _taylor(h, x, k, pts)


def schauder_integral(g: PolyPeriodic, x, eta: float, pts, t0: float = 2.0 ** -24,
                      tmax: float = 4.0, nodes: int = 16) -> np.ndarray:
    """u = -int_0^inf (1 - T_x^k)(d_2 + d_1^2) g_t dt, k = floor(eta), at pts.

    Gauss-Legendre panels: [0, t0] and the dyadic panels [t0 2^j, t0 2^(j+1)]
    up to tmax; beyond tmax every nonzero mode has decayed below e^{-150}.
    """
    k = math.floor(eta)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    edges = [0.0]
    t = t0
    while t < tmax:
        edges.append(t)
        t *= 2
    edges.append(tmax)
    total = np.zeros(len(pts))
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = (a + b) / 2, (b - a) / 2
        for xi, wi in zip(xg, wg):
            total += wi * half * _integrand(g, mid + half * xi, x, k, pts)
    return -total


def schauder_reproduction_check(model: CenteredModel, beta: MultiIndex, y_points, N0: float = 1.0,
                                **kw) -> float:
    """Relative deviation of the semigroup representation from Pi_{xb} at y_points."""
    if not is_populated(beta) or is_purely_polynomial(beta):
        raise ValueError("needs a populated, not purely polynomial index")
    alpha = model.window.alpha
    norm = N0 ** (bracket(beta) + 1)
    g = model.rhs[beta].scale(1.0 / norm)
    pts = np.atleast_2d(np.asarray(y_points, dtype=float))
    u = schauder_integral(g, model.base, hom_value(beta, alpha), pts, **kw)
    ref = evaluate_model(model, beta, pts) / norm
    scale = np.abs(ref).max()
    if scale == 0:
        return float(np.abs(u).max())
    return float(np.abs(u - ref).max() / scale)


def rhs_quadrature_check(model: CenteredModel, beta: MultiIndex, samples) -> float:
    """Gap between spectral and quadrature Pi^-_{xb,t}(y) on (t, y) samples.

    Measured relative to the coefficient scale of Pi^-_{xb}, since the
    mollified values themselves can be far below float resolution.
    """
    g = model.rhs[beta]
    scale = g.max_abs() or 1.0
    worst = 0.0
    for t, y in samples:
        y = np.asarray(y, dtype=float)
        spec = float(mollify_diag(g, t).diag(y))
        quad, _ = mollify_pointwise(lambda p: g.diag(p), t, y, rtol=1e-10)
        worst = max(worst, abs(spec - quad) / scale)
    return worst
