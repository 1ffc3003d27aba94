import math

import numpy as np
import pytest

from regmodel.group import CharacterFamily, GroupElement, matmul
from regmodel.model import (
    Hierarchy,
    anchor_labels,
    build_centered,
    build_premodel,
    evaluate_model,
    f_star,
    premodel_rhs,
    recentred_premodel,
    reexpand,
    reexpand_anchored,
)
from regmodel.multiindex import (
    DEFAULT_ALPHA as ALPHA,
    Window,
    bracket,
    ek,
    en,
    enumerate_V,
    hom_value,
    is_pc1,
    is_populated,
    is_purely_polynomial,
    poly_label,
    poly_weight,
    zero,
)
from regmodel.series import FormalSeries
from regmodel.torus import FourierField, Polynomial, PolyPeriodic, heat_residual, heat_solve

WINDOW = Window(3 * ALPHA + 2)
BASES = [(0.3, 0.6), (0.41, 0.55), (0.2, 0.7), (0.77, 0.12)]


@pytest.fixture(scope="module")
def pm():
    return build_premodel(FourierField.random_noise(0, 2, 1.0), WINDOW)


@pytest.fixture(scope="module")
def centered(pm):
    return [build_centered(pm, x) for x in BASES]


def test_cosine_noise_oracle():
    xi = FourierField.cos_mode((1, 0))
    m = build_premodel(xi, Window(ALPHA))
    pts = np.array([[0.1, 0.3], [0.6, 0.9]])
    assert np.allclose(m.Pi[zero()].diag(pts), np.cos(2 * math.pi * pts[:, 0]) / (4 * math.pi ** 2), atol=1e-16)
    assert m.P[zero()].max_abs() < 1e-16


def test_nonzero_mean_noise_rejected():
    with pytest.raises(ValueError):
        build_premodel(FourierField.constant(1.0), WINDOW)


def test_premodel_residual_and_degrees(pm):
    for b in pm.indices:
        U = pm.Pi[b]
        assert heat_residual(U, pm.P[b], pm.rhs[b]) <= 1e-10 * max(1.0, pm.rhs[b].max_abs())
        assert U.degree() <= poly_weight(b)
        avg = U.average()
        if is_purely_polynomial(b):
            assert avg.terms == {poly_label(b): 1.0}
            assert set(U.terms) == {poly_label(b)}
            assert U.terms[poly_label(b)].band == 0
        else:
            assert avg.max_abs() < 1e-15


def test_polynomial_identity_for_P(pm):
    # P_b = -(d_y2 - d_y1^2) y^n [b = e_n] + torus average of Pi^-_b
    for b in pm.indices + pm.pc1:
        expect = pm.rhs[b].average()
        if is_purely_polynomial(b):
            expect = expect - Polynomial.monomial(poly_label(b)).heat()
        assert (pm.P[b] - expect).max_abs() <= 1e-10


def test_rhs_examples(pm):
    assert (premodel_rhs(pm, zero()) - PolyPeriodic.from_field(pm.noise)).max_abs() == 0
    p0 = pm.Pi[zero()]
    expect = p0 * p0.D(1).D(1)
    assert (premodel_rhs(pm, ek(1)) - expect).max_abs() < 1e-16


def test_support_scan(pm):
    # non-populated right-hand sides vanish, except the pc1 ones, which are polynomials
    hier = pm.hierarchy()
    scanned = 0
    for b in enumerate_V(WINDOW.cutoff) + [ek(0) + ek(1) + en((1, 0), 2), ek(2) + en((0, 1), 4)]:
        if is_populated(b):
            continue
        try:
            f = hier.rhs(b)
        except KeyError:
            continue
        scanned += 1
        if is_pc1(b):
            assert all(band == 0 for band in [g.band for g in f.terms.values()])
        else:
            assert f.max_abs() == 0
    assert scanned > 50
    assert any(not pm.P[b].is_zero() for b in pm.pc1)


def test_restricted_slice_is_periodic(pm):
    for b in pm.indices:
        if not b.npart:
            assert set(pm.Pi[b].terms) <= {(0, 0)}


def test_centered_polynomial_rows(centered):
    c = centered[0]
    x = c.base
    pts = np.array([[0.5, 0.1], [0.9, 0.95]])
    for b in c.indices:
        if is_purely_polynomial(b):
            m = poly_label(b)
            vals = evaluate_model(c, b, pts)
            assert np.allclose(vals, (pts[:, 0] - x[0]) ** m[0] * (pts[:, 1] - x[1]) ** m[1], atol=1e-14)
    assert c.chars.value((1, 0), en((2, 0))) == pytest.approx(-2 * x[0])


def test_anchoring_and_degrees(centered):
    for c in centered:
        x = np.array(c.base)
        for b in c.indices:
            U = c.Pi[b]
            scale = max(1.0, U.max_abs())
            for n in anchor_labels(b, ALPHA):
                assert abs(U.Dn(n).diag(x)) <= 1e-8 * scale
            if not is_purely_polynomial(b):
                assert U.degree() < hom_value(b)
                assert c.P[b].degree() < hom_value(b) - 2
                assert c.P[b].max_abs() <= 1e-10
            assert heat_residual(U, c.P[b], c.rhs[b]) <= 1e-10 * max(1.0, c.rhs[b].max_abs())


def test_model_vanishes_at_base(centered):
    c = centered[1]
    x = np.array(c.base)
    for b in c.indices:
        assert abs(evaluate_model(c, b, x)) < 1e-12


def test_recentering_identity(centered):
    for c in centered[:2]:
        rp = recentred_premodel(c)
        for b in c.indices:
            assert (rp[b] - c.Pi[b]).max_abs() <= 1e-9


def test_fstar_on_coordinates(centered):
    c = centered[0]
    g = f_star(c)
    pi0 = c.chars.value((0, 0), zero())
    rows = [b for b in g.scope if is_populated(b)]
    for k in range(3):
        img = g.apply(FormalSeries.zk(k, WINDOW), rows=g.scope)
        for l in range(6):
            b = ek(k + l)
            if b in set(g.scope):
                assert img[b] == pytest.approx(math.comb(k + l, l) * pi0 ** l, rel=1e-12)
    img = g.apply(FormalSeries.zn((0, 1), WINDOW), rows=rows)
    for b in rows:
        expect = (1 if b == en((0, 1)) else 0) + c.chars.value((0, 1), b)
        assert img[b] == pytest.approx(expect, abs=1e-14)


def test_fstar_at_origin_has_no_polynomial_characters(pm):
    c = build_centered(pm, (0.0, 0.0))
    assert c.chars.shift == (-0.0, -0.0)
    for n in [(1, 0), (0, 1)]:
        assert c.chars.value((0, 0), en(n)) == 0


def test_reexpansion_identities(centered):
    cx, cy, cz = centered[:3]
    gyx = reexpand(cy, cx)
    K = cx.premodel.K
    for b in cx.indices:
        acc = PolyPeriodic.zero(K)
        for gam, m in gyx.gamma.row(b).items():
            if gam in cx.Pi:
                acc = acc + cx.Pi[gam].scale(float(m))
        acc = acc + PolyPeriodic.monomial((0, 0), float(gyx.shift_char(b)), K)
        assert (acc - cy.Pi[b]).max_abs() <= 1e-9
        assert gyx.shift_char(b) == pytest.approx(float(evaluate_model(cy, b, np.array(cx.base))), abs=1e-9)
    # transitivity
    gzy, gzx = reexpand(cz, cy), reexpand(cz, cx)
    rows = cx.indices
    prod = matmul(gzy.gamma.matrix(rows), {b: gyx.gamma.row(b) for b in gzy.gamma.scope}, rows)
    for b in rows:
        direct = gzx.gamma.row(b)
        for k in set(direct) | set(prod[b]):
            assert float(direct.get(k, 0)) == pytest.approx(float(prod[b].get(k, 0)), abs=1e-9)


def test_reexpansion_identity_at_same_point(centered):
    c = centered[0]
    g = reexpand(c, c).gamma
    for b in c.indices:
        row = g.row(b)
        assert all(abs(float(v) - (1.0 if k == b else 0.0)) < 1e-10 for k, v in row.items())


def test_three_point_identity(centered):
    cx, cy = centered[0], centered[1]
    gxy = reexpand(cx, cy).gamma
    z = np.array([0.35, 0.62])
    for b in cx.indices:
        lhs = evaluate_model(cx, b, z) - evaluate_model(cx, b, np.array(cy.base)) - evaluate_model(cy, b, z)
        rhs = sum(float(m) * evaluate_model(cy, g, z) for g, m in gxy.row(b).items() if g != b and g in cy.Pi)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_anchored_route_matches_composition(centered):
    cx, cy, cz = centered[:3]
    ga = reexpand_anchored(cx, np.array([cy.base, cz.base]))
    for j, c in enumerate((cy, cz)):
        g = reexpand(c, cx).gamma
        for b in cx.indices:
            r1, r2 = g.row(b), ga.row(b)
            for k in set(r1) | set(r2):
                v2 = np.broadcast_to(r2.get(k, 0), (2,))[j]
                assert float(r1.get(k, 0)) == pytest.approx(v2, abs=1e-9)


def test_tilt_in_restricted_setting(pm):
    # Pi~ = Gamma Pi + pi^(0) with only a k-only pi^(0) solves the hierarchy with averages pi^(0)
    kon = [b for b in pm.indices if not b.npart]
    rng = np.random.default_rng(3)
    pi0 = {b: float(rng.normal()) for b in kon}
    g = GroupElement(CharacterFamily({(0, 0): pi0}, (0, 0), WINDOW))
    tilde = {}
    for b in kon:
        acc = PolyPeriodic.monomial((0, 0), pi0[b], pm.K)
        for gam, m in g.row(b).items():
            if gam in pm.Pi and not gam.npart:
                acc = acc + pm.Pi[gam].scale(float(m))
        tilde[b] = acc
    hier = Hierarchy(pm.noise, tilde, pm.K)
    for b in sorted(kon, key=lambda b: b.length):
        f = hier.rhs(b)
        U, _ = heat_solve(f, Polynomial({(0, 0): pi0[b]}))
        assert (U - tilde[b]).max_abs() <= 1e-10
