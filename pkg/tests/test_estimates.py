import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regmodel import estimates as E
from regmodel.model import build_centered, build_premodel, evaluate_model
from regmodel.multiindex import DEFAULT_ALPHA as ALPHA, Window, ek, en, hom_value, is_purely_polynomial, zero
from regmodel.torus import FourierField, PolyPeriodic, sphere_points

WINDOW = Window(2 * ALPHA + 2)
RADII = E.DEFAULT_RADII


@pytest.fixture(scope="module")
def model():
    pm = build_premodel(FourierField.random_noise(0), WINDOW)
    return build_centered(pm, (0.3, 0.6))


@pytest.fixture(scope="module")
def sre(model):
    return E.SphereReexpansion(model, RADII, 32)


def test_fit_recovers_power_law():
    sups = 3.0 * np.asarray(RADII) ** 2.5
    s, lc, cnt = E.fit_slopes(RADII, sups[None], 3.0)
    assert s[0] == pytest.approx(2.5, abs=1e-12)
    assert math.exp(lc[0]) == pytest.approx(3.0, rel=1e-12)
    assert cnt[0] == 6


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 6.0), st.floats(-3.0, 3.0))
def test_fit_slopes_property(e, logc):
    sups = math.exp(logc) * np.asarray(RADII) ** e
    s, lc, _ = E.fit_slopes(RADII, sups[None], sups.max())
    assert s[0] == pytest.approx(e, abs=1e-9)
    assert lc[0] == pytest.approx(logc, abs=1e-8)


def test_fit_floor_and_vacuous():
    sups = np.array([1.0, 0.5, 0.25, 1e-15, 1e-16, 0.0])
    s, _, cnt = E.fit_slopes(RADII, sups[None], 1.0)
    assert cnt[0] == 3 and s[0] == pytest.approx(1.0)
    s, _, cnt = E.fit_slopes(RADII, np.zeros((1, 6)), 1.0)
    assert cnt[0] == 0 and np.isnan(s[0])


def test_polynomial_index_slope_is_exact(model):
    r = E.check_model_bound(model, en((1, 0)), RADII, 32)
    assert r.passed and r.fitted_slope == pytest.approx(1.0, abs=1e-9)
    r = E.check_model_bound(model, en((0, 1)), RADII, 32)
    assert r.fitted_slope == pytest.approx(2.0, abs=1e-9)


def test_model_bound_on_noise_index(model):
    r = E.check_model_bound(model, zero(), RADII, 64)
    assert r.passed and r.fitted_slope >= ALPHA - 0.15
    with pytest.raises(ValueError):
        E.check_model_bound(model, ek(0) + ek(0) + en((1, 0), 5), RADII)


def test_reexpansion_binomial_entry(model, sre):
    # Gamma_yx for the pair e_(2,0) -> e_(1,0) is 2 (x - y)_1
    row = sre.gamma.row(en((2, 0)))
    x = np.asarray(model.base)
    assert np.allclose(row[en((1, 0))], 2 * (x[0] - sre.points[:, 0]), atol=1e-15)
    r = E.check_reexpansion_bound(sre, en((2, 0)), en((1, 0)))
    assert r.fitted_slope == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        E.check_reexpansion_bound(sre, en((1, 0)), en((2, 0)))


def test_character_of_noise_index_is_model_value(model, sre):
    # pi_yx^(0) at b = 0 equals Pi_y(x)
    pm = model.premodel
    ys = sre.points[::37]
    vals = np.asarray(sre.gamma.chars.value((0, 0), zero()))[::37]
    for y, v in zip(ys, vals):
        cy = build_centered(pm, y)
        assert v == pytest.approx(float(evaluate_model(cy, zero(), np.asarray(model.base))), abs=1e-12)
    r = E.check_character_bound(sre, zero(), (0, 0))
    assert r.passed


def test_sweeps_pass_on_small_window(model, sre):
    mb = E.sweep_model_bound(model, RADII, 32)
    assert mb and all(r.passed for r in mb)
    rx, ch = E.sweep_reexpansion(sre)
    assert rx and ch
    assert all(r.expected > 0 for r in rx + ch)


def test_noise_norm_is_rhs_constant_at_zero(model):
    pts = np.concatenate([sphere_points(model.base, r, 16) for r in RADII])
    n0 = E.noise_norm(model.premodel.noise, E.DEFAULT_T_GRID, pts)
    rep = E.check_rhs_bound(model, zero(), E.DEFAULT_T_GRID, RADII, 16, n0)
    assert rep.constant == pytest.approx(1.0, rel=1e-12)


def test_noise_norm_scales_with_amplitude():
    a = E.noise_norm(FourierField.random_noise(3, amplitude=1.0))
    b = E.noise_norm(FourierField.random_noise(3, amplitude=2.5))
    assert b == pytest.approx(2.5 * a, rel=1e-12)


def test_rhs_of_z0_is_second_derivative(model):
    # Pi^-_{x e_0} = d_1^2 Pi_{x 0}
    y = np.array([[0.41, 0.52], [0.8, 0.1]])
    h = 1e-4
    e = np.array([h, 0.0])
    fd = (evaluate_model(model, zero(), y + e) - 2 * evaluate_model(model, zero(), y)
          + evaluate_model(model, zero(), y - e)) / h ** 2
    assert np.allclose(model.rhs[ek(0)].diag(y), fd, rtol=1e-5, atol=1e-8)


def test_rhs_variation_definition():
    c = np.ones((6, 4))
    assert E.rhs_variation(c) == 1.0
    c[-1, -1] = 10.0
    assert E.rhs_variation(c) == 10.0
    c = np.ones((6, 4))
    c[0, 0] = 5.0  # growth at coarse levels is not a blow-up
    assert E.rhs_variation(c) == 1.0


def test_rhs_spectral_matches_quadrature(model):
    for b in [zero(), ek(1), ek(1) + en((1, 0))]:
        gap = E.rhs_quadrature_check(model, b, [(2.0 ** -20, (0.31, 0.6)), (2.0 ** -8, (0.5, 0.62))])
        assert gap < 1e-10


def test_rhs_report_shape(model):
    r = E.check_rhs_bound(model, ek(1), E.DEFAULT_T_GRID, RADII, 8)
    assert r.constants.shape == (len(E.DEFAULT_T_GRID), len(RADII))
    assert np.all(r.constants >= 0)
    with pytest.raises(ValueError):
        E.check_rhs_bound(model, en((1, 0)))


@pytest.mark.parametrize("t", [2.0 ** -12, 2.0 ** -6])
def test_telescoping_identity(model, t):
    for b in [ek(1), ek(2), ek(1) + en((1, 0))]:
        lhs, rhs = E.reconstruction_decomposition_check(model, b, t, (0.35, 0.62))
        assert abs(lhs - rhs) <= 1e-10


def test_telescope_trivial_for_z0(model):
    # the germ coefficient of e_0 is constant, so both sides vanish
    lhs, rhs = E.reconstruction_decomposition_check(model, ek(0), 1e-3, (0.4, 0.5))
    assert abs(lhs) < 1e-14 and abs(rhs) < 1e-14
    with pytest.raises(ValueError):
        E.reconstruction_decomposition_check(model, zero(), 1e-3, (0.4, 0.5))


def test_schauder_single_mode():
    xi = FourierField.cos_mode((1, 0))
    pm = build_premodel(xi, Window(ALPHA + 1))
    c = build_centered(pm, (0.2, 0.4))
    pts = np.array([[0.25, 0.4], [0.6, 0.1], [0.9, 0.8]])
    u = E.schauder_integral(c.rhs[zero()], c.base, ALPHA, pts)
    # Pi_{x0} = Pi_0 minus its first order Taylor polynomial at x, Pi_0 = cos(2 pi y1) / (4 pi^2)
    w = 2 * math.pi
    expect = (np.cos(w * pts[:, 0]) - math.cos(w * 0.2) + w * math.sin(w * 0.2) * (pts[:, 0] - 0.2)) / w ** 2
    assert np.allclose(u, expect, atol=1e-12)
    assert abs(E.schauder_integral(c.rhs[zero()], c.base, ALPHA, np.array([c.base]))[0]) < 1e-15


def test_schauder_reproduction(model):
    rng = np.random.default_rng(1)
    pts = np.asarray(model.base) + rng.uniform(-0.3, 0.3, (5, 2))
    for b in model.indices:
        if is_purely_polynomial(b) or hom_value(b) > 4:
            continue
        assert E.schauder_reproduction_check(model, b, pts, 0.5) <= 1e-8
