import itertools
import math
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from regmodel.multiindex import (
    DEFAULT_ALPHA as ALPHA,
    MultiIndex,
    Window,
    bracket,
    ek,
    en,
    enumerate_populated,
    enumerate_V,
    hom_value,
    homogeneity,
    is_pc1,
    is_populated,
    is_purely_polynomial,
    k_weight,
    parse,
    poly_weight,
    precedence,
    render,
    zero,
)

LABELS = [(1, 0), (0, 1), (2, 0), (1, 1), (3, 0), (0, 2)]


@st.composite
def multi_indices(draw, kmax=4, emax=3):
    kp = draw(st.lists(st.tuples(st.integers(0, kmax), st.integers(1, emax)), max_size=3))
    np_ = draw(st.lists(st.tuples(st.sampled_from(LABELS), st.integers(1, emax)), max_size=3))
    return MultiIndex(kp, np_)


def test_bracket_examples():
    assert bracket(zero()) == 0
    assert bracket(en((0, 1))) == -1
    assert bracket(ek(1) + en((1, 0), 2)) == -1


def test_poly_weight_examples():
    assert poly_weight(zero()) == 0
    assert poly_weight(en((1, 0))) == 1
    assert poly_weight(en((1, 1)) + en((0, 1))) == 5


def test_homogeneity_examples():
    assert hom_value(zero()) == pytest.approx(ALPHA)
    for n in LABELS:
        assert homogeneity(en(n)) == (0, n[0] + 2 * n[1], 0)
    assert hom_value(ek(1)) == pytest.approx(2 * ALPHA)


def test_precedence_examples():
    assert precedence(zero(), 0.5) == pytest.approx(ALPHA)
    assert precedence(ek(0), 0.5) == pytest.approx(ALPHA + 0.5)
    b = ek(2) + en((1, 0))
    assert precedence(ek(0) + b, 0.5) > precedence(b, 0.5)
    with pytest.raises(ValueError):
        precedence(zero(), 1.0)


def test_population_examples():
    assert is_populated(en((0, 1))) and is_purely_polynomial(en((0, 1)))
    b = en((1, 0)) + en((0, 1))
    assert not is_populated(b)
    c = ek(1) + en((1, 0), 2)
    assert not is_populated(c) and is_pc1(c)
    assert not is_purely_polynomial(en((1, 0), 2))


@given(multi_indices(), multi_indices())
def test_additivity(a, b):
    assert bracket(a + b) == bracket(a) + bracket(b)
    assert poly_weight(a + b) == poly_weight(a) + poly_weight(b)
    assert hom_value(a + b) - ALPHA == pytest.approx(hom_value(a) - ALPHA + hom_value(b) - ALPHA)
    assert (a + b) - b == a
    assert a.le(a + b)


@given(multi_indices())
def test_render_parse_roundtrip(b):
    assert parse(render(b)) == b


def test_render_format():
    assert render(ek(0, 2) + ek(1) + en((1, 0))) == "z0^2 z1 z(1,0)"
    assert render(zero()) == "1"


def test_invalid_labels():
    with pytest.raises(ValueError):
        MultiIndex(npart=[((0, 0), 1)])
    with pytest.raises(ValueError):
        ek(1) - ek(2)


def brute_force(cutoff, lam, alpha, lmax, kmax, wmax):
    pool = [("k", k) for k in range(kmax + 1)]
    pool += [("n", (w - 2 * j, j)) for w in range(1, wmax + 1) for j in range(w // 2 + 1)]
    found = set()
    for length in range(lmax + 1):
        for combo in itertools.combinations_with_replacement(range(len(pool)), length):
            kp, np_ = [], []
            for i in combo:
                kind, lab = pool[i]
                (kp if kind == "k" else np_).append((lab, 1))
            b = MultiIndex(kp, np_)
            pop = (not kp and len(np_) == 1) or (
                sum(k for k, _ in kp) - len(np_) >= 0
            )
            if pop and alpha * (1 + bracket(b)) + poly_weight(b) + lam * b.k(0) <= cutoff + 1e-9:
                found.add(b)
    return found


@pytest.mark.parametrize("cutoff", [ALPHA, 2 * ALPHA, 2 * ALPHA + 1])
def test_enumeration_matches_brute_force(cutoff):
    lam = 0.5
    lmax = 8
    oracle = brute_force(cutoff, lam, ALPHA, lmax, kmax=5, wmax=4)
    assert all(b.length < lmax for b in oracle)
    got = enumerate_populated(cutoff, lam, ALPHA)
    assert len(got) == len(set(got))
    assert set(got) == oracle


def test_enumeration_small_cutoffs():
    assert enumerate_populated(0.9) == []
    assert set(enumerate_populated(ALPHA)) == {en((1, 0)), zero()}


def test_enumeration_order():
    idx = enumerate_populated(3 * ALPHA + 2)
    keys = [(round(precedence(b), 9), b.length, b.sort_key()) for b in idx]
    assert keys == sorted(keys)


def test_positivity_and_nonintegrality():
    for b in enumerate_populated(3 * ALPHA + 2):
        h = homogeneity(b)
        assert h.value(ALPHA) > 0
        if not is_purely_polynomial(b):
            assert h.alpha_mult >= 1
            assert abs(h.value(ALPHA) - round(h.value(ALPHA))) > 1e-6


def test_V_enumeration():
    V = enumerate_V(2 * ALPHA + 1)
    assert all(bracket(b) >= -1 for b in V)
    assert set(enumerate_populated(2 * ALPHA + 1)) <= set(V)
    assert ek(1) + en((1, 0), 2) in V


def test_sub_indices():
    b = ek(0, 2) + en((1, 0))
    subs = b.sub_indices()
    assert len(subs) == 6 and len(set(subs)) == 6
    assert all(s.le(b) for s in subs)


def test_window_downward_closed():
    w = Window(2 * ALPHA + 2)
    inside = [b for b in enumerate_V(2 * ALPHA + 2)]
    for b in inside:
        assert b in w
        for s in b.sub_indices():
            assert s in w
    assert ek(5) not in w and ek(3) in w
    # membership iff below some index of V within the cutoff
    candidates = set()
    for c in enumerate_V(3 * ALPHA + 2):
        candidates.update(c.sub_indices())
    for b in candidates:
        assert (b in w) == any(b.le(c) for c in inside)


def test_k_weight():
    assert k_weight(ek(0, 3) + ek(2)) == 2


@lru_cache(maxsize=None)
def splits_into(delta: MultiIndex, parts: int) -> bool:
    """delta is a sum of `parts` populated multi-indices (0 allowed)."""
    if parts == 0:
        return delta == zero()
    if parts == 1:
        return is_populated(delta)
    return any(is_populated(g) and splits_into(delta - g, parts - 1) for g in delta.sub_indices())


def test_decomposition_precedence_exhaustive():
    lam = 0.5
    for b in enumerate_populated(2 * ALPHA + 2, lam):
        if is_purely_polynomial(b):
            continue
        for l, _ in b.kpart:
            rest = b - ek(l)
            for g in rest.sub_indices():
                if is_populated(g) and splits_into(rest - g, l):
                    assert precedence(g, lam) < precedence(b, lam)
                    # homogeneity identity for the decomposition
