"""Structure-group elements generated by character families.

A character family is a collection {pi^(n)}_n (n ranging over pairs including
(0,0)) of series supported on populated multi-indices, together with a shift
vector h.  The group element acts on series by the exponential formula

    Gamma* = sum_J (1/J!) prod_n (pi^(n))^{J(n)} prod_n (D^(n))^{J(n)},

J ranging over finite multisets of labels.  Rows (Gamma*)_b^. are computed
lazily with this re-summed formula and restricted to columns g with
[g] >= -1, where they are finite.
"""
from __future__ import annotations

import math
from functools import lru_cache
from fractions import Fraction
from typing import Iterable

import numpy as np

from .multiindex import (
    DEFAULT_ALPHA,
    DEFAULT_LAMBDA,
    MultiIndex,
    Window,
    bracket,
    enumerate_V,
    hom_value,
    is_populated,
    is_purely_polynomial,
    label_below,
    labels_up_to,
    poly_label,
    precedence,
    weight,
    zero,
)
from .series import FormalSeries, d0_push, d0_row, dn_push, dn_row, is_zero, tag_predicate

ZERO_LABEL = (0, 0)


def binom_pair(m, n) -> int:
    if n[0] > m[0] or n[1] > m[1] or n[0] < 0 or n[1] < 0:
        return 0
    return math.comb(m[0], n[0]) * math.comb(m[1], n[1])


def shift_power(h, p):
    """h^p = h1^p1 h2^p2 for a pair p."""
    return h[0] ** p[0] * h[1] ** p[1]


def poly_char(h, n, m):
    """Polynomial row value pi^(n)_{e_m} = C(m,n) h^{m-n} for n < m, else 0."""
    if n == m or n[0] > m[0] or n[1] > m[1]:
        return 0
    return binom_pair(m, n) * shift_power(h, (m[0] - n[0], m[1] - n[1]))


class CharacterFamily:
    """Characters pi^(n) on non purely polynomial indices plus a shift h.

    Purely polynomial rows are not stored: they are determined by h through
    pi^(n)_{e_m} = C(m,n) h^{m-n}.  Construction validates that every stored
    entry sits at a populated index b with |n| < |b|; entries at purely
    polynomial indices, if given, must agree with the binomial formula.
    """

    def __init__(self, chars: dict, shift, window: Window, validate: bool = True):
        self.window = window
        self.shift = (shift[0], shift[1])
        self.chars: dict = {}
        for n, ser in chars.items():
            n = (int(n[0]), int(n[1]))
            coeffs = ser.coeffs if isinstance(ser, FormalSeries) else ser
            row = {}
            for b, c in coeffs.items():
                if is_zero(c):
                    continue
                if is_purely_polynomial(b):
                    if validate and not _eq(c, poly_char(self.shift, n, poly_label(b))):
                        raise ValueError(f"polynomial row of pi^{n} at {b} differs from the binomial formula")
                    continue
                if validate:
                    if not is_populated(b):
                        raise ValueError(f"pi^{n} has support at non populated {b}")
                    if not label_below(n, b, window.alpha):
                        raise ValueError(f"pi^{n} has support at {b} with |n| >= |b|")
                    if b not in window:
                        raise ValueError(f"pi^{n} has support at {b} outside the truncation")
                row[b] = c
            if row:
                self.chars[n] = row
        self._labels = None

    @classmethod
    def identity(cls, window: Window) -> "CharacterFamily":
        return cls({}, (0, 0), window)

    def labels(self) -> list:
        """Labels n with |n| < cutoff, sorted by weight."""
        if self._labels is None:
            self._labels = labels_up_to(math.floor(self.window.cutoff) + 1, include_zero=True)
        return self._labels

    def value(self, n, beta: MultiIndex):
        if is_purely_polynomial(beta):
            return poly_char(self.shift, tuple(n), poly_label(beta))
        return self.chars.get(tuple(n), {}).get(beta, 0)

    def row_series(self, n, scope: Iterable[MultiIndex]) -> FormalSeries:
        """pi^(n) as a series, including the polynomial rows, over scope."""
        n = tuple(n)
        out = {}
        for b in scope:
            v = self.value(n, b)
            if not is_zero(v):
                out[b] = v
        return FormalSeries(out, self.window)

    def nonzero_entries(self, n):
        """Iterate (b, value) over all nonzero entries of pi^(n) in the window."""
        n = tuple(n)
        for b, c in self.chars.get(n, {}).items():
            yield b, c
        # polynomial rows e_m with m > n
        wmax = math.floor(self.window.cutoff + 1e-9)
        for m in labels_up_to(wmax):
            if m != n and m[0] >= n[0] and m[1] >= n[1]:
                c = poly_char(self.shift, n, m)
                if not is_zero(c):
                    yield MultiIndex.en(m), c

    def sub_entries(self, n, beta: MultiIndex):
        """Nonzero entries of pi^(n) at indices componentwise below beta."""
        n = tuple(n)
        out = []
        row = self.chars.get(n)
        if row:
            for b in beta.sub_indices():
                c = row.get(b)
                if c is not None:
                    out.append((b, c))
        for m, e in beta.npart:
            if m != n and m[0] >= n[0] and m[1] >= n[1]:
                c = poly_char(self.shift, n, m)
                if not is_zero(c):
                    out.append((MultiIndex.en(m), c))
        return out


def _eq(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return bool(np.allclose(a, b, rtol=1e-12, atol=1e-14))
    if isinstance(a, float) or isinstance(b, float):
        return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))
    return a == b


def _div(x, k: int):
    if k == 1:
        return x
    if isinstance(x, int):
        return Fraction(x, k)
    return x / k


def _add_into(d: dict, key, v):
    if key in d:
        d[key] = d[key] + v
    else:
        d[key] = v


class SubLattice:
    """Sub-indices of a fixed multi-index with an integer addition table."""

    __slots__ = ("indices", "index", "add", "brk", "comp")

    def __init__(self, beta: MultiIndex):
        self.indices = list(beta.sub_indices())
        self.index = {b: i for i, b in enumerate(self.indices)}
        keys = [("k", k) for k, _ in beta.kpart] + [("n", n) for n, _ in beta.npart]
        top = np.array([e for _, e in beta.kpart] + [e for _, e in beta.npart], dtype=np.int64)
        digits = np.array(
            [[b.k(key[1]) if key[0] == "k" else b.n(key[1]) for key in keys] for b in self.indices],
            dtype=np.int64,
        ).reshape(len(self.indices), len(keys))
        radix = np.cumprod(np.concatenate([[1], top[:-1] + 1])) if len(top) else np.zeros(0, dtype=np.int64)
        code_to_id = np.full(int(np.prod(top + 1)) if len(top) else 1, -1, dtype=np.int64)
        codes = digits @ radix if len(top) else np.zeros(len(self.indices), dtype=np.int64)
        code_to_id[codes] = np.arange(len(self.indices))
        sums = digits[:, None, :] + digits[None, :, :]
        ok = (sums <= top).all(axis=2)
        table = np.where(ok, code_to_id[np.where(ok, (sums @ radix) if len(top) else 0, 0)], -1)
        self.add = table.tolist()
        self.brk = [bracket(b) for b in self.indices]
        self.comp = [beta - b for b in self.indices]


@lru_cache(maxsize=200000)
def sublattice(beta: MultiIndex) -> SubLattice:
    return SubLattice(beta)


@lru_cache(maxsize=500000)
def dchain_row(start: MultiIndex, labels: tuple, min_bracket: int = -1) -> dict:
    """Row of prod_j D^(n_j) at start, keeping columns with bracket >= min_bracket.

    Every derivation lowers the bracket by one, so intermediate rows are
    pruned once they cannot reach min_bracket.
    """
    row = {start: 1}
    steps = len(labels)
    for i, n in enumerate(labels):
        remaining = steps - i - 1
        new: dict = {}
        for eta, c in row.items():
            ent = d0_row(eta) if n == ZERO_LABEL else dn_row(eta, n)
            for g, m in ent:
                if bracket(g) - remaining < min_bracket:
                    continue
                _add_into(new, g, c * m)
        row = new
        if not row:
            break
    return row


class GroupElement:
    """Gamma* generated by a character family, with lazily cached rows."""

    def __init__(self, chars: CharacterFamily):
        self.chars = chars
        self.window = chars.window
        self._rows: dict = {}
        self._scope = None

    @property
    def scope(self) -> list:
        """Indices b in V within the truncation, in precedence order."""
        if self._scope is None:
            w = self.window
            self._scope = enumerate_V(w.cutoff, w.lam, w.alpha)
        return self._scope

    @classmethod
    def identity(cls, window: Window) -> "GroupElement":
        return cls(CharacterFamily.identity(window))

    # -- rows ----------------------------------------------------------------
    def row(self, beta: MultiIndex) -> dict:
        """Nonzero entries (Gamma*)_beta^gamma over gamma with [gamma] >= -1."""
        r = self._rows.get(beta)
        if r is None:
            r = self._compute_row(beta)
            self._rows[beta] = r
        return r

    def entry(self, beta: MultiIndex, gamma: MultiIndex):
        return self.row(beta).get(gamma, 0)

    def _compute_row(self, beta: MultiIndex) -> dict:
        chars = self.chars
        budget = bracket(beta) + 1
        # sum over the factors b_i of ([b_i] + 1) is bounded by [beta] + 1
        if budget < 0:
            # [beta] < -1: no column in V is reached
            return {}
        lmax = math.ceil(hom_value(beta, self.window.alpha) + 1e-9) + 1
        lat = sublattice(beta)
        add, brk, comp = lat.add, lat.brk, lat.comp
        labels = []
        entries = {}
        for n in chars.labels():
            ent = chars.sub_entries(n, beta)
            if ent:
                labels.append(n)
                entries[n] = [(lat.index[b], v) for b, v in ent]
        row: dict = {}

        def add_terms(J: tuple, P: dict, jfact: int):
            for d, c in P.items():
                for g, m in dchain_row(comp[d], J).items():
                    _add_into(row, g, _div(c * m, jfact))

        def dfs(start: int, J: tuple, counts: list, P: dict, jfact: int):
            add_terms(J, P, jfact)
            if len(J) >= lmax:
                raise RuntimeError(f"termination bound exceeded at {beta}")
            l1 = len(J) + 1
            for i in range(start, len(labels)):
                n = labels[i]
                newP: dict = {}
                for d, c in P.items():
                    arow = add[d]
                    for j, v in entries[n]:
                        k = arow[j]
                        if k < 0 or brk[k] + l1 > budget:
                            continue
                        _add_into(newP, k, c * v)
                newP = {d: c for d, c in newP.items() if not is_zero(c)}
                if not newP:
                    continue
                cnt = list(counts)
                cnt[i] += 1
                dfs(i, J + (n,), cnt, newP, jfact * cnt[i])

        dfs(0, (), [0] * len(labels), {lat.index[zero()]: 1}, 1)
        return {g: c for g, c in row.items() if not is_zero(c)}

    # -- action --------------------------------------------------------------
    def apply(self, pi: FormalSeries, rows: Iterable[MultiIndex] | None = None, check: bool = True) -> FormalSeries:
        """Matrix-vector action on a series supported in V."""
        if check:
            bad = [b for b in pi.coeffs if bracket(b) < -1]
            if bad:
                raise ValueError(f"series has support outside V, e.g. at {bad[0]}")
        out = {}
        for beta in rows if rows is not None else self.scope:
            acc = None
            for g, m in self.row(beta).items():
                c = pi.coeffs.get(g)
                if c is None:
                    continue
                v = m * c
                acc = v if acc is None else acc + v
            if acc is not None and not is_zero(acc):
                out[beta] = acc
        return FormalSeries(out, self.window)

    def apply_values(self, values: dict, rows: Iterable[MultiIndex]) -> dict:
        """Action on an association b -> value whose keys lie in V (no checks)."""
        out = {}
        for beta in rows:
            acc = None
            for g, m in self.row(beta).items():
                c = values.get(g)
                if c is None:
                    continue
                v = m * c
                acc = v if acc is None else acc + v
            if acc is not None:
                out[beta] = acc
        return out

    def solve(self, pi: FormalSeries) -> FormalSeries:
        """(Gamma*)^{-1} pi by back substitution in precedence order."""
        w = self.window
        x: dict = {}
        for beta in self.scope:
            acc = pi.coeffs.get(beta, 0)
            for g, m in self.row(beta).items():
                if g == beta:
                    continue
                xg = x.get(g)
                if xg is not None:
                    acc = acc - m * xg
            if not is_zero(acc):
                x[beta] = acc
        return FormalSeries(x, w)

    def polynomial_row(self, n) -> dict:
        """Row at the purely polynomial index e_n."""
        return self.row(MultiIndex.en(n))

    def matrix(self, indices: Iterable[MultiIndex] | None = None) -> dict:
        idx = list(indices) if indices is not None else self.scope
        return {b: dict(self.row(b)) for b in idx}


def compose(g: GroupElement, gp: GroupElement) -> GroupElement:
    """Element generated by pi^(n) + Gamma* pi'^(n) with shift h + h'."""
    if g.window != gp.window:
        raise ValueError("truncation mismatch")
    w = g.window
    pop = [b for b in g.scope if is_populated(b)]
    chars = {}
    for n in g.chars.labels():
        pin = gp.chars.row_series(n, pop)
        img = g.apply(pin, rows=pop, check=False)
        own = g.chars.row_series(n, pop)
        tot = own + img
        chars[n] = {b: c for b, c in tot.coeffs.items()}
    h = (g.chars.shift[0] + gp.chars.shift[0], g.chars.shift[1] + gp.chars.shift[1])
    return GroupElement(CharacterFamily(chars, h, w))


def invert(g: GroupElement) -> GroupElement:
    """Element with characters -(Gamma*)^{-1} pi^(n) and shift -h."""
    w = g.window
    pop = [b for b in g.scope if is_populated(b)]
    chars = {}
    for n in g.chars.labels():
        pin = g.chars.row_series(n, pop)
        if pin.is_zero():
            continue
        sol = g.solve(pin)
        chars[n] = {b: -c for b, c in sol.coeffs.items() if is_populated(b)}
    h = (-g.chars.shift[0], -g.chars.shift[1])
    return GroupElement(CharacterFamily(chars, h, w))


def matmul(a: dict, b: dict, rows: Iterable[MultiIndex]) -> dict:
    """Product of sparse row dictionaries restricted to the given rows."""
    out = {}
    for beta in rows:
        acc: dict = {}
        for eta, c in a[beta].items():
            for g, m in b.get(eta, {}).items():
                _add_into(acc, g, c * m)
        out[beta] = {g: c for g, c in acc.items() if not is_zero(c)}
    return out


# -- independent oracle ------------------------------------------------------

def entry_ordered_sum(chars: CharacterFamily, beta: MultiIndex, gamma: MultiIndex):
    """(Gamma*)_beta^gamma by the l-ordered componentwise sum.

    Sum over l, ordered label sequences (n_1..n_l) and ordered decompositions
    beta_1 + ... + beta_{l+1} = beta of
    (1/l!) pi^(n_1)_{beta_1} ... pi^(n_l)_{beta_l} (D^(n_1)...D^(n_l))_{beta_{l+1}}^gamma.
    The derivation matrix is read off by pushing the monomial z^gamma forward,
    not from rows.
    """
    labels = [n for n in chars.labels()]
    ents = {n: chars.sub_entries(n, beta) for n in labels}
    labels = [n for n in labels if ents[n]]
    total = 0
    budget = bracket(beta) - bracket(gamma)

    def dchain_entry(rest: MultiIndex, seq: tuple):
        poly = {gamma: 1}
        for n in reversed(seq):
            new: dict = {}
            for mono, c in poly.items():
                push = d0_push(mono) if n == ZERO_LABEL else dn_push(mono, n)
                for b2, m in push:
                    _add_into(new, b2, c * m)
            poly = new
        return poly.get(rest, 0)

    def rec(delta: MultiIndex, seq: tuple, val):
        nonlocal total
        rest = beta.minus(delta)
        l = len(seq)
        if rest is not None:
            e = dchain_entry(rest, seq)
            if not is_zero(e):
                total = total + _div(val * e, math.factorial(l))
        for n in labels:
            for b, v in ents[n]:
                d2 = delta + b
                if beta.minus(d2) is None:
                    continue
                # each factor raises [delta] + l, which ends at [beta] - [gamma]
                if bracket(d2) + l + 1 > budget:
                    continue
                rec(d2, seq + (n,), val * v)

    rec(zero(), (), 1)
    return total


def random_characters(window: Window, rng: np.random.Generator, density: float = 0.5,
                      exact: bool = True, max_den: int = 7, labels=None) -> CharacterFamily:
    """Seeded random character family satisfying the population constraints.

    Entries at non purely polynomial populated indices b with |n| < |b| are
    drawn with probability ``density``; the shift is random as well.
    """
    pop = [b for b in enumerate_V(window.cutoff, window.lam, window.alpha)
           if is_populated(b) and not is_purely_polynomial(b)]

    def draw():
        if exact:
            return Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, max_den + 1)))
        return float(rng.normal())

    labs = labels if labels is not None else labels_up_to(math.floor(window.cutoff) + 1, include_zero=True)
    chars = {}
    for n in labs:
        row = {}
        for b in pop:
            if label_below(n, b, window.alpha) and rng.random() < density:
                v = draw()
                if not is_zero(v):
                    row[b] = v
        if row:
            chars[n] = row
    h = (draw(), draw())
    return CharacterFamily(chars, h, window)
