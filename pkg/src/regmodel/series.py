"""Finitely supported formal power series over multi-indices.

Coefficients may be exact rationals, floats, numpy arrays (batched scalars) or
any object supporting addition and scalar multiplication (e.g. fields).  A
series may carry a :class:`~regmodel.multiindex.Window`; products and
derivations then drop the terms outside the window.  The window is downward
closed, so truncated products are exact on it.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .multiindex import (
    MultiIndex,
    Window,
    in_V,
    is_populated,
    is_purely_polynomial,
    render,
    zero,
)

TAGS = ("T*", "Tbar*", "Ttilde*", "V", "unrestricted")


def is_zero(c) -> bool:
    if isinstance(c, (int, float, Fraction, complex)):
        return c == 0
    if isinstance(c, np.ndarray):
        return not c.any()
    f = getattr(c, "is_zero", None)
    return bool(f()) if f is not None else False


def tag_predicate(tag: str) -> Callable[[MultiIndex], bool]:
    if tag == "T*":
        return is_populated
    if tag == "Tbar*":
        return is_purely_polynomial
    if tag == "Ttilde*":
        return lambda b: is_populated(b) and not is_purely_polynomial(b)
    if tag == "V":
        return in_V
    if tag == "unrestricted":
        return lambda b: True
    raise ValueError(f"unknown subspace tag {tag!r}")


class FormalSeries:
    """Association multi-index -> coefficient; absent entries are zero."""

    __slots__ = ("coeffs", "window")

    def __init__(self, coeffs: dict | None = None, window: Window | None = None):
        self.window = window
        self.coeffs = {}
        if coeffs:
            for b, c in coeffs.items():
                if is_zero(c):
                    continue
                if window is not None and b not in window:
                    raise ValueError(f"coefficient at {b} lies outside {window}")
                self.coeffs[b] = c

    # -- constructors ------------------------------------------------------
    @classmethod
    def one(cls, window: Window | None = None, unit=1) -> "FormalSeries":
        return cls({zero(): unit}, window)

    @classmethod
    def zk(cls, k: int, window: Window | None = None) -> "FormalSeries":
        return cls({MultiIndex.ek(k): 1}, window)

    @classmethod
    def zn(cls, n, window: Window | None = None) -> "FormalSeries":
        return cls({MultiIndex.en(n): 1}, window)

    @classmethod
    def monomial(cls, beta: MultiIndex, c=1, window: Window | None = None) -> "FormalSeries":
        return cls({beta: c}, window)

    # -- access ------------------------------------------------------------
    def __getitem__(self, beta: MultiIndex):
        return self.coeffs.get(beta, 0)

    def get(self, beta: MultiIndex, default=0):
        return self.coeffs.get(beta, default)

    def support(self) -> list:
        return sorted(self.coeffs, key=MultiIndex.sort_key)

    def items(self):
        return self.coeffs.items()

    def __len__(self) -> int:
        return len(self.coeffs)

    def __iter__(self):
        return iter(self.coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormalSeries):
            return NotImplemented
        if set(self.coeffs) != set(other.coeffs):
            return False
        return all(_eq(self.coeffs[b], other.coeffs[b]) for b in self.coeffs)

    __hash__ = None

    def is_zero(self) -> bool:
        return not self.coeffs

    def truncate(self, window: Window | None) -> "FormalSeries":
        if window is None:
            return FormalSeries(self.coeffs, None)
        return FormalSeries({b: c for b, c in self.coeffs.items() if b in window}, window)

    # -- linear structure --------------------------------------------------
    def _window_with(self, other: "FormalSeries") -> Window | None:
        if self.window is not None and other.window is not None and self.window != other.window:
            raise ValueError("truncation mismatch")
        return self.window if self.window is not None else other.window

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        w = self._window_with(other)
        out = dict(self.coeffs)
        for b, c in other.coeffs.items():
            out[b] = out[b] + c if b in out else c
        return FormalSeries(out, None).truncate(w) if w is not None else FormalSeries(out)

    def __neg__(self) -> "FormalSeries":
        return FormalSeries({b: -c for b, c in self.coeffs.items()}, self.window)

    def __sub__(self, other: "FormalSeries") -> "FormalSeries":
        return self + (-other)

    def scale(self, s) -> "FormalSeries":
        return FormalSeries({b: s * c for b, c in self.coeffs.items()}, self.window)

    def map(self, f: Callable) -> "FormalSeries":
        return FormalSeries({b: f(c) for b, c in self.coeffs.items()}, self.window)

    def __mul__(self, other):
        if isinstance(other, FormalSeries):
            return multiply(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __repr__(self) -> str:
        return f"FormalSeries({self})"

    def __str__(self) -> str:
        return render_series(self)


def _eq(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return bool(np.array_equal(a, b))
    return a == b


def multiply(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """Cauchy product (ab)_beta = sum_{g + g' = beta} a_g b_g'."""
    w = a._window_with(b)
    out: dict = {}
    for g, ca in a.coeffs.items():
        for h, cb in b.coeffs.items():
            beta = g + h
            if w is not None and beta not in w:
                continue
            v = ca * cb
            out[beta] = out[beta] + v if beta in out else v
    return FormalSeries(out, w)


def power(a: FormalSeries, l: int, window: Window | None = None) -> FormalSeries:
    out = FormalSeries.one(window if window is not None else a.window)
    for _ in range(l):
        out = multiply(out, a)
    return out


# -- derivations -----------------------------------------------------------

def d0_push(gamma: MultiIndex):
    """Image of the monomial z^gamma under D^(0), as (beta, coefficient) pairs.

    D^(0) z_k = (k+1) z_{k+1} extended as a derivation.
    """
    out = []
    for k, e in gamma.kpart:
        beta = gamma.add_k(k, -1).add_k(k + 1, 1)
        out.append((beta, (k + 1) * e))
    return out


def dn_push(gamma: MultiIndex, n):
    """Image of z^gamma under D^(n) = d/dz_n."""
    e = gamma.n(n)
    if not e:
        return []
    return [(gamma.add_n(n, -1), e)]


def d0_row(eta: MultiIndex):
    """Row of the matrix of D^(0) at eta: pairs (gamma, (D^(0))_eta^gamma).

    Nonzero iff eta + e_k = gamma + e_{k+1}, with value (k+1) gamma(k).
    """
    out = []
    for kk, e in eta.kpart:
        if kk == 0:
            continue
        k = kk - 1
        gamma = eta.add_k(kk, -1).add_k(k, 1)
        out.append((gamma, (k + 1) * gamma.k(k)))
    return out


def dn_row(eta: MultiIndex, n):
    """Row of D^(n) at eta: single entry at eta + e_n with value gamma(n)."""
    gamma = eta.add_n(n, 1)
    return [(gamma, gamma.n(n))]


def _apply_push(pi: FormalSeries, push) -> FormalSeries:
    w = pi.window
    out: dict = {}
    for g, c in pi.coeffs.items():
        for beta, m in push(g):
            if w is not None and beta not in w:
                continue
            v = m * c
            out[beta] = out[beta] + v if beta in out else v
    return FormalSeries(out, w)


def apply_D0(pi: FormalSeries) -> FormalSeries:
    return _apply_push(pi, d0_push)


def apply_Dn(pi: FormalSeries, n) -> FormalSeries:
    n = tuple(n)
    if n == (0, 0):
        raise ValueError("D^(n) needs n != (0,0); use apply_D0")
    return _apply_push(pi, lambda g: dn_push(g, n))


def apply_D(pi: FormalSeries, n) -> FormalSeries:
    """D^(0) for n = (0,0), else D^(n)."""
    return apply_D0(pi) if tuple(n) == (0, 0) else apply_Dn(pi, n)


# -- subspaces -------------------------------------------------------------

def project(pi: FormalSeries, tag: str) -> FormalSeries:
    pred = tag_predicate(tag)
    return FormalSeries({b: c for b, c in pi.coeffs.items() if pred(b)}, pi.window)


def check_tag(pi: FormalSeries, tag: str) -> bool:
    pred = tag_predicate(tag)
    return all(pred(b) for b in pi.coeffs)


# -- rendering -------------------------------------------------------------

def _fmt(c) -> str:
    if isinstance(c, Fraction):
        return str(c)
    if isinstance(c, float):
        return f"{c:.12g}"
    return str(c)


def render_series(pi: FormalSeries) -> str:
    if not pi.coeffs:
        return "0"
    terms = []
    for b in pi.support():
        terms.append(f"{_fmt(pi.coeffs[b])} * {render(b)}")
    return " + ".join(terms)


def from_terms(terms: Iterable, window: Window | None = None) -> FormalSeries:
    """Build a series from (multi-index, coefficient) pairs, summing repeats."""
    out: dict = {}
    for b, c in terms:
        out[b] = out[b] + c if b in out else c
    return FormalSeries(out, window)
