"""Multi-indices over the coordinates z_k (k >= 0) and z_n (n a nonzero pair).

A multi-index is a finitely supported exponent table.  The k-part collects the
exponents of the nonlinearity coordinates z_k, the n-part those of the
polynomial coordinates z_n with n = (n1, n2) != (0, 0).  The parabolic weight
of n is |n| = n1 + 2 n2.

Graded quantities:

* bracket [b] = sum_k k b(k) - sum_n b(n)
* poly_weight |b|_p = sum_n |n| b(n)
* homogeneity |b| = alpha (1 + [b]) + |b|_p, kept as the exact pair
  (1 + [b], |b|_p)
* precedence |b| + lam b(0)
"""
from __future__ import annotations

import itertools
import math
import re
from functools import lru_cache
from typing import Iterable, NamedTuple

DEFAULT_ALPHA = 1.4142135
DEFAULT_LAMBDA = 0.5

# slack used when comparing numeric homogeneities against a cutoff
CUTOFF_SLACK = 1e-9


def weight(n) -> int:
    """Parabolic weight |n| = n1 + 2 n2."""
    return n[0] + 2 * n[1]


def check_lambda(lam: float) -> float:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    return lam


def check_alpha(alpha: float) -> float:
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    return alpha


class Homogeneity(NamedTuple):
    """Exact homogeneity alpha * alpha_mult + int_part (+ zero_count for precedence)."""

    alpha_mult: int
    int_part: int
    zero_count: int = 0

    def value(self, alpha: float) -> float:
        return alpha * self.alpha_mult + self.int_part

    def precedence(self, alpha: float, lam: float) -> float:
        return self.value(alpha) + lam * self.zero_count

    def exceeds(self, deg: int, alpha: float) -> bool:
        """Whether this homogeneity is strictly larger than the integer deg."""
        if self.alpha_mult == 0:
            return self.int_part > deg
        return self.value(alpha) > deg


class MultiIndex:
    """Immutable sparse multi-index.

    ``kpart`` is a sorted tuple of pairs (k, exponent), ``npart`` a sorted tuple
    of pairs ((n1, n2), exponent); stored exponents are always >= 1.
    """

    __slots__ = ("kpart", "npart", "_hash")

    def __init__(self, kpart: Iterable = (), npart: Iterable = ()):
        kd: dict = {}
        for k, e in kpart:
            if k < 0:
                raise ValueError("k must be nonnegative")
            kd[int(k)] = kd.get(int(k), 0) + int(e)
        nd: dict = {}
        for n, e in npart:
            n = (int(n[0]), int(n[1]))
            if n == (0, 0) or n[0] < 0 or n[1] < 0:
                raise ValueError(f"invalid polynomial label {n}")
            nd[n] = nd.get(n, 0) + int(e)
        if any(e < 0 for e in kd.values()) or any(e < 0 for e in nd.values()):
            raise ValueError("negative exponent")
        self.kpart = tuple(sorted((k, e) for k, e in kd.items() if e))
        self.npart = tuple(sorted((n, e) for n, e in nd.items() if e))
        self._hash = hash((self.kpart, self.npart))

    @classmethod
    def _raw(cls, kpart: tuple, npart: tuple) -> "MultiIndex":
        obj = object.__new__(cls)
        obj.kpart = kpart
        obj.npart = npart
        obj._hash = hash((kpart, npart))
        return obj

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls) -> "MultiIndex":
        return _ZERO

    @classmethod
    def ek(cls, k: int, mult: int = 1) -> "MultiIndex":
        return cls(kpart=[(k, mult)])

    @classmethod
    def en(cls, n, mult: int = 1) -> "MultiIndex":
        return cls(npart=[(tuple(n), mult)])

    # -- access ------------------------------------------------------------
    def k(self, k: int) -> int:
        for kk, e in self.kpart:
            if kk == k:
                return e
        return 0

    def n(self, n) -> int:
        n = tuple(n)
        for nn, e in self.npart:
            if nn == n:
                return e
        return 0

    def __getitem__(self, key) -> int:
        if isinstance(key, tuple):
            return self.n(key)
        return self.k(key)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MultiIndex)
            and self._hash == other._hash
            and self.kpart == other.kpart
            and self.npart == other.npart
        )

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "MultiIndex") -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self) -> tuple:
        return (self.kpart, self.npart)

    def __repr__(self) -> str:
        return f"MultiIndex({self})"

    def __str__(self) -> str:
        return render(self)

    def __bool__(self) -> bool:
        return bool(self.kpart or self.npart)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex._raw(_merge(self.kpart, other.kpart, 1), _merge(self.npart, other.npart, 1))

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        """Difference; raises ValueError when some exponent would be negative."""
        res = self.minus(other)
        if res is None:
            raise ValueError(f"{other} is not below {self}")
        return res

    def minus(self, other: "MultiIndex") -> "MultiIndex | None":
        """Difference, or None if other is not componentwise below self."""
        kp = _merge(self.kpart, other.kpart, -1)
        if kp is None:
            return None
        np_ = _merge(self.npart, other.npart, -1)
        if np_ is None:
            return None
        return MultiIndex._raw(kp, np_)

    def le(self, other: "MultiIndex") -> bool:
        """Componentwise order."""
        return other.minus(self) is not None

    def add_k(self, k: int, e: int = 1) -> "MultiIndex | None":
        return _shift(self, k, e, True)

    def add_n(self, n, e: int = 1) -> "MultiIndex | None":
        return _shift(self, tuple(n), e, False)

    # -- graded quantities -------------------------------------------------
    @property
    def length(self) -> int:
        return sum(e for _, e in self.kpart) + sum(e for _, e in self.npart)

    @property
    def k_length(self) -> int:
        return sum(e for _, e in self.kpart)

    def variables(self):
        """Iterate over (is_k, label, exponent)."""
        for k, e in self.kpart:
            yield True, k, e
        for n, e in self.npart:
            yield False, n, e

    def factorial(self) -> int:
        out = 1
        for _, _, e in self.variables():
            out *= math.factorial(e)
        return out

    def sub_indices(self) -> tuple:
        """All multi-indices componentwise below self (including 0 and self)."""
        return _sub_indices(self)


def _merge(a: tuple, b: tuple, sign: int):
    if not b:
        return a
    if not a:
        if sign < 0:
            return None
        return b
    d = dict(a)
    for key, e in b:
        v = d.get(key, 0) + sign * e
        if v < 0:
            return None
        if v:
            d[key] = v
        else:
            d.pop(key, None)
    return tuple(sorted(d.items()))


def _shift(beta: MultiIndex, key, e: int, is_k: bool):
    part = beta.kpart if is_k else beta.npart
    d = dict(part)
    v = d.get(key, 0) + e
    if v < 0:
        return None
    if v:
        d[key] = v
    else:
        d.pop(key, None)
    new = tuple(sorted(d.items()))
    if is_k:
        return MultiIndex._raw(new, beta.npart)
    return MultiIndex._raw(beta.kpart, new)


@lru_cache(maxsize=None)
def _sub_indices(beta: MultiIndex) -> tuple:
    ks = [(k, e) for k, e in beta.kpart]
    ns = [(n, e) for n, e in beta.npart]
    out = []
    for kexp in itertools.product(*[range(e + 1) for _, e in ks]):
        kp = tuple((k, x) for (k, _), x in zip(ks, kexp) if x)
        for nexp in itertools.product(*[range(e + 1) for _, e in ns]):
            np_ = tuple((n, x) for (n, _), x in zip(ns, nexp) if x)
            out.append(MultiIndex._raw(kp, np_))
    return tuple(out)


_ZERO = MultiIndex()


def bracket(beta: MultiIndex) -> int:
    """[b] = sum_k k b(k) - sum_n b(n)."""
    return sum(k * e for k, e in beta.kpart) - sum(e for _, e in beta.npart)


def k_weight(beta: MultiIndex) -> int:
    """|b|_s = sum_k k b(k)."""
    return sum(k * e for k, e in beta.kpart)


def poly_weight(beta: MultiIndex) -> int:
    """|b|_p = sum_n |n| b(n)."""
    return sum(weight(n) * e for n, e in beta.npart)


def homogeneity(beta: MultiIndex) -> Homogeneity:
    return Homogeneity(1 + bracket(beta), poly_weight(beta), beta.k(0))


def hom_value(beta: MultiIndex, alpha: float = DEFAULT_ALPHA) -> float:
    return alpha * (1 + bracket(beta)) + poly_weight(beta)


def precedence(beta: MultiIndex, lam: float = DEFAULT_LAMBDA, alpha: float = DEFAULT_ALPHA) -> float:
    check_lambda(lam)
    return hom_value(beta, alpha) + lam * beta.k(0)


def is_purely_polynomial(beta: MultiIndex) -> bool:
    return not beta.kpart and len(beta.npart) == 1 and beta.npart[0][1] == 1


def poly_label(beta: MultiIndex):
    """The label n of a purely polynomial index e_n."""
    if not is_purely_polynomial(beta):
        raise ValueError(f"{beta} is not purely polynomial")
    return beta.npart[0][0]


def is_populated(beta: MultiIndex) -> bool:
    return is_purely_polynomial(beta) or bracket(beta) >= 0


def in_V(beta: MultiIndex) -> bool:
    return bracket(beta) >= -1


def is_pc1(beta: MultiIndex) -> bool:
    """Whether b = e_k + e_{n_1} + ... + e_{n_{k+1}} for some k."""
    return len(beta.kpart) == 1 and beta.kpart[0][1] == 1 and bracket(beta) == -1 and beta.npart != ()


def hom_less(beta: MultiIndex, gamma: MultiIndex, alpha: float = DEFAULT_ALPHA) -> bool:
    """|beta| < |gamma|, exactly when the alpha multiplicities agree."""
    hb, hg = homogeneity(beta), homogeneity(gamma)
    if hb.alpha_mult == hg.alpha_mult:
        return hb.int_part < hg.int_part
    return hb.value(alpha) < hg.value(alpha)


def label_below(n, beta: MultiIndex, alpha: float = DEFAULT_ALPHA) -> bool:
    """|n| < |beta| using exact pairs when beta has no alpha part."""
    return homogeneity(beta).exceeds(weight(n), alpha)


# -- rendering -------------------------------------------------------------

def render(beta: MultiIndex) -> str:
    """Canonical text form, e.g. ``z0^2 z1 z(1,0)``; the zero index is ``1``."""
    parts = []
    for k, e in beta.kpart:
        parts.append(f"z{k}" + (f"^{e}" if e > 1 else ""))
    for n, e in beta.npart:
        parts.append(f"z({n[0]},{n[1]})" + (f"^{e}" if e > 1 else ""))
    return " ".join(parts) if parts else "1"


_TOKEN = re.compile(r"z(?:(\d+)|\((\d+),(\d+)\))(?:\^(\d+))?$")


def parse(text: str) -> MultiIndex:
    """Inverse of render."""
    text = text.strip()
    if text in ("1", "0", ""):
        return _ZERO
    kp, np_ = [], []
    for tok in text.replace("*", " ").split():
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"cannot parse multi-index token {tok!r}")
        e = int(m.group(4) or 1)
        if m.group(1) is not None:
            kp.append((int(m.group(1)), e))
        else:
            np_.append(((int(m.group(2)), int(m.group(3))), e))
    return MultiIndex(kp, np_)


# -- enumeration -----------------------------------------------------------

def labels_up_to(wmax: int, include_zero: bool = False) -> list:
    """All pairs n with |n| <= wmax, sorted by (weight, n)."""
    out = []
    for w in range(0 if include_zero else 1, wmax + 1):
        for n2 in range(w // 2 + 1):
            out.append((w - 2 * n2, n2))
    return out


def _npart_tables(pmax: int):
    """All n-parts with poly weight <= pmax."""
    labels = labels_up_to(pmax)

    def rec(i, budget):
        if i == len(labels):
            yield ()
            return
        n = labels[i]
        w = weight(n)
        for e in range(budget // w + 1):
            for rest in rec(i + 1, budget - e * w):
                yield (((n, e),) if e else ()) + rest

    yield from rec(0, pmax)


def _kpart_tables(smax: int, zmax: int):
    """All k-parts with sum_{k>=1} k b(k) <= smax and b(0) <= zmax."""

    def rec(k, budget):
        if k > budget:
            yield ()
            return
        for e in range(budget // k + 1):
            for rest in rec(k + 1, budget - e * k):
                yield (((k, e),) if e else ()) + rest

    for z in range(zmax + 1):
        for rest in rec(1, smax):
            yield (((0, z),) if z else ()) + rest


def order_key(beta: MultiIndex, alpha: float, lam: float):
    return (round(precedence(beta, lam, alpha), 9), beta.length, beta.sort_key())


def enumerate_indices(
    cutoff: float,
    lam: float = DEFAULT_LAMBDA,
    alpha: float = DEFAULT_ALPHA,
    min_bracket: int = 0,
    populated_only: bool = True,
) -> list:
    """Multi-indices with precedence <= cutoff and bracket >= min_bracket.

    With ``populated_only`` the purely polynomial indices are added and other
    indices of negative bracket dropped.  The result is sorted by precedence,
    then length, then lexicographically.
    """
    check_lambda(lam)
    check_alpha(alpha)
    if min_bracket < -1:
        raise ValueError("enumeration needs min_bracket >= -1 to be finite")
    c = cutoff + CUTOFF_SLACK
    out = []
    if c <= 0:
        return out
    zmax = math.floor(c / lam)
    for npart in _npart_tables(math.floor(c)):
        npart = tuple(sorted(npart))
        nb = sum(e for _, e in npart)
        pw = sum(weight(n) * e for n, e in npart)
        # alpha (1 + [b]) <= c - pw bounds the k-weight
        smax = math.floor((c - pw) / alpha) - 1 + nb
        if smax < 0:
            continue
        for kpart in _kpart_tables(smax, zmax):
            beta = MultiIndex._raw(kpart, npart)
            br = bracket(beta)
            if br < min_bracket or (populated_only and br < 0):
                continue
            if precedence(beta, lam, alpha) <= c:
                out.append(beta)
    if populated_only:
        for w in range(1, math.floor(c) + 1):
            for n in labels_up_to(w):
                if weight(n) == w:
                    out.append(MultiIndex._raw((), ((n, 1),)))
    out = sorted(set(out), key=lambda b: order_key(b, alpha, lam))
    return out


def enumerate_populated(cutoff: float, lam: float = DEFAULT_LAMBDA, alpha: float = DEFAULT_ALPHA) -> list:
    """Populated multi-indices with precedence <= cutoff, in precedence order."""
    return enumerate_indices(cutoff, lam, alpha, min_bracket=0, populated_only=True)


def enumerate_V(cutoff: float, lam: float = DEFAULT_LAMBDA, alpha: float = DEFAULT_ALPHA) -> list:
    """Multi-indices with bracket >= -1 and precedence <= cutoff."""
    return enumerate_indices(cutoff, lam, alpha, min_bracket=-1, populated_only=False)


class Window:
    """Downward closed truncation window for formal series.

    Contains b iff some b' >= b (componentwise) with [b'] >= -1 has precedence
    <= cutoff.  The cheapest such b' adds 1 + [b] copies of z_(1,0) when
    [b] >= -1 (each lowers the homogeneity by alpha - 1) and raises the bracket
    to -1 with k-coordinates otherwise, so membership reads
    max(0, 1 + [b]) + |b|_p + lam b(0) <= cutoff.  Being downward closed,
    products truncated to the window are exact on it.
    """

    __slots__ = ("cutoff", "lam", "alpha")

    def __init__(self, cutoff: float, lam: float = DEFAULT_LAMBDA, alpha: float = DEFAULT_ALPHA):
        self.cutoff = float(cutoff)
        self.lam = check_lambda(lam)
        self.alpha = check_alpha(alpha)

    def __contains__(self, beta: MultiIndex) -> bool:
        v = max(0, 1 + bracket(beta)) + poly_weight(beta) + self.lam * beta.k(0)
        return v <= self.cutoff + CUTOFF_SLACK

    def in_scope(self, beta: MultiIndex) -> bool:
        """[b] >= -1 and precedence <= cutoff."""
        return bracket(beta) >= -1 and precedence(beta, self.lam, self.alpha) <= self.cutoff + CUTOFF_SLACK

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Window)
            and (self.cutoff, self.lam, self.alpha) == (other.cutoff, other.lam, other.alpha)
        )

    def __hash__(self) -> int:
        return hash((self.cutoff, self.lam, self.alpha))

    def __repr__(self) -> str:
        return f"Window(cutoff={self.cutoff}, lam={self.lam}, alpha={self.alpha})"


def zero() -> MultiIndex:
    return _ZERO


def ek(k: int, mult: int = 1) -> MultiIndex:
    return MultiIndex.ek(k, mult)


def en(n, mult: int = 1) -> MultiIndex:
    return MultiIndex.en(n, mult)
