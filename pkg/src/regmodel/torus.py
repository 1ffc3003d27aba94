"""Periodic spectral calculus on the unit torus.

* :class:`FourierField` -- band-limited trigonometric polynomial, stored as the
  complex coefficient array c[k1 + B, k2 + B] for |k1|, |k2| <= B.
* :class:`Polynomial` -- polynomial in y = (y1, y2), keyed by exponent pairs.
* :class:`PolyPeriodic` -- polynomial in y with periodic coefficients,
  F(x, y) = sum_n f_n(x) y^n.  Its diagonal z -> F(z, z) is the function the
  model evaluates; D_i = d/dx_i + d/dy_i differentiates the diagonal.

The heat-type operator is d_2 - d_1^2; on the mode exp(2 pi i k.x) its symbol
is 2 pi i k2 + (2 pi k1)^2.  The semigroup kernel psi_t has Fourier symbol
exp(-t (xi1^4 + xi2^2)).
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import convolve

TWO_PI = 2.0 * math.pi
DEFAULT_MODES = 32


class BandwidthError(RuntimeError):
    """Accumulated bandwidth exceeds the configured mode cutoff."""


def pweight(n) -> int:
    return n[0] + 2 * n[1]


# -- Fourier fields --------------------------------------------------------

class FourierField:
    """Real trigonometric polynomial with modes |k1|, |k2| <= band."""

    __slots__ = ("c", "band", "K")

    def __init__(self, coeffs: np.ndarray, K: int = DEFAULT_MODES):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 != 1:
            raise ValueError("coefficient array must be square with odd size")
        band = (c.shape[0] - 1) // 2
        if band > K:
            raise BandwidthError(f"band {band} exceeds mode cutoff {K}")
        self.c = c
        self.band = band
        self.K = K

    # -- constructors ------------------------------------------------------
    @classmethod
    def zeros(cls, band: int = 0, K: int = DEFAULT_MODES) -> "FourierField":
        return cls(np.zeros((2 * band + 1, 2 * band + 1), dtype=complex), K)

    @classmethod
    def constant(cls, value: float, K: int = DEFAULT_MODES) -> "FourierField":
        return cls(np.array([[value]], dtype=complex), K)

    @classmethod
    def from_modes(cls, modes: dict, K: int = DEFAULT_MODES) -> "FourierField":
        """From an association (k1, k2) -> complex amplitude; realness is imposed."""
        band = max([max(abs(k[0]), abs(k[1])) for k in modes] + [0])
        c = np.zeros((2 * band + 1, 2 * band + 1), dtype=complex)
        for (k1, k2), a in modes.items():
            c[k1 + band, k2 + band] += a
        return cls(c, K).hermitian()

    @classmethod
    def cos_mode(cls, k, amplitude: float = 1.0, K: int = DEFAULT_MODES) -> "FourierField":
        """amplitude * cos(2 pi k.x)."""
        k = (int(k[0]), int(k[1]))
        return cls.from_modes({k: amplitude / 2, (-k[0], -k[1]): amplitude / 2}, K)

    @classmethod
    def random_noise(cls, seed: int, max_mode: int = 2, amplitude: float = 1.0,
                     K: int = DEFAULT_MODES) -> "FourierField":
        """Seeded zero-mean trigonometric polynomial.

        ``amplitude`` is the maximum of |xi| over the 64 x 64 sampling grid.
        """
        rng = np.random.default_rng(seed)
        m = max_mode
        c = rng.normal(size=(2 * m + 1, 2 * m + 1)) + 1j * rng.normal(size=(2 * m + 1, 2 * m + 1))
        c[m, m] = 0.0
        f = cls(c, K).hermitian()
        peak = np.abs(f.grid(max(64, 2 * m + 1))).max()
        return f.scale(amplitude / peak)

    # -- basic structure ---------------------------------------------------
    def hermitian(self) -> "FourierField":
        """Project onto real-valued fields."""
        c = 0.5 * (self.c + np.conj(self.c[::-1, ::-1]))
        return FourierField(c, self.K)

    def copy(self) -> "FourierField":
        return FourierField(self.c.copy(), self.K)

    def padded(self, band: int) -> np.ndarray:
        if band == self.band:
            return self.c
        if band < self.band:
            raise ValueError("cannot pad to a smaller band")
        out = np.zeros((2 * band + 1, 2 * band + 1), dtype=complex)
        d = band - self.band
        out[d:d + 2 * self.band + 1, d:d + 2 * self.band + 1] = self.c
        return out

    def trimmed(self) -> "FourierField":
        """Drop exactly vanishing outer rings."""
        c = self.c
        b = self.band
        while b > 0:
            ring = np.concatenate([c[0], c[-1], c[1:-1, 0], c[1:-1, -1]])
            if ring.any():
                break
            c = c[1:-1, 1:-1]
            b -= 1
        return FourierField(c, self.K)

    @property
    def mean(self) -> float:
        return float(self.c[self.band, self.band].real)

    def wavenumbers(self):
        k = np.arange(-self.band, self.band + 1)
        return k[:, None], k[None, :]

    def max_abs(self) -> float:
        return float(np.abs(self.c).max()) if self.c.size else 0.0

    def is_zero(self) -> bool:
        return not self.c.any()

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other: "FourierField") -> "FourierField":
        b = max(self.band, other.band)
        return FourierField(self.padded(b) + other.padded(b), max(self.K, other.K))

    def __sub__(self, other: "FourierField") -> "FourierField":
        b = max(self.band, other.band)
        return FourierField(self.padded(b) - other.padded(b), max(self.K, other.K))

    def __neg__(self) -> "FourierField":
        return FourierField(-self.c, self.K)

    def scale(self, s) -> "FourierField":
        return FourierField(self.c * s, self.K)

    def __rmul__(self, s) -> "FourierField":
        return self.scale(s)

    def __mul__(self, other):
        if isinstance(other, FourierField):
            return self.multiply(other)
        return self.scale(other)

    def multiply(self, other: "FourierField") -> "FourierField":
        """Exact product of trigonometric polynomials (coefficient convolution)."""
        K = max(self.K, other.K)
        if self.band + other.band > K:
            raise BandwidthError(f"product band {self.band + other.band} exceeds mode cutoff {K}")
        if self.band == 0:
            return other.scale(self.c[0, 0])
        if other.band == 0:
            return self.scale(other.c[0, 0])
        c = convolve(self.c, other.c, mode="full")
        return FourierField(c, K).hermitian()

    # -- calculus ----------------------------------------------------------
    def derivative(self, order=(1, 0)) -> "FourierField":
        k1, k2 = self.wavenumbers()
        sym = (1j * TWO_PI * k1) ** order[0] * (1j * TWO_PI * k2) ** order[1]
        return FourierField(self.c * sym, self.K)

    def heat_symbol(self) -> np.ndarray:
        k1, k2 = self.wavenumbers()
        return 1j * TWO_PI * k2 + (TWO_PI * k1) ** 2

    def heat_inverse(self) -> "FourierField":
        """Mean-zero U with (d_2 - d_1^2) U = f - mean(f)."""
        sym = self.heat_symbol()
        b = self.band
        sym[b, b] = 1.0
        c = self.c / sym
        c[b, b] = 0.0
        return FourierField(c, self.K)

    def apply_heat(self) -> "FourierField":
        return FourierField(self.c * self.heat_symbol(), self.K)

    def mollify(self, t: float, derivative=(0, 0)) -> "FourierField":
        """Mode k times (2 pi i k)^derivative exp(-t((2 pi k1)^4 + (2 pi k2)^2))."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        k1, k2 = self.wavenumbers()
        sym = np.exp(-t * ((TWO_PI * k1) ** 4 + (TWO_PI * k2) ** 2))
        f = FourierField(self.c * sym, self.K)
        if derivative != (0, 0):
            f = f.derivative(derivative)
        return f

    # -- evaluation --------------------------------------------------------
    def evaluate(self, points) -> np.ndarray:
        """Values at points of shape (..., 2)."""
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        pts = pts.reshape(-1, 2)
        k = np.arange(-self.band, self.band + 1)
        e1 = np.exp(1j * TWO_PI * np.outer(pts[:, 0], k))
        e2 = np.exp(1j * TWO_PI * np.outer(pts[:, 1], k))
        vals = np.einsum("pa,ab,pb->p", e1, self.c, e2).real
        return vals.reshape(shape)

    def grid(self, m: int) -> np.ndarray:
        """Values on the uniform m x m grid of the unit cell."""
        b = self.band
        if m < 2 * b + 1:
            raise ValueError("grid too coarse for the band")
        full = np.zeros((m, m), dtype=complex)
        k = np.arange(-b, b + 1) % m
        full[np.ix_(k, k)] = self.c
        return (np.fft.ifft2(full) * m * m).real

    def to_modes(self) -> dict:
        out = {}
        b = self.band
        for i, j in zip(*np.nonzero(self.c)):
            out[(int(i - b), int(j - b))] = complex(self.c[i, j])
        return out


# -- polynomials -----------------------------------------------------------

def _monomial_derivative(n, d):
    """d^d y^n = coeff * y^(n-d)."""
    if d[0] > n[0] or d[1] > n[1]:
        return 0, None
    c = math.perm(n[0], d[0]) * math.perm(n[1], d[1])
    return c, (n[0] - d[0], n[1] - d[1])


class Polynomial:
    """Real polynomial sum_n a_n y^n with exponent pairs n."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms = {}
        for n, a in (terms or {}).items():
            if a != 0:
                self.terms[(int(n[0]), int(n[1]))] = a

    @classmethod
    def monomial(cls, n, a=1.0) -> "Polynomial":
        return cls({tuple(n): a})

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = dict(self.terms)
        for n, a in other.terms.items():
            out[n] = out.get(n, 0) + a
        return Polynomial(out)

    def __neg__(self) -> "Polynomial":
        return Polynomial({n: -a for n, a in self.terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def scale(self, s) -> "Polynomial":
        return Polynomial({n: s * a for n, a in self.terms.items()})

    def __rmul__(self, s) -> "Polynomial":
        return self.scale(s)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            out: dict = {}
            for n, a in self.terms.items():
                for m, b in other.terms.items():
                    key = (n[0] + m[0], n[1] + m[1])
                    out[key] = out.get(key, 0) + a * b
            return Polynomial(out)
        return self.scale(other)

    def derivative(self, d) -> "Polynomial":
        out: dict = {}
        for n, a in self.terms.items():
            c, m = _monomial_derivative(n, d)
            if c:
                out[m] = out.get(m, 0) + c * a
        return Polynomial(out)

    def heat(self) -> "Polynomial":
        """(d_y2 - d_y1^2) applied to the polynomial."""
        return self.derivative((0, 1)) - self.derivative((2, 0))

    def degree(self) -> int:
        return max((pweight(n) for n in self.terms), default=-1)

    def evaluate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for n, a in self.terms.items():
            out = out + a * pts[..., 0] ** n[0] * pts[..., 1] ** n[1]
        return out

    def max_abs(self) -> float:
        return max((abs(a) for a in self.terms.values()), default=0.0)

    def is_zero(self) -> bool:
        return not self.terms

    def to_polyperiodic(self, K: int = DEFAULT_MODES) -> "PolyPeriodic":
        return PolyPeriodic({n: FourierField.constant(a, K) for n, a in self.terms.items()}, K)

    def __repr__(self) -> str:
        return f"Polynomial({self.terms})"


def shifted_power(m, x) -> Polynomial:
    """(y - x)^m expanded into monomials."""
    out = {}
    for j1 in range(m[0] + 1):
        for j2 in range(m[1] + 1):
            c = math.comb(m[0], j1) * math.comb(m[1], j2) * (-x[0]) ** (m[0] - j1) * (-x[1]) ** (m[1] - j2)
            out[(j1, j2)] = out.get((j1, j2), 0) + c
    return Polynomial(out)


# -- polynomial-periodic objects -------------------------------------------

class PolyPeriodic:
    """F(x, y) = sum_n f_n(x) y^n with band-limited periodic coefficients."""

    __slots__ = ("terms", "K")

    def __init__(self, terms: dict | None = None, K: int = DEFAULT_MODES):
        self.K = K
        self.terms = {}
        for n, f in (terms or {}).items():
            if not f.is_zero():
                self.terms[(int(n[0]), int(n[1]))] = f

    @classmethod
    def zero(cls, K: int = DEFAULT_MODES) -> "PolyPeriodic":
        return cls({}, K)

    @classmethod
    def from_field(cls, f: FourierField) -> "PolyPeriodic":
        return cls({(0, 0): f}, f.K)

    @classmethod
    def monomial(cls, n, a: float = 1.0, K: int = DEFAULT_MODES) -> "PolyPeriodic":
        return cls({tuple(n): FourierField.constant(a, K)}, K)

    # -- structure ---------------------------------------------------------
    def degree(self) -> int:
        """Largest parabolic weight |n| with a nonzero coefficient, -1 if zero."""
        return max((pweight(n) for n in self.terms), default=-1)

    def band(self) -> int:
        return max((f.band for f in self.terms.values()), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        return max((f.max_abs() for f in self.terms.values()), default=0.0)

    def average(self) -> Polynomial:
        """Torus average in x: sum_n mean(f_n) y^n."""
        return Polynomial({n: f.mean for n, f in self.terms.items()})

    def coefficient(self, n) -> FourierField:
        return self.terms.get(tuple(n), FourierField.zeros(0, self.K))

    # -- linear structure --------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Polynomial):
            other = other.to_polyperiodic(self.K)
        elif isinstance(other, (int, float)) and other == 0:
            return self
        out = dict(self.terms)
        for n, f in other.terms.items():
            out[n] = out[n] + f if n in out else f
        return PolyPeriodic(out, max(self.K, other.K))

    __radd__ = __add__

    def __neg__(self) -> "PolyPeriodic":
        return PolyPeriodic({n: -f for n, f in self.terms.items()}, self.K)

    def __sub__(self, other) -> "PolyPeriodic":
        if isinstance(other, Polynomial):
            other = other.to_polyperiodic(self.K)
        return self + (-other)

    def scale(self, s) -> "PolyPeriodic":
        return PolyPeriodic({n: f.scale(s) for n, f in self.terms.items()}, self.K)

    def __rmul__(self, s):
        return self.scale(s)

    def __mul__(self, other):
        if isinstance(other, PolyPeriodic):
            return self.multiply(other)
        if isinstance(other, FourierField):
            return PolyPeriodic({n: f.multiply(other) for n, f in self.terms.items()}, self.K)
        if isinstance(other, Polynomial):
            return self.multiply(other.to_polyperiodic(self.K))
        return self.scale(other)

    def multiply(self, other: "PolyPeriodic") -> "PolyPeriodic":
        out: dict = {}
        for n, f in self.terms.items():
            for m, g in other.terms.items():
                key = (n[0] + m[0], n[1] + m[1])
                prod = f.multiply(g)
                out[key] = out[key] + prod if key in out else prod
        return PolyPeriodic(out, max(self.K, other.K))

    # -- doubled-variable calculus ------------------------------------------
    def D(self, i: int) -> "PolyPeriodic":
        """D_i = d/dx_i + d/dy_i."""
        d = (1, 0) if i == 1 else (0, 1)
        out: dict = {}
        for n, f in self.terms.items():
            df = f.derivative(d)
            out[n] = out[n] + df if n in out else df
            if n[i - 1] > 0:
                m = (n[0] - 1, n[1]) if i == 1 else (n[0], n[1] - 1)
                g = f.scale(n[i - 1])
                out[m] = out[m] + g if m in out else g
        return PolyPeriodic(out, self.K)

    def Dn(self, n) -> "PolyPeriodic":
        out = self
        for _ in range(n[0]):
            out = out.D(1)
        for _ in range(n[1]):
            out = out.D(2)
        return out

    def heat(self) -> "PolyPeriodic":
        """(D_2 - D_1^2) F."""
        return self.D(2) - self.D(1).D(1)

    def mollify_x(self, t: float) -> "PolyPeriodic":
        """Mollify the periodic coefficients only (not the diagonal)."""
        return PolyPeriodic({n: f.mollify(t) for n, f in self.terms.items()}, self.K)

    # -- evaluation --------------------------------------------------------
    def evaluate(self, x, y) -> np.ndarray:
        """F(x, y) for arrays of points x, y of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])
        for n, f in self.terms.items():
            out = out + f.evaluate(x) * y[..., 0] ** n[0] * y[..., 1] ** n[1]
        return out

    def diag(self, points) -> np.ndarray:
        """Diagonal values F(z, z)."""
        return self.evaluate(points, points)

    def diag_derivative(self, n, points) -> np.ndarray:
        return self.Dn(n).diag(points)

    def __repr__(self) -> str:
        return f"PolyPeriodic(degree={self.degree()}, band={self.band()})"


# -- heat solve ------------------------------------------------------------

def heat_solve(f: PolyPeriodic, q: Polynomial | None = None, max_degree: int | None = None):
    """Unique (U, P) with (D_2 - D_1^2) U + P = f and torus average of U equal to q.

    P = mean(f) - (d_y2 - d_y1^2) q is a polynomial.  With U~ = U - q and
    f~ = f - mean(f) the coefficients solve, for descending |n|,

        (d_2 - d_1^2) U~_n = 2(n1+1) d_1 U~_{n+(1,0)} + (n1+2)(n1+1) U~_{n+(2,0)}
                             - (n2+1) U~_{n+(0,1)} + f~_n

    with zero averages.
    """
    q = q if q is not None else Polynomial()
    K = f.K
    avg = f.average()
    P = avg - q.heat()
    deg = f.degree()
    if max_degree is not None and max(deg, q.degree()) > max_degree:
        raise ValueError(f"degree {max(deg, q.degree())} exceeds the degree cutoff {max_degree}")
    labels = sorted(
        {(a, b) for a in range(deg + 1) for b in range(deg // 2 + 1) if a + 2 * b <= deg},
        key=lambda n: (-pweight(n), n),
    )
    Ut: dict = {}
    for n in labels:
        rhs = f.terms.get(n)
        if rhs is not None:
            rhs = rhs - FourierField.constant(rhs.mean, K)
        parts = []
        u = Ut.get((n[0] + 1, n[1]))
        if u is not None:
            parts.append(u.derivative((1, 0)).scale(2 * (n[0] + 1)))
        u = Ut.get((n[0] + 2, n[1]))
        if u is not None:
            parts.append(u.scale((n[0] + 2) * (n[0] + 1)))
        u = Ut.get((n[0], n[1] + 1))
        if u is not None:
            parts.append(u.scale(-(n[1] + 1)))
        for p in parts:
            rhs = p if rhs is None else rhs + p
        if rhs is None:
            continue
        sol = rhs.heat_inverse().trimmed()
        if not sol.is_zero():
            Ut[n] = sol
    U = PolyPeriodic(Ut, K) + q.to_polyperiodic(K)
    return U, P


def heat_residual(U: PolyPeriodic, P: Polynomial, f: PolyPeriodic) -> float:
    """Max coefficient of (D_2 - D_1^2) U + P - f."""
    r = U.heat() + P - f
    return r.max_abs()


# -- parabolic metric ------------------------------------------------------

def cc_distance(x, y, periodic: bool = True):
    """|y1 - x1| + sqrt|y2 - x2|, differences taken modulo 1 when periodic."""
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    if periodic:
        d = d - np.round(d)
    return np.abs(d[..., 0]) + np.sqrt(np.abs(d[..., 1]))


def sphere_points(x, r: float, count: int = 64) -> np.ndarray:
    """Points y with |y1 - x1| + sqrt|y2 - x2| = r (not wrapped)."""
    half = count // 2
    u = np.cos(np.pi * (np.arange(half) + 0.5) / half)
    d1 = r * u
    d2 = (r * (1.0 - np.abs(u))) ** 2
    d = np.concatenate([np.stack([d1, d2], -1), np.stack([d1, -d2], -1)])
    return np.asarray(x, dtype=float) + d


# -- semigroup kernel ------------------------------------------------------

KERNEL_FLOOR = 1e-14


@lru_cache(maxsize=None)
def _factor_table(power: int, order: int):
    """Table of the 1-d factor with symbol exp(-k^power), differentiated `order` times.

    Returns (step, values) on s = 0, step, 2 step, ... up to where the factor
    and its derivative fall below KERNEL_FLOOR times the peak.
    """
    kmax = (40.0) ** (1.0 / power)
    nk = 8000
    k = np.linspace(0.0, kmax, nk + 1)
    wk = np.full(nk + 1, kmax / nk)
    wk[0] *= 0.5
    wk[-1] *= 0.5
    sym = np.exp(-k ** power) * k ** order
    step = 0.005
    smax = 40.0
    s = np.arange(0.0, smax + step, step)
    # (1/2pi) int (ik)^j e^{-k^p} e^{iks} dk over the real line, using parity
    if order % 2 == 0:
        vals = (np.cos(np.outer(s, k)) @ (sym * wk)) / math.pi * (-1) ** (order // 2)
    else:
        vals = -(np.sin(np.outer(s, k)) @ (sym * wk)) / math.pi * (-1) ** (order // 2)
    peak = np.abs(vals).max()
    big = np.nonzero(np.abs(vals) > KERNEL_FLOOR * peak)[0]
    last = min(len(s) - 1, big[-1] + 20)
    return step, vals[: last + 1]


class KernelFactor:
    """Interpolated 1-d factor (even for even order, odd for odd order)."""

    def __init__(self, power: int, order: int = 0):
        self.power = power
        self.order = order
        step, vals = _factor_table(power, order)
        self.step = step
        self.support = step * (len(vals) - 1)
        s = step * np.arange(len(vals))
        self.spline = CubicSpline(s, vals)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        v = np.where(a <= self.support, self.spline(np.minimum(a, self.support)), 0.0)
        if self.order % 2 == 1:
            v = v * np.sign(s)
        return v


@lru_cache(maxsize=None)
def kernel_factor(power: int, order: int = 0) -> KernelFactor:
    return KernelFactor(power, order)


def gaussian_factor(s, order: int = 0) -> np.ndarray:
    """Closed form of the factor with symbol exp(-k^2) and its derivatives."""
    s = np.asarray(s, dtype=float)
    g = np.exp(-s * s / 4.0) / (2.0 * math.sqrt(math.pi))
    if order == 0:
        return g
    if order == 1:
        return -s / 2.0 * g
    if order == 2:
        return (s * s / 4.0 - 0.5) * g
    return kernel_factor(2, order)(s)


def psi_kernel(t: float, z, derivative=(0, 0)) -> np.ndarray:
    """psi_t(z) = t^{-3/4} phi(t^{-1/4} z1) g(t^{-1/2} z2), optionally differentiated."""
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=float)
    a, b = derivative
    s1 = z[..., 0] * t ** -0.25
    s2 = z[..., 1] * t ** -0.5
    v = kernel_factor(4, a)(s1) * gaussian_factor(s2, b)
    return v * t ** (-0.75 - a / 4.0 - b / 2.0)


def kernel_support(t: float) -> tuple:
    """Half widths beyond which psi_t is below the floor."""
    return kernel_factor(4, 0).support * t ** 0.25, 2.0 * math.sqrt(-4.0 * math.log(KERNEL_FLOOR)) * t ** 0.5


def _quadrature_nodes(t: float, m: int, derivative=(0, 0)):
    R1 = kernel_factor(4, derivative[0]).support * t ** 0.25
    R2 = math.sqrt(-4.0 * math.log(KERNEL_FLOOR) + 40.0) * t ** 0.5
    h1 = 2 * R1 / m
    h2 = 2 * R2 / m
    u1 = -R1 + h1 * (np.arange(m) + 0.5)
    u2 = -R2 + h2 * (np.arange(m) + 0.5)
    U1, U2 = np.meshgrid(u1, u2, indexing="ij")
    u = np.stack([U1, U2], -1).reshape(-1, 2)
    w = psi_kernel(t, u, derivative) * h1 * h2
    return u, w


def mollify_pointwise(g: Callable, t: float, z, rtol: float = 1e-8, m0: int = 48,
                      mmax: int = 768, derivative=(0, 0)):
    """int psi_t(z - y) g(y) dy by a refined tensor midpoint rule.

    ``g`` maps an array of points (N, 2) to values (N,).  Returns the value
    and the achieved difference between the last two refinements.
    """
    z = np.asarray(z, dtype=float)
    prev = None
    m = m0
    while True:
        u, w = _quadrature_nodes(t, m, derivative)
        val = float(np.dot(w, g(z - u)))
        if prev is not None:
            err = abs(val - prev)
            if err <= rtol * max(1.0, abs(val)):
                return val, err
            if m >= mmax:
                raise RuntimeError(f"quadrature tolerance not met: error estimate {err:.3e}")
        prev = val
        m *= 2


def kernel_moment_check(n, eta: float, t: float, m: int = 400) -> float:
    """int |d^n psi_t(y)| |y|^eta dy / (t^{1/4})^{eta - |n|}."""
    u, w = _quadrature_nodes(t, m, tuple(n))
    R1 = kernel_factor(4, n[0]).support * t ** 0.25
    R2 = math.sqrt(-4.0 * math.log(KERNEL_FLOOR) + 40.0) * t ** 0.5
    h = (2 * R1 / m) * (2 * R2 / m)
    dist = np.abs(u[:, 0]) + np.sqrt(np.abs(u[:, 1]))
    val = np.sum(np.abs(w) * dist ** eta)
    return float(val / (t ** 0.25) ** (eta - pweight(n)))


# -- exact mollification of poly-periodic diagonals -------------------------

def _symbol_derivative_polys(power: int, order: int, t: float):
    """Coefficients of p_j with d^j/dxi^j exp(-t xi^power) = p_j(xi) exp(-t xi^power)."""
    polys = [np.array([1.0])]
    for _ in range(order):
        p = polys[-1]
        dp = np.polynomial.polynomial.polyder(p) if len(p) > 1 else np.array([0.0])
        shifted = np.concatenate([np.zeros(power - 1), p]) * (-t * power)
        out = np.zeros(max(len(dp), len(shifted)))
        out[: len(dp)] += dp
        out[: len(shifted)] += shifted
        polys.append(out)
    return polys


def _moment_symbols(t: float, j, band: int):
    """M_j(t, 2 pi k) = i^{|j|} d_xi^j psi_hat_t at xi = 2 pi k, as an array over modes."""
    k = TWO_PI * np.arange(-band, band + 1)
    p1 = _symbol_derivative_polys(4, j[0], t)[j[0]]
    p2 = _symbol_derivative_polys(2, j[1], t)[j[1]]
    f1 = np.polynomial.polynomial.polyval(k, p1) * np.exp(-t * k ** 4)
    f2 = np.polynomial.polynomial.polyval(k, p2) * np.exp(-t * k ** 2)
    return (1j) ** (j[0] + j[1]) * np.outer(f1, f2)


def mollify_diag(F: PolyPeriodic, t: float) -> PolyPeriodic:
    """A poly-periodic object whose diagonal is psi_t * (diagonal of F).

    With y = z - u, (z - u)^m = sum_j C(m,j) z^{m-j} (-u)^j and
    int psi_t(u) u^j exp(-2 pi i k.u) du = i^{|j|} d^j psi_hat_t(2 pi k).
    """
    if t == 0:
        return F
    out: dict = {}
    for m, f in F.terms.items():
        for j1 in range(m[0] + 1):
            for j2 in range(m[1] + 1):
                c = math.comb(m[0], j1) * math.comb(m[1], j2) * (-1) ** (j1 + j2)
                sym = _moment_symbols(t, (j1, j2), f.band)
                g = FourierField(f.c * sym * c, f.K)
                key = (m[0] - j1, m[1] - j2)
                out[key] = out[key] + g if key in out else g
    return PolyPeriodic(out, F.K)
