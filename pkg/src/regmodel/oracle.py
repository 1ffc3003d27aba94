"""End-to-end check: direct nonlinear solve against the truncated series.

The periodic problem (d_2 - d_1^2) u + c = a(u) d_1^2 u + xi, with the
constant c keeping the right-hand side mean-free and the mean of u fixed, is
solved by Picard iteration on a pseudo-spectral grid.  The series expansion
sums z^b Pi_b over k-only indices, with z_k the Taylor coefficients of a at
the mean, and must agree up to O(eps^(N+1)) when a has size eps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import build_premodel
from .multiindex import DEFAULT_LAMBDA, MultiIndex, Window, bracket, is_populated
from .torus import TWO_PI, FourierField


@dataclass
class Nonlinearity:
    """a(u) = sum_k coeffs[k] u^k."""

    coeffs: dict = field(default_factory=dict)

    @classmethod
    def linear(cls, eps: float) -> "Nonlinearity":
        return cls({1: eps})

    @classmethod
    def quadratic(cls, eps: float) -> "Nonlinearity":
        """eps (u + u^2)."""
        return cls({1: eps, 2: eps})

    @property
    def degree(self) -> int:
        return max((k for k, a in self.coeffs.items() if a != 0), default=0)

    def __call__(self, u):
        out = np.zeros_like(np.asarray(u, dtype=float))
        for k, a in self.coeffs.items():
            out = out + a * np.asarray(u, dtype=float) ** k
        return out

    def taylor(self, m: float) -> dict:
        """Coefficients z_k = a^(k)(m) / k! of a(m + v) in powers of v."""
        out = {}
        for k, a in self.coeffs.items():
            for j in range(k + 1):
                v = a * math.comb(k, j) * m ** (k - j)
                if v != 0:
                    out[j] = out.get(j, 0.0) + v
        return {j: v for j, v in out.items() if v != 0}


@dataclass
class PicardResult:
    u: np.ndarray  # grid values
    constant: float
    iterations: int
    increment: float
    grid: int
    K: int
    residual: float = 0.0
    history: list = field(default_factory=list)

    def field(self) -> FourierField:
        """The solution as a FourierField on |k_i| <= K."""
        M, K = self.grid, self.K
        uh = np.fft.fft2(self.u) / (M * M)
        k = np.arange(-K, K + 1) % M
        return FourierField(uh[np.ix_(k, k)], K).hermitian()


def _wavenumbers(M: int):
    k = np.fft.fftfreq(M, 1.0 / M)
    return k[:, None], k[None, :]


def picard_solve(a: Nonlinearity, xi: FourierField, tol: float = 1e-14, mean: float = 0.0,
                 K: int | None = None, grid: int | None = None, max_iter: int = 200) -> PicardResult:
    """Fixed point of u = mean + L^{-1}(a(u) d_1^2 u + xi - average), L = d_2 - d_1^2.

    Products are formed on an M x M grid (M >= 3K) and truncated to
    |k_i| <= K after each step, with M large enough that the retained modes
    are alias-free.  Contraction is required to halve the increment at least
    every 5 steps; otherwise, or past max_iter, RuntimeError is raised with
    the increment history.
    """
    K = xi.K if K is None else K
    M = max(grid or 0, (a.degree + 2) * K + 2, 3 * K)
    k1, k2 = _wavenumbers(M)
    keep = (np.abs(k1) <= K) & (np.abs(k2) <= K)
    sym = 2j * np.pi * k2 + (TWO_PI * k1) ** 2
    sym[0, 0] = 1.0
    d11 = -(TWO_PI * k1) ** 2
    xih = np.fft.fft2(xi.grid(M)) * keep
    scale = float(np.abs(xih).max()) or 1.0

    def rhs_hat(uh):
        u = np.fft.ifft2(uh).real
        u11 = np.fft.ifft2(d11 * uh).real
        return (np.fft.fft2(a(u) * u11) + xih) * keep

    uh = np.zeros((M, M), dtype=complex)
    uh[0, 0] = mean * M * M
    hist: list = []
    for it in range(1, max_iter + 1):
        fh = rhs_hat(uh)
        new = fh / sym
        new[0, 0] = mean * M * M
        inc = float(np.abs(new - uh).max()) / scale
        hist.append(inc)
        uh = new
        if inc <= tol:
            fh = rhs_hat(uh)
            c = fh[0, 0].real / (M * M)
            res = sym * uh
            res[0, 0] = c * M * M
            residual = float(np.abs(res - fh).max()) / scale
            return PicardResult(np.fft.ifft2(uh).real, c, it, inc, M, K, residual, hist)
        if it > 5 and inc > 0.5 * hist[-6]:
            raise RuntimeError(f"Picard iteration not contracting after {it} steps; "
                               f"increments {['%.2e' % h for h in hist[-6:]]}")
    raise RuntimeError(f"Picard iteration did not reach {tol:.1e} in {max_iter} steps; "
                       f"increments {['%.2e' % h for h in hist[-6:]]}")


def series_indices(order: int, kset) -> list:
    """Populated k-only indices with at most ``order`` k-factors, drawn from kset."""
    kset = sorted(set(kset))
    out = {MultiIndex()}
    frontier = {MultiIndex()}
    for _ in range(order):
        nxt = set()
        for b in frontier:
            for k in kset:
                c = b + MultiIndex.ek(k)
                if c not in out:
                    nxt.add(c)
        out |= nxt
        frontier = nxt
    return [b for b in out if is_populated(b)]


def series_evaluate(a: Nonlinearity, xi: FourierField, order: int, mean: float = 0.0):
    """Truncated series (u_N, lambda_N): mean + sum z^b Pi_b and sum z^b P_b.

    Sums over k-only indices with at most ``order`` k-factors, z_k the
    Taylor coefficients of a at the mean.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    z = a.taylor(mean)
    idx = series_indices(order, z)
    cutoff = max(1 + bracket(b) + DEFAULT_LAMBDA * b.k(0) for b in idx)
    pm = build_premodel(xi, Window(cutoff + 1e-6), indices=idx)
    u = FourierField.constant(float(mean), xi.K)
    lam = 0.0
    for b in idx:
        w = 1.0
        for k, e in b.kpart:
            w *= z[k] ** e
        F = pm.Pi[b]
        if F.degree() != 0:
            raise ValueError("k-only indices must give periodic components")
        u = u + F.terms[(0, 0)].scale(w)
        lam += w * pm.P[b].evaluate(np.zeros(2))
    return u, float(lam)


@dataclass
class ConvergenceStudy:
    nonlinearity: str
    orders: list
    eps: list
    errors: dict  # order -> sup errors of u over eps
    errors_lambda: dict  # order -> errors of the constant
    fitted: dict  # order -> fitted exponent for u
    fitted_lambda: dict
    tol: float = 0.3

    def passed(self, order: int) -> bool:
        return self.fitted[order] >= order + 1 - self.tol

    @property
    def all_passed(self) -> bool:
        return all(self.passed(n) for n in self.orders)

    def rows(self) -> list:
        return [{"nonlinearity": self.nonlinearity, "N": n, "eps": e, "error_u": err, "error_lambda": el,
                 "fitted_order": self.fitted[n], "fitted_order_lambda": self.fitted_lambda[n],
                 "pass": self.passed(n)}
                for n in self.orders
                for e, err, el in zip(self.eps, self.errors[n], self.errors_lambda[n])]


def fitted_order(eps, errors) -> float:
    """Least-squares slope of log error against log eps."""
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(errors), 1)[0])


def convergence_study(kind: str, xi: FourierField, orders=(1, 2, 3), eps=(0.1, 0.05, 0.025),
                      mean: float = 0.0, tol: float = 0.3) -> ConvergenceStudy:
    """Errors of the truncated series against Picard, fitted in log eps."""
    make = {"linear": Nonlinearity.linear, "quadratic": Nonlinearity.quadratic}[kind]
    errors = {n: [] for n in orders}
    errl = {n: [] for n in orders}
    for e in eps:
        a = make(e)
        sol = picard_solve(a, xi, mean=mean)
        for n in orders:
            u, lam = series_evaluate(a, xi, n, mean)
            errors[n].append(float(np.abs(u.grid(sol.grid) - sol.u).max()))
            errl[n].append(float(abs(lam - sol.constant)))
    fitted = {n: fitted_order(eps, errors[n]) for n in orders}
    fl = {n: fitted_order(eps, errl[n]) for n in orders}
    return ConvergenceStudy(kind, list(orders), list(eps), errors, errl, fitted, fl, tol)


def linear_check(xi: FourierField, mean: float = 0.0) -> float:
    """a = 0: Picard against the direct heat solve, sup difference on the grid."""
    sol = picard_solve(Nonlinearity(), xi, mean=mean)
    direct = xi.heat_inverse().grid(sol.grid) + mean
    return float(np.abs(sol.u - direct).max())
