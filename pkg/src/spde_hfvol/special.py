"""Scalar special functions used by the constants layer.

All routines accept numpy arrays where it makes sense and evaluate
elementwise; scalar input gives scalar output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import hyp2f1

from .errors import DomainError

_TOL = 1e-14
_MAX_ITER = 500
_TINY = 1e-300


def lower_incomplete_gamma(a: float, x):
    """Lower incomplete gamma function ``int_0^x exp(-u) u^(a-1) du``.

    Uses the power series for ``x < a + 1`` and the Lentz continued fraction
    for the upper function otherwise (Numerical Recipes split). Both are
    iterated to a relative tolerance of 1e-14 with a cap of 500 iterations.

    Parameters
    ----------
    a : float
        Shape parameter, must be positive.
    x : float or array_like
        Upper integration limit(s), must be nonnegative.
    """
    if not a > 0:
        raise DomainError(f"lower_incomplete_gamma requires a > 0 (a={a})")
    xs = np.asarray(x, dtype=float)
    if np.any(np.isnan(xs)) or np.any(xs < 0):
        raise DomainError("lower_incomplete_gamma requires x >= 0")
    out = np.zeros_like(xs)
    use_series = (xs < a + 1.0) & (xs > 0)
    use_cf = xs >= a + 1.0
    if np.any(use_series):
        out[use_series] = _gamma_series(a, xs[use_series])
    if np.any(use_cf):
        out[use_cf] = math.gamma(a) - _upper_gamma_cf(a, xs[use_cf])
    if out.ndim == 0:
        return float(out)
    return out


def _gamma_series(a, x):
    term = np.full_like(x, 1.0 / a)
    total = term.copy()
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term = term * x / ap
        total = total + term
        if np.all(np.abs(term) < np.abs(total) * _TOL):
            break
    else:
        raise DomainError("incomplete gamma series did not converge")
    return total * np.exp(-x + a * np.log(x))


def _upper_gamma_cf(a, x):
    # modified Lentz for Gamma(a, x), valid for x >= a + 1
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _TOL):
            break
    else:
        raise DomainError("incomplete gamma continued fraction did not converge")
    return np.exp(-x + a * np.log(x)) * h


def gaussian_abs_moment(p: float) -> float:
    """E|Z|^p for a standard normal Z."""
    if not p >= 0:
        raise DomainError(f"gaussian_abs_moment requires p >= 0 (p={p})")
    return 2.0 ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights for the weight function exp(-x^2)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def expect_standard_normal(self, f) -> float:
        """E f(Z) for Z ~ N(0, 1) using the rule."""
        return float(np.dot(self.weights, f(math.sqrt(2.0) * self.nodes)) / math.sqrt(math.pi))


@lru_cache(maxsize=32)
def gauss_hermite(order: int) -> QuadratureRule:
    if int(order) != order or order < 1:
        raise DomainError(f"gauss_hermite requires order >= 1 (order={order})")
    x, w = np.polynomial.hermite.hermgauss(int(order))
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=int(order))


def _clamp_corr(r):
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > 1.0 + 1e-12) or np.any(np.isnan(r)):
        raise DomainError("correlation must lie in [-1, 1]")
    return np.clip(r, -1.0, 1.0)


def abs_power_cross_moment(a: float, b: float, r):
    """E|X|^a |Y|^b for standard bivariate normal (X, Y) with correlation r.

    Closed form ``mu_a mu_b 2F1(-a/2, -b/2; 1/2; r^2)``; the hypergeometric
    series terminates when ``a`` or ``b`` is an even integer.
    """
    if a < 0 or b < 0:
        raise DomainError("powers must be nonnegative")
    r = _clamp_corr(r)
    out = gaussian_abs_moment(a) * gaussian_abs_moment(b) * hyp2f1(-a / 2.0, -b / 2.0, 0.5, r * r)
    return float(out) if np.ndim(out) == 0 else out


def bivariate_abs_power_cov(p: float, r):
    """``Cov(|X|^p, |Y|^p)`` for a standard bivariate normal pair with correlation ``r``."""
    if not p >= 0:
        raise DomainError(f"p must be nonnegative (p={p})")
    r = _clamp_corr(r)
    mu = gaussian_abs_moment(p)
    out = mu * mu * (hyp2f1(-p / 2.0, -p / 2.0, 0.5, r * r) - 1.0)
    out = np.where(r == 0.0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_monomial_moment(cov, powers) -> np.ndarray:
    """E prod_i X_i^{k_i} for a centered Gaussian vector, by Isserlis recursion.

    ``cov`` is an (n, n) nested sequence whose entries may be arrays of a
    common shape; the result broadcasts over them. This lets a whole series
    of covariance matrices (one per lag) be evaluated in one pass.
    """
    n = len(powers)
    ks = tuple(int(k) for k in powers)
    if any(k < 0 for k in ks) or any(k != p for k, p in zip(ks, powers)):
        raise DomainError("monomial powers must be nonnegative integers")
    memo = {}

    def rec(k):
        if k in memo:
            return memo[k]
        total_deg = sum(k)
        if total_deg == 0:
            return 1.0
        if total_deg % 2 == 1:
            return 0.0
        i = next(j for j in range(n) if k[j] > 0)
        k1 = list(k)
        k1[i] -= 1
        acc = 0.0
        for j in range(n):
            if k1[j] == 0:
                continue
            k2 = list(k1)
            k2[j] -= 1
            acc = acc + k1[j] * cov[i][j] * rec(tuple(k2))
        memo[k] = acc
        return acc

    return rec(ks)
