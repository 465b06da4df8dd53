"""Normalizers, correlation weights and asymptotic variance constants.

Everything here is a deterministic function of the noise index ``alpha``
(plus ``kappa``, ``lambda``, ``delta`` for the normalizers). The infinite
series over lags are summed until a term drops below ``abs_tol``; the
remaining tail, whose terms decay like ``r^-(2+alpha)``, is added as a
Hurwitz-zeta estimate scaled to the last summed term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import zeta

from .errors import DomainError, TruncationNotConverged, UnsupportedSpec
from .model import FunctionalKind, ModelParams, MultipowerSpec
from .special import (
    abs_power_cross_moment,
    bivariate_abs_power_cov,
    gaussian_abs_moment,
    gaussian_monomial_moment,
    lower_incomplete_gamma,
)


@dataclass(frozen=True)
class SeriesTruncation:
    abs_tol: float = 1e-12
    max_terms: int = 1_000_000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")
        if self.max_terms < 10:
            raise DomainError("max_terms must be at least 10")


DEFAULT_TRUNCATION = SeriesTruncation()


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0, 2) (alpha={alpha})")


# ---------------------------------------------------------------------------
# correlation weights
# ---------------------------------------------------------------------------


def gamma_weights(alpha: float, r) -> np.ndarray:
    """Limiting lag-r correlations of normalized increments, vectorized over ``r``.

    For r >= 4 the second difference of ``r^beta`` is expanded in powers of
    ``1/r`` to avoid cancellation; each value is then accurate to a few ulps.
    """
    _check_alpha(alpha)
    r = np.asarray(r)
    if np.any(r < 0) or np.any(r != np.round(r)):
        raise DomainError("lags must be nonnegative integers")
    beta = 1.0 - alpha / 2.0
    rf = r.astype(float)
    out = np.empty_like(rf)

    small = rf < 4
    if np.any(small):
        rs = rf[small]
        direct = 0.5 * ((rs + 1) ** beta - 2 * rs**beta + np.abs(rs - 1) ** beta)
        out[small] = np.where(rs == 0, 1.0, direct)

    big = ~small
    if np.any(big):
        rb = rf[big]
        h2 = 1.0 / (rb * rb)
        coef = 1.0  # binom(beta, j)
        acc = np.zeros_like(rb)
        hpow = np.ones_like(rb)
        for j in range(1, 61):
            coef *= (beta - j + 1) / j
            if j % 2 == 1:
                continue
            hpow = hpow * h2
            term = coef * hpow
            acc += term
            if abs(coef) * 4.0 ** (-j) < 1e-18:
                break
        out[big] = rb**beta * acc
    return out if out.ndim else float(out)


def gamma_weight(alpha: float, r: int) -> float:
    return float(gamma_weights(alpha, np.asarray(r)))


def gamma_weights_n(alpha: float, lam: float, delta: float, r) -> np.ndarray:
    """Exact finite-``delta`` lag correlations, vectorized over ``r``."""
    _check_alpha(alpha)
    if not delta > 0 or not lam > 0:
        raise DomainError("delta and lambda must be positive")
    r = np.asarray(r)
    a = 1.0 - alpha / 2.0
    rf = r.astype(float)
    x = lam * delta
    g_plus = lower_incomplete_gamma(a, np.atleast_1d(x * (rf + 1)))
    g_mid = lower_incomplete_gamma(a, np.atleast_1d(x * rf))
    g_minus = lower_incomplete_gamma(a, np.atleast_1d(x * np.abs(rf - 1)))
    denom = 2.0 * lower_incomplete_gamma(a, x)
    out = (g_plus - 2.0 * g_mid + g_minus) / denom
    out = np.where(np.atleast_1d(rf) == 0, 1.0, out)
    return out.reshape(r.shape) if r.ndim else float(out[0])


def gamma_weight_n(alpha: float, lam: float, delta: float, r: int) -> float:
    return float(gamma_weights_n(alpha, lam, delta, np.asarray(r)))


def increment_autocorrelations(alpha: float, lam: float, delta: float, max_lag: int) -> np.ndarray:
    """``Gamma^n_r`` for r = 0..max_lag, computed from one pass of incomplete gammas."""
    a = 1.0 - alpha / 2.0
    x = lam * delta * np.arange(max_lag + 2, dtype=float)
    g = lower_incomplete_gamma(a, x)
    first = np.diff(g)  # g[k+1] - g[k]
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    out[1:] = (first[1:] - first[:-1]) / (2.0 * g[1])
    return out


# ---------------------------------------------------------------------------
# normalizers
# ---------------------------------------------------------------------------


def _tau_prefactor(alpha: float, kappa: float, dim: int) -> float:
    return (
        math.pi ** (dim / 2.0 - alpha)
        * math.gamma(alpha / 2.0)
        / ((2.0 * kappa) ** (alpha / 2.0) * math.gamma(dim / 2.0))
    )


def tau_sq_exact(p: ModelParams, delta: float) -> float:
    """Variance of one temporal increment of the unit-volatility stationary solution."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    a = 1.0 - p.alpha / 2.0
    pref = _tau_prefactor(p.alpha, p.kappa, p.dim)
    return pref / p.lam**a * lower_incomplete_gamma(a, p.lam * delta)


def increment_structure(p: ModelParams, tau: float) -> float:
    """``E[(Y(t+tau) - Y(t))^2]`` for unit volatility; same formula as :func:`tau_sq_exact`."""
    return tau_sq_exact(p, tau)


def tau_sq_leading_from(alpha: float, kappa: float, delta: float, dim: int = 1) -> float:
    _check_alpha(alpha)
    a = 1.0 - alpha / 2.0
    return _tau_prefactor(alpha, kappa, dim) / a * delta**a


def tau_sq_leading(p: ModelParams, delta: float) -> float:
    """Leading-order normalizer; does not depend on ``lambda``."""
    return tau_sq_leading_from(p.alpha, p.kappa, delta, p.dim)


# ---------------------------------------------------------------------------
# series machinery
# ---------------------------------------------------------------------------


def sum_lag_series(
    term: Callable[[np.ndarray], np.ndarray],
    alpha: float,
    trunc: SeriesTruncation = DEFAULT_TRUNCATION,
    start: int = 1,
    decay: Optional[float] = None,
) -> float:
    """Sum ``term(r)`` for r >= start with a power-law tail correction.

    Terms are evaluated in growing blocks until the first one with
    ``|term| < abs_tol``; the tail beyond it is estimated assuming
    ``term(r) ~ C r^-decay`` with ``decay = 2 + alpha`` by default.
    """
    s = 2.0 + alpha if decay is None else decay
    parts = []
    r0 = start
    block = 2048
    while r0 <= trunc.max_terms:
        r = np.arange(r0, min(r0 + block, trunc.max_terms + 1))
        t = np.asarray(term(r), dtype=float)
        below = np.flatnonzero(np.abs(t) < trunc.abs_tol)
        if below.size:
            k = below[0]
            parts.extend(t[: k + 1].tolist())
            last_r = float(r[k])
            tail = t[k] * last_r**s * float(zeta(s, last_r + 1.0))
            parts.append(tail)
            return math.fsum(parts)
        parts.extend(t.tolist())
        r0 += block
        block *= 2
    raise TruncationNotConverged(
        f"series did not reach |term| < {trunc.abs_tol} within {trunc.max_terms} terms"
    )


def big_R(p: float, alpha: float, trunc: SeriesTruncation = DEFAULT_TRUNCATION) -> float:
    """Asymptotic variance constant of the normalized p-th power variation."""
    _check_alpha(alpha)
    if not p >= 0:
        raise DomainError("p must be nonnegative")
    head = bivariate_abs_power_cov(p, 1.0)
    if p == 0:
        return 0.0
    return head + 2.0 * sum_lag_series(
        lambda r: bivariate_abs_power_cov(p, gamma_weights(alpha, r)), alpha, trunc
    )


# ---------------------------------------------------------------------------
# means and covariances of multipower functionals under unit volatility
# ---------------------------------------------------------------------------


def _is_even_int(w) -> bool:
    w = np.asarray(w)
    return bool(np.all(w == np.round(w)) and np.all(np.round(w) % 2 == 0))


def _toeplitz_cov(alpha: float, positions) -> list:
    """Covariance Gamma_{|i-j|} among positions; entries may be arrays."""
    n = len(positions)
    cov = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            lag = np.abs(np.asarray(positions[i]) - np.asarray(positions[j]))
            cov[i][j] = gamma_weights(alpha, lag)
    return cov


def _polynomial(spec: MultipowerSpec, m: int):
    """Monomial expansion ``[(coef, powers)]`` when the functional is a polynomial."""
    w = spec.weights[m]
    kind = spec.kind
    if kind is FunctionalKind.SIGNED or (kind is FunctionalKind.ABSOLUTE and _is_even_int(w)):
        return [(1.0, tuple(int(v) for v in w))]
    if kind is FunctionalKind.CORR_SUM:
        return [(1.0, (1, 1)), (1.0, (2, 0))]
    if kind is FunctionalKind.SECOND_ORDER:
        p = 2.0 * w[0]
        if _is_even_int(p):
            p = int(p)
            return [(float(math.comb(p, k)), (k, p - k)) for k in range(p + 1)]
    return None


def _abs_linear(spec: MultipowerSpec, m: int):
    """Represent the functional as ``|u . z|^q`` if possible; returns (u, q)."""
    w = spec.weights[m]
    L = spec.lag_width
    if spec.kind is FunctionalKind.SECOND_ORDER:
        return np.ones(L), 2.0 * w[0]
    if spec.kind is FunctionalKind.ABSOLUTE or (
        spec.kind is FunctionalKind.SIGNED and _is_even_int(w)
    ):
        nz = np.flatnonzero(w)
        if nz.size == 0:
            return np.zeros(L), 0.0
        if nz.size == 1:
            u = np.zeros(L)
            u[nz[0]] = 1.0
            return u, float(w[nz[0]])
    return None


def _gauss_mc_expectation(fn, cov, n_draws: int = 2_000_000, seed: int = 20180806) -> float:
    cov = np.asarray(cov, dtype=float)
    chol = np.linalg.cholesky(cov + 1e-14 * np.eye(len(cov)))
    rng = np.random.default_rng(seed)
    acc = []
    for _ in range(n_draws // 200_000):
        z = rng.standard_normal((200_000, len(cov))) @ chol.T
        acc.append(np.mean(fn(z)))
    return float(np.mean(acc))


def _eval_functional(spec: MultipowerSpec, m: int, z: np.ndarray) -> np.ndarray:
    w = spec.weights[m]
    if spec.kind is FunctionalKind.ABSOLUTE:
        return np.prod(np.abs(z) ** w, axis=-1)
    if spec.kind is FunctionalKind.SIGNED:
        return np.prod(z ** w.astype(int), axis=-1)
    if spec.kind is FunctionalKind.SECOND_ORDER:
        return np.abs(z[..., 0] + z[..., 1]) ** (2.0 * w[0])
    return z[..., 0] * z[..., 1] + z[..., 0] ** 2


def mu_multipower(spec: MultipowerSpec, alpha: float, m: int = 0) -> float:
    """Mean of row ``m`` of the functional under unit volatility."""
    _check_alpha(alpha)
    w = spec.weights[m]
    L = spec.lag_width
    if spec.kind is FunctionalKind.CORR_SUM:
        return gamma_weight(alpha, 1) + 1.0
    if spec.kind is FunctionalKind.SECOND_ORDER:
        p = 2.0 * w[0]
        return gaussian_abs_moment(p) * (2.0 + 2.0 * gamma_weight(alpha, 1)) ** (p / 2.0)
    poly = _polynomial(spec, m)
    if poly is not None:
        cov = _toeplitz_cov(alpha, list(range(L)))
        return float(sum(c * gaussian_monomial_moment(cov, k) for c, k in poly))
    nz = np.flatnonzero(w)
    if nz.size <= 1:
        return gaussian_abs_moment(float(w[nz[0]])) if nz.size else 1.0
    if nz.size == 2:
        r = gamma_weight(alpha, int(nz[1] - nz[0]))
        return abs_power_cross_moment(float(w[nz[0]]), float(w[nz[1]]), r)
    if L <= 3:
        cov = np.array(_toeplitz_cov(alpha, list(range(L))), dtype=float)
        warnings.warn("mu_multipower: Monte Carlo fallback, accuracy about 1e-3", RuntimeWarning)
        return _gauss_mc_expectation(lambda z: _eval_functional(spec, m, z), cov)
    raise UnsupportedSpec("no closed form for this multipower with lag width > 3")


def rho_multipower(
    spec_a: MultipowerSpec,
    spec_b: MultipowerSpec,
    r,
    alpha: float,
    m: int = 0,
) -> np.ndarray:
    """``Cov(f_a(Z1), f_b(Z2))`` where block 2 is shifted by ``-r`` lags.

    Vectorized over ``r``. Polynomial functionals are handled exactly by
    Isserlis' theorem, powers of a single linear form by the bivariate
    closed form; anything else falls back to fixed-seed Monte Carlo.
    """
    _check_alpha(alpha)
    r_arr = np.atleast_1d(np.asarray(r))
    La, Lb = spec_a.lag_width, spec_b.lag_width
    pos_a = [np.zeros_like(r_arr) + k for k in range(La)]
    pos_b = [k - r_arr for k in range(Lb)]
    mu_a = mu_multipower(spec_a, alpha, m)
    mu_b = mu_multipower(spec_b, alpha, m)

    poly_a, poly_b = _polynomial(spec_a, m), _polynomial(spec_b, m)
    if poly_a is not None and poly_b is not None:
        cov = _toeplitz_cov(alpha, pos_a + pos_b)
        total = 0.0
        for ca, ka in poly_a:
            for cb, kb in poly_b:
                total = total + ca * cb * gaussian_monomial_moment(cov, ka + kb)
        out = np.broadcast_to(np.asarray(total, dtype=float), r_arr.shape) - mu_a * mu_b
        return out if np.ndim(r) else float(out[0])

    lin_a, lin_b = _abs_linear(spec_a, m), _abs_linear(spec_b, m)
    if lin_a is not None and lin_b is not None:
        (ua, qa), (ub, qb) = lin_a, lin_b
        cov = _toeplitz_cov(alpha, pos_a + pos_b)
        var_a = sum(ua[i] * ua[j] * cov[i][j] for i in range(La) for j in range(La))
        var_b = sum(ub[i] * ub[j] * cov[La + i][La + j] for i in range(Lb) for j in range(Lb))
        cab = sum(ua[i] * ub[j] * cov[i][La + j] for i in range(La) for j in range(Lb))
        corr = np.clip(cab / np.sqrt(var_a * var_b), -1.0, 1.0)
        scale = var_a ** (qa / 2.0) * var_b ** (qb / 2.0)
        out = scale * abs_power_cross_moment(qa, qb, corr) - mu_a * mu_b
        out = np.broadcast_to(out, r_arr.shape)
        return out if np.ndim(r) else float(out[0])

    warnings.warn("rho_multipower: Monte Carlo fallback, accuracy about 1e-3", RuntimeWarning)
    vals = []
    for rv in r_arr:
        positions = list(range(La)) + [k - int(rv) for k in range(Lb)]
        cov = np.array(_toeplitz_cov(alpha, positions), dtype=float)
        fn = lambda z: _eval_functional(spec_a, m, z[:, :La]) * _eval_functional(spec_b, m, z[:, La:])
        vals.append(_gauss_mc_expectation(fn, cov, n_draws=1_000_000) - mu_a * mu_b)
    out = np.asarray(vals)
    return out if np.ndim(r) else float(out[0])


def rho_sum(
    spec: MultipowerSpec,
    alpha: float,
    trunc: SeriesTruncation = DEFAULT_TRUNCATION,
    m: int = 0,
) -> float:
    """``rho_f(0) + 2 sum_{r>=1} rho_f(r)``, the asymptotic variance of ``V_f`` at unit volatility."""
    head = float(rho_multipower(spec, spec, 0, alpha, m))
    tail = sum_lag_series(lambda r: rho_multipower(spec, spec, r, alpha, m), alpha, trunc)
    return head + 2.0 * tail


# ---------------------------------------------------------------------------
# asymptotic variances of the noise-index estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceConstants:
    c11: float
    c12: float
    c22: float
    c0: float
    tilde_c11: Optional[float] = None
    tilde_c12: Optional[float] = None
    tilde_c22: Optional[float] = None
    tilde_c0: Optional[float] = None


def c0_constants(
    p: float,
    alpha: float,
    trunc: SeriesTruncation = DEFAULT_TRUNCATION,
    with_tilde: Optional[bool] = None,
) -> VarianceConstants:
    """Asymptotic variance of the change-of-frequency estimator at power ``p``.

    When ``p == 2`` the correlation-estimator family is filled in as well
    (override with ``with_tilde``).
    """
    _check_alpha(alpha)
    if not p > 0:
        raise DomainError("p must be positive")
    g1 = gamma_weight(alpha, 1)
    s = 2.0 + 2.0 * g1
    rho = lambda x: bivariate_abs_power_cov(p, x)
    g = lambda r: gamma_weights(alpha, r)

    c11 = rho(1.0) + 2.0 * sum_lag_series(lambda r: rho(g(r)), alpha, trunc)
    c22 = s**p * (
        rho(1.0)
        + 2.0 * sum_lag_series(lambda r: rho((2.0 * g(r) + g(r - 1) + g(r + 1)) / s), alpha, trunc)
    )
    c12 = s ** (p / 2.0) * (
        rho(math.sqrt((1.0 + g1) / 2.0))
        + sum_lag_series(lambda r: rho((g(r) + g(r - 1)) / math.sqrt(s)), alpha, trunc)
        + sum_lag_series(lambda r: rho((g(r) + g(r + 1)) / math.sqrt(s)), alpha, trunc)
    )
    c0 = (4.0 / (p * math.log(2.0))) ** 2 * (c11 - 2.0 * c12 / s ** (p / 2.0) + c22 / s**p)
    c0 = max(c0, 0.0)
    if with_tilde is None:
        with_tilde = p == 2
    if not with_tilde:
        return VarianceConstants(c11, c12, c22, c0)
    t = c0_tilde_constants(alpha, trunc)
    return VarianceConstants(c11, c12, c22, c0, t.tilde_c11, t.tilde_c12, t.tilde_c22, t.tilde_c0)


def c0_tilde_constants(alpha: float, trunc: SeriesTruncation = DEFAULT_TRUNCATION) -> VarianceConstants:
    """Asymptotic variance of the correlation estimator (stored in the ``tilde_*`` fields)."""
    _check_alpha(alpha)
    g = lambda r: gamma_weights(alpha, r)
    g1 = gamma_weight(alpha, 1)
    t11 = 1.0 + g1**2 + 2.0 * sum_lag_series(lambda r: g(r) ** 2 + g(r + 1) * g(r - 1), alpha, trunc)
    t22 = 2.0 + 4.0 * sum_lag_series(lambda r: g(r) ** 2, alpha, trunc)
    t12 = 2.0 * g1 + 2.0 * sum_lag_series(lambda r: g(r) * (g(r + 1) + g(r - 1)), alpha, trunc)
    t0 = (2.0 / math.log(2.0)) ** 2 * (t11 - 2.0 * t12 * g1 + t22 * g1**2)
    t0 = max(t0, 0.0)
    nan = math.nan
    return VarianceConstants(nan, nan, nan, nan, t11, t12, t22, t0)


def conf_int_moment(p: float) -> float:
    """The factor ``2^p Gamma((2p+1)/2) / sqrt(pi)`` in the change-of-frequency studentization."""
    return 2.0**p * math.gamma((2.0 * p + 1.0) / 2.0) / math.sqrt(math.pi)


def constants_summary(
    alpha: float,
    p: float,
    n_gamma: int = 10,
    lam: Optional[float] = None,
    delta: Optional[float] = None,
) -> dict:
    """JSON-ready dictionary of the main constants for inspection."""
    out = {
        "alpha": alpha,
        "p": p,
        "mu_p": gaussian_abs_moment(p),
        "gamma": gamma_weights(alpha, np.arange(n_gamma + 1)).tolist(),
    }
    if lam is not None and delta is not None:
        out["gamma_n"] = gamma_weights_n(alpha, lam, delta, np.arange(n_gamma + 1)).tolist()
    out["R_p"] = big_R(p, alpha)
    vc = c0_constants(p, alpha, with_tilde=False)
    out["C0"] = vc.c0
    out["C0_tilde"] = c0_tilde_constants(alpha).tilde_c0
    return out
