"""Estimators of the noise index and of integrated volatility, with studentized intervals."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Union

import numpy as np
from scipy.stats import norm

from . import constants as K
from .errors import CltHypothesisWarning, DegenerateDenominator, RatioOutOfDomain
from .model import EstimateReport, FunctionalKind, MultipowerSpec, ObservedPath
from .variation import cof_sums, variation

ALPHA_CLIP = (0.01, 1.99)


def _quantile(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(norm.ppf(0.5 + level / 2.0))


def _clip_alpha(a: float) -> float:
    return float(np.clip(a, *ALPHA_CLIP))


@lru_cache(maxsize=4096)
def _c0(p: float, alpha: float) -> float:
    return K.c0_constants(p, alpha, with_tilde=False).c0


@lru_cache(maxsize=4096)
def _c0_tilde(alpha: float) -> float:
    return K.c0_tilde_constants(alpha).tilde_c0


def _report(estimate, scale, level, method, per_site, null_value, degenerate=False) -> EstimateReport:
    """Report for a statistic of the form ``scale * (estimate - value)``."""
    if degenerate or not (math.isfinite(estimate) and math.isfinite(scale) and scale > 0):
        return EstimateReport(estimate, None, level, degenerate=True, method=method, per_site=list(per_site))
    se = 1.0 / scale
    z = _quantile(level)
    stud = None if null_value is None else (estimate - null_value) * scale
    return EstimateReport(
        estimate, se, level, estimate - z * se, estimate + z * se, stud, False, method, list(per_site)
    )


# ---------------------------------------------------------------------------
# noise index
# ---------------------------------------------------------------------------


@dataclass
class AlphaEstimate:
    """Pooled noise-index estimate.

    ``stat_scale`` is the factor ``A`` with ``A * (estimate - alpha)``
    approximately standard normal; the volatility estimator with unknown
    index reuses it.
    """

    report: EstimateReport
    method: str
    p: float
    per_site: np.ndarray
    stat_scale: float

    @property
    def estimate(self) -> float:
        return self.report.estimate

    @property
    def degenerate(self) -> bool:
        return self.report.degenerate


def _clt_power_ok(p: float) -> bool:
    return p == 2 or p >= 4


def estimate_alpha_cof(
    path: ObservedPath, p: float = 2.0, level: float = 0.95, null_value: Optional[float] = None
) -> AlphaEstimate:
    """Change-of-frequency estimator built from sums of adjacent increments.

    ``null_value`` only fills the ``studentized`` field of the report.
    """
    p = float(p)
    if not _clt_power_ok(p):
        warnings.warn(f"interval not backed by a CLT for p={p} (need p=2 or p>=4)", CltHypothesisWarning)
    num, den = cof_sums(path, p)
    method = f"cof(p={p:g})"
    if np.any(den == 0) or np.any(num == 0):
        per = np.full(path.n_sites, math.nan)
        rep = _report(math.nan, math.nan, level, method, per, null_value, degenerate=True)
        return AlphaEstimate(rep, "cof", p, per, math.nan)
    per = 2.0 - (4.0 / p) * np.log2(num / den)
    est = float(np.mean(per))
    scale = _alpha_cof_scale(path, p, est, den)
    return AlphaEstimate(_report(est, scale, level, method, per, null_value), "cof", p, per, scale)


def _alpha_cof_scale(path, p, est, den_p) -> float:
    inc = path.increments()
    delta = path.delta
    N = path.n_sites
    den_2p = np.array([math.fsum(np.abs(c) ** (2 * p)) for c in inc.T])
    # V_{2p} / V_p^2 with any normalizer; the normalizer cancels
    ratio_sum = float(np.sum(den_2p / (delta * den_p**2)))
    c0 = _c0(p, _clip_alpha(est))
    if not (ratio_sum > 0 and c0 > 0):
        return math.nan
    return N / math.sqrt(delta) * math.sqrt(K.conf_int_moment(p) / c0) / math.sqrt(ratio_sum)


def corr_transform(x):
    """``-2 log2(1 + x)``: maps the lag-one correlation of normalized increments to the noise index."""
    return -2.0 * np.log2(1.0 + np.asarray(x, dtype=float))


def estimate_alpha_corr(
    path: ObservedPath, level: float = 0.95, null_value: Optional[float] = None
) -> AlphaEstimate:
    """Correlation-ratio estimator based on the lag-one signed bipower variation."""
    N = path.n_sites
    v_psi = variation(path, MultipowerSpec.signed([1, 1], N)).per_site
    v_phi = variation(path, MultipowerSpec.power(2, N)).per_site
    method = "corr"
    if np.any(v_phi == 0):
        per = np.full(N, math.nan)
        return AlphaEstimate(_report(math.nan, math.nan, level, method, per, null_value, True), "corr", 2.0, per, math.nan)
    ratio = v_psi / v_phi
    if np.any(ratio <= -1.0):
        raise RatioOutOfDomain(f"lag-one ratio {ratio.min():.6g} <= -1")
    per = corr_transform(ratio)
    est = float(np.mean(per))
    v4 = variation(path, MultipowerSpec.power(4, N)).per_site
    v_cs = variation(path, MultipowerSpec.corr_sum(N)).per_site
    scale = math.nan
    if np.all(v_cs != 0):
        ratio_sum = float(np.sum(v4 / v_cs**2))
        c0t = _c0_tilde(_clip_alpha(est))
        if ratio_sum > 0 and c0t > 0:
            scale = N / math.sqrt(path.delta) * math.sqrt(3.0 / c0t) / math.sqrt(ratio_sum)
    return AlphaEstimate(_report(est, scale, level, method, per, null_value), "corr", 2.0, per, scale)


# ---------------------------------------------------------------------------
# integrated volatility
# ---------------------------------------------------------------------------


@dataclass
class VolatilityEstimate:
    """Per-site estimates of the integrated ``|sigma|^w`` over [0, T]."""

    reports: List[EstimateReport]
    alpha_mode: Union[float, AlphaEstimate]
    rate_tag: str  # "root" or "root_log"
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.reports])

    @property
    def alpha_known(self) -> bool:
        return not isinstance(self.alpha_mode, AlphaEstimate)

    def to_dict(self) -> dict:
        out = {
            "method": "vol-known" if self.alpha_known else "vol-unknown",
            "rate": self.rate_tag,
            "weights": self.weights.tolist(),
            "sites": [r.to_dict() for r in self.reports],
        }
        if self.alpha_known:
            out["alpha"] = float(self.alpha_mode)
        else:
            out["alpha_estimate"] = self.alpha_mode.report.to_dict()
        return out


def clt_weights_ok(spec: MultipowerSpec) -> bool:
    """Weight conditions under which the volatility interval is backed by a CLT."""
    w = spec.weights
    if spec.kind is FunctionalKind.ABSOLUTE:
        return bool(np.all((w == 0) | (w == 2) | (w >= 4)))
    if spec.kind is FunctionalKind.SIGNED:
        return bool(np.all(spec.total_weights % 2 == 0))
    return False


def _row_key(spec: MultipowerSpec, m: int):
    return (spec.kind.value, tuple(spec.weights[m].tolist()))


@lru_cache(maxsize=1024)
def _mu_rho(key, alpha: float, with_rho: bool):
    kind, w = key
    row = MultipowerSpec(np.array([w]), kind)
    mu = K.mu_multipower(row, alpha)
    if not with_rho:
        return mu, math.nan, math.nan
    dbl = row.doubled()
    return mu, K.mu_multipower(dbl, alpha), K.rho_sum(row, alpha)


def estimate_vol_known_alpha(
    path: ObservedPath,
    spec: MultipowerSpec,
    alpha: float,
    kappa: float,
    level: float = 0.95,
    dim: int = 1,
    truth: Optional[np.ndarray] = None,
) -> VolatilityEstimate:
    """Integrated volatility at each site when the noise index is known.

    The damping rate is never used. ``truth`` (optional, per site) only fills
    the ``studentized`` fields.
    """
    delta = path.delta
    tau = math.sqrt(K.tau_sq_leading_from(alpha, kappa, delta, dim))
    with_ci = clt_weights_ok(spec)
    if not with_ci:
        warnings.warn("weights outside the CLT range; interval suppressed", CltHypothesisWarning)
    v = variation(path, spec, tau).per_site
    v2 = variation(path, spec.doubled(), tau).per_site if with_ci else None
    reports = []
    for m in range(spec.n_sites):
        mu, mu2, rho = _mu_rho(_row_key(spec, m), float(alpha), with_ci)
        est = v[m] / mu if mu != 0 else math.nan
        scale = math.nan
        if with_ci and mu != 0 and v2[m] > 0 and rho > 0:
            se = math.sqrt(delta) * math.sqrt(rho) / abs(mu) * math.sqrt(v2[m] / mu2)
            scale = 1.0 / se
        null = None if truth is None else float(np.atleast_1d(truth)[m])
        reports.append(_report(est, scale, level, f"vol-known(m={m})", [est], null, degenerate=not with_ci))
    return VolatilityEstimate(reports, float(alpha), "root", spec.total_weights)


def estimate_vol_unknown_alpha(
    path: ObservedPath,
    spec: MultipowerSpec,
    kappa: float,
    alpha_method: Union[str, float, AlphaEstimate] = "cof",
    p0: float = 2.0,
    level: float = 0.95,
    dim: int = 1,
    truth: Optional[np.ndarray] = None,
) -> VolatilityEstimate:
    """Integrated volatility with the noise index estimated from the same path.

    ``alpha_method`` is ``"cof"`` (with power ``p0``), ``"corr"``, an already
    computed :class:`AlphaEstimate`, or a number, in which case the index is
    treated as known. All sites share the fluctuation of the index estimate,
    so their intervals are perfectly dependent.
    """
    if isinstance(alpha_method, (int, float)) and not isinstance(alpha_method, bool):
        return estimate_vol_known_alpha(path, spec, float(alpha_method), kappa, level, dim, truth)
    if isinstance(alpha_method, AlphaEstimate):
        a_est = alpha_method
    elif alpha_method == "cof":
        a_est = estimate_alpha_cof(path, p0, level)
    elif alpha_method == "corr":
        a_est = estimate_alpha_corr(path, level)
    else:
        raise ValueError(f"unknown alpha_method {alpha_method!r}")
    if not clt_weights_ok(spec):
        warnings.warn("weights outside the CLT range; interval suppressed", CltHypothesisWarning)
    delta = path.delta
    w = spec.total_weights
    reports = []
    if not math.isfinite(a_est.estimate):
        for m in range(spec.n_sites):
            reports.append(_report(math.nan, math.nan, level, f"vol-unknown(m={m})", [math.nan], None, True))
        return VolatilityEstimate(reports, a_est, "root_log", w)
    a_n = _clip_alpha(a_est.estimate)
    tau_hat = math.sqrt(K.tau_sq_leading_from(a_n, kappa, delta, dim))
    v = variation(path, spec, tau_hat).per_site
    log_d = abs(math.log(delta))
    A = a_est.stat_scale
    for m in range(spec.n_sites):
        mu = _mu_rho(_row_key(spec, m), a_n, False)[0]
        est = v[m] / mu if mu != 0 else math.nan
        scale = math.nan
        if clt_weights_ok(spec) and math.isfinite(A) and v[m] != 0 and mu != 0:
            se = w[m] * abs(v[m]) * log_d / (4.0 * A * abs(mu))
            scale = 1.0 / se
        null = None if truth is None else float(np.atleast_1d(truth)[m])
        degenerate = a_est.degenerate or not clt_weights_ok(spec)
        reports.append(_report(est, scale, level, f"vol-unknown(m={m})", [est], null, degenerate))
    return VolatilityEstimate(reports, a_est, "root_log", w)
