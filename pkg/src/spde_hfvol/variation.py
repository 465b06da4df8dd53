"""Normalized variation functionals of observed increments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateDenominator, SpecMismatch, TooFewIncrements
from .model import FunctionalKind, MultipowerSpec, ObservedPath


@dataclass(frozen=True, eq=False)
class VariationResult:
    """``per_site`` holds the exactly rounded sums; ``partial`` (optional) the
    running sums after each term, row ``i`` covering terms ``1..i+1``."""

    per_site: np.ndarray
    partial: Optional[np.ndarray]
    normalizer_used: float
    spec: MultipowerSpec


def increments(path: ObservedPath) -> np.ndarray:
    return path.increments()


def _terms(x: np.ndarray, w: np.ndarray, kind: FunctionalKind) -> np.ndarray:
    """Summands ``f_m`` evaluated on windows of one site's normalized increments."""
    L = w.size
    n = x.size - L + 1
    win = [x[k : k + n] for k in range(L)]
    if kind is FunctionalKind.SECOND_ORDER:
        return np.abs(win[0] + win[1]) ** (2.0 * w[0])
    if kind is FunctionalKind.CORR_SUM:
        return win[0] * win[1] + win[0] ** 2
    out = np.ones(n)
    for k in range(L):
        if w[k] == 0:
            continue
        if kind is FunctionalKind.SIGNED:
            out = out * win[k] ** int(w[k])
        else:
            out = out * np.abs(win[k]) ** w[k]
    return out


def variation(
    path: ObservedPath,
    spec: MultipowerSpec,
    normalizer: float = 1.0,
    with_partial: bool = False,
) -> VariationResult:
    """``Delta * sum_i f_m(x_i/tau, ..., x_{i+L-1}/tau)`` per site.

    The last ``L - 1`` increments only enter as later members of a window.
    """
    if not normalizer > 0:
        raise SpecMismatch("normalizer must be positive")
    inc = path.increments()
    n, N = inc.shape
    if spec.n_sites != N:
        raise SpecMismatch(f"spec has {spec.n_sites} rows but the path has {N} sites")
    L = spec.lag_width
    if n < L:
        raise TooFewIncrements(f"need at least {L} increments, have {n}")
    delta = path.delta
    x = inc / normalizer
    per_site = np.empty(N)
    partial = np.empty((n - L + 1, N)) if with_partial else None
    for m in range(N):
        t = _terms(x[:, m], spec.weights[m], spec.kind)
        per_site[m] = delta * math.fsum(t)
        if with_partial:
            partial[:, m] = delta * np.cumsum(t)
    return VariationResult(per_site, partial, float(normalizer), spec)


def cof_sums(path: ObservedPath, p: float) -> tuple:
    """Per-site ``(sum |x_i + x_{i+1}|^p, sum |x_i|^p)`` over all available terms."""
    if not p > 0:
        raise SpecMismatch("p must be positive")
    inc = path.increments()
    if inc.shape[0] < 2:
        raise TooFewIncrements("need at least 2 increments")
    num = np.array([math.fsum(np.abs(c[:-1] + c[1:]) ** p) for c in inc.T])
    den = np.array([math.fsum(np.abs(c) ** p) for c in inc.T])
    return num, den


def variation_ratio_cof(path: ObservedPath, p: float) -> np.ndarray:
    """``sum |x_i + x_{i+1}|^p / sum |x_i|^p`` per site; free of the normalizer."""
    num, den = cof_sums(path, p)
    if np.any(den == 0):
        raise DegenerateDenominator("sum of |increment|^p vanishes at some site")
    return num / den
