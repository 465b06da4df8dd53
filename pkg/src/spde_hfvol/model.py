"""Domain types shared by the simulators, variation functionals and estimators."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConstraintViolation, UnsupportedSpec


class NoiseKind(str, enum.Enum):
    WHITE = "white"
    RIESZ = "riesz"


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the damped stochastic heat equation.

    ``alpha`` is the spatial correlation index of the noise. Space-time white
    noise is only defined for ``dim == 1`` and carries ``alpha == 1``.
    """

    kappa: float
    lam: float
    alpha: float
    dim: int = 1
    noise_kind: NoiseKind = NoiseKind.RIESZ

    def __post_init__(self):
        object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))
        validate_params(self)

    @classmethod
    def white(cls, kappa: float = 1.0, lam: float = 1.0) -> "ModelParams":
        return cls(kappa=kappa, lam=lam, alpha=1.0, dim=1, noise_kind=NoiseKind.WHITE)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "lambda": self.lam,
            "alpha": self.alpha,
            "dim": self.dim,
            "noise_kind": self.noise_kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        kind = NoiseKind(d.get("noise_kind", "riesz"))
        alpha = d.get("alpha", 1.0 if kind is NoiseKind.WHITE else None)
        if alpha is None:
            raise ConstraintViolation("alpha is required for Riesz noise")
        return cls(
            kappa=float(d["kappa"]),
            lam=float(d.get("lambda", d.get("lam", 1.0))),
            alpha=float(alpha),
            dim=int(d.get("dim", 1)),
            noise_kind=kind,
        )


def validate_params(p: ModelParams) -> ModelParams:
    """Check the admissibility constraints and return ``p`` unchanged."""
    if not (p.kappa > 0 and math.isfinite(p.kappa)):
        raise ConstraintViolation(f"kappa > 0 violated (kappa={p.kappa})")
    if not (p.lam > 0 and math.isfinite(p.lam)):
        raise ConstraintViolation(f"lambda > 0 violated (lambda={p.lam})")
    if int(p.dim) != p.dim or p.dim < 1:
        raise ConstraintViolation(f"dim must be a positive integer (dim={p.dim})")
    if not p.alpha > 0:
        raise ConstraintViolation(f"alpha > 0 violated (alpha={p.alpha})")
    if not p.alpha < 2:
        raise ConstraintViolation(f"alpha < 2 violated (alpha={p.alpha})")
    if p.alpha > p.dim:
        raise ConstraintViolation(f"alpha <= dim violated (alpha={p.alpha}, dim={p.dim})")
    if p.noise_kind is NoiseKind.WHITE and (p.dim != 1 or p.alpha != 1.0):
        raise ConstraintViolation("white noise requires dim == 1 and alpha == 1")
    return p


def n_steps_for(delta: float, horizon: float) -> int:
    # guard against T/delta landing a hair below an integer
    return int(math.floor(horizon / delta * (1.0 + 1e-12)))


@dataclass(frozen=True)
class SamplingScheme:
    """Regular time grid ``0, delta, ..., n*delta`` observed at fixed sites."""

    delta: float
    horizon: float
    sites: tuple = (0.0,)

    def __post_init__(self):
        sites = tuple(_as_site(s) for s in self.sites)
        if len(sites) == 0:
            raise ConstraintViolation("at least one observation site is required")
        if len(set(sites)) != len(sites):
            raise ConstraintViolation("sites must be pairwise distinct")
        if all(isinstance(s, float) for s in sites):
            sites = tuple(sorted(sites))
        object.__setattr__(self, "sites", sites)
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConstraintViolation(f"delta > 0 violated (delta={self.delta})")
        if not self.horizon >= self.delta:
            raise ConstraintViolation("horizon >= delta violated")
        if self.n_steps < 2:
            raise ConstraintViolation("floor(T/delta) >= 2 violated")

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.delta, self.horizon)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.delta

    def effective(self) -> "SamplingScheme":
        """The same scheme with the horizon snapped to ``n_steps * delta``."""
        return replace(self, horizon=self.n_steps * self.delta)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "horizon": self.horizon, "sites": list(self.sites)}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingScheme":
        delta = d.get("delta")
        if delta is None and "delta_log2" in d:
            delta = 2.0 ** float(d["delta_log2"])
        return cls(delta=float(delta), horizon=float(d["horizon"]), sites=tuple(d.get("sites", (0.0,))))


def _as_site(s):
    if isinstance(s, (list, tuple, np.ndarray)):
        return tuple(float(v) for v in s)
    return float(s)


@dataclass(frozen=True, eq=False)
class ObservedPath:
    """Level matrix ``Y(i*delta, x_j)`` with rows indexed by time."""

    scheme: SamplingScheme
    levels: np.ndarray

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float)
        if lv.ndim == 1:
            lv = lv[:, None]
        if lv.ndim != 2:
            raise ConstraintViolation("levels must be a 2-D array")
        n = self.scheme.n_steps
        if lv.shape != (n + 1, self.scheme.n_sites):
            raise ConstraintViolation(
                f"levels shape {lv.shape} inconsistent with scheme ({n + 1}, {self.scheme.n_sites})"
            )
        if not np.all(np.isfinite(lv)):
            raise ConstraintViolation("levels contain non-finite entries")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def delta(self) -> float:
        return self.scheme.delta

    @property
    def n_sites(self) -> int:
        return self.scheme.n_sites

    def increments(self) -> np.ndarray:
        return np.diff(self.levels, axis=0)

    def scaled(self, c: float) -> "ObservedPath":
        return ObservedPath(self.scheme, c * self.levels)

    def __eq__(self, other):
        if not isinstance(other, ObservedPath):
            return NotImplemented
        return self.scheme == other.scheme and np.array_equal(self.levels, other.levels)

    __hash__ = None


class FunctionalKind(str, enum.Enum):
    ABSOLUTE = "absolute"  # products of |z|^w
    SIGNED = "signed"  # products of z^w, integer w
    SECOND_ORDER = "second_order"  # |z_1 + z_2|^p
    CORR_SUM = "corr_sum"  # z_1 z_2 + z_1^2


@dataclass(frozen=True, eq=False)
class MultipowerSpec:
    """Weights ``w`` of shape (N, L) plus the functional kind.

    For ``SECOND_ORDER`` both columns hold ``p / 2`` and for ``CORR_SUM``
    both hold 1, so that ``total_weights`` is always the homogeneity degree.
    """

    weights: np.ndarray
    kind: FunctionalKind = FunctionalKind.ABSOLUTE

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind(self.kind))
        w = np.array(self.weights, dtype=float)
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2 or w.shape[1] < 1:
            raise UnsupportedSpec("weights must be an (N, L) matrix")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise UnsupportedSpec("weights must be finite and nonnegative")
        if self.kind is FunctionalKind.SIGNED and np.any(w != np.round(w)):
            raise UnsupportedSpec("signed multipowers need integer weights")
        if self.kind in (FunctionalKind.SECOND_ORDER, FunctionalKind.CORR_SUM):
            if w.shape[1] != 2:
                raise UnsupportedSpec(f"{self.kind.value} requires lag width 2")
            if np.any(w[:, 0] != w[:, 1]):
                raise UnsupportedSpec(f"{self.kind.value} requires equal columns")
            if self.kind is FunctionalKind.CORR_SUM and np.any(w != 1):
                raise UnsupportedSpec("corr_sum weights are fixed to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_sites(self) -> int:
        return self.weights.shape[0]

    @property
    def lag_width(self) -> int:
        return self.weights.shape[1]

    @property
    def total_weights(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def row(self, m: int) -> "MultipowerSpec":
        return MultipowerSpec(self.weights[m : m + 1], self.kind)

    def doubled(self) -> "MultipowerSpec":
        """The functional with all weights doubled, as used for studentization."""
        if self.kind not in (FunctionalKind.ABSOLUTE, FunctionalKind.SIGNED):
            raise UnsupportedSpec("doubling is defined for multipowers only")
        return MultipowerSpec(2 * self.weights, self.kind)

    def __eq__(self, other):
        if not isinstance(other, MultipowerSpec):
            return NotImplemented
        return self.kind is other.kind and np.array_equal(self.weights, other.weights)

    __hash__ = None

    # convenience constructors

    @classmethod
    def power(cls, p: float, n_sites: int = 1) -> "MultipowerSpec":
        return cls(np.full((n_sites, 1), float(p)), FunctionalKind.ABSOLUTE)

    @classmethod
    def multipower(cls, weights: Sequence[float], n_sites: int = 1) -> "MultipowerSpec":
        return cls(np.tile(np.asarray(weights, dtype=float), (n_sites, 1)), FunctionalKind.ABSOLUTE)

    @classmethod
    def signed(cls, weights: Sequence[int], n_sites: int = 1) -> "MultipowerSpec":
        return cls(np.tile(np.asarray(weights, dtype=float), (n_sites, 1)), FunctionalKind.SIGNED)

    @classmethod
    def second_order(cls, p: float, n_sites: int = 1) -> "MultipowerSpec":
        return cls(np.full((n_sites, 2), p / 2.0), FunctionalKind.SECOND_ORDER)

    @classmethod
    def corr_sum(cls, n_sites: int = 1) -> "MultipowerSpec":
        return cls(np.ones((n_sites, 2)), FunctionalKind.CORR_SUM)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict, n_sites: int = 1) -> "MultipowerSpec":
        """Parse the JSON form; ``power``/``second_order``/``corr_sum`` expand to ``n_sites`` rows."""
        kind = d["kind"]
        if kind == "power":
            return cls.power(float(d["p"]), n_sites)
        if kind == "second_order":
            return cls.second_order(float(d["p"]), n_sites)
        if kind == "corr_sum":
            return cls.corr_sum(n_sites)
        w = np.asarray(d["weights"], dtype=float)
        if w.ndim == 1:
            w = np.tile(w, (n_sites, 1))
        if kind in ("multipower", "absolute"):
            return cls(w, FunctionalKind.ABSOLUTE)
        if kind == "signed":
            return cls(w, FunctionalKind.SIGNED)
        raise UnsupportedSpec(f"unknown functional kind {kind!r}")


@dataclass
class EstimateReport:
    """Point estimate with a symmetric studentized confidence interval.

    ``std_error`` is the scale turning ``estimate - value`` into the
    studentized statistic. When a denominator vanished the report is flagged
    ``degenerate`` and carries no interval.
    """

    estimate: float
    std_error: Optional[float]
    level: float
    ci_lower: Optional[float] = None
    ci_upper: Optional[float] = None
    studentized: Optional[float] = None
    degenerate: bool = False
    method: str = ""
    per_site: list = field(default_factory=list)

    @property
    def variance_hat(self) -> Optional[float]:
        return None if self.std_error is None else self.std_error**2

    def statistic(self, value: float) -> float:
        """Studentized statistic ``(estimate - value) / std_error``."""
        if self.std_error is None or self.std_error == 0:
            return math.nan
        return (self.estimate - value) / self.std_error

    def covers(self, value: float) -> bool:
        if self.ci_lower is None or self.ci_upper is None:
            return False
        return self.ci_lower <= value <= self.ci_upper

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimate": _json_float(self.estimate),
            "per_site": [_json_float(v) for v in self.per_site],
            "variance_hat": _json_float(self.variance_hat),
            "ci": [_json_float(self.ci_lower), _json_float(self.ci_upper)],
            "level": self.level,
            "studentized": _json_float(self.studentized),
            "degenerate": self.degenerate,
        }


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None
