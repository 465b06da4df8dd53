"""Path simulators for the damped stochastic heat equation.

Two routes are provided:

* :func:`simulate_exact_stationary` draws the increments of the stationary
  unit-volatility solution at a single site exactly, by circulant embedding
  of their Toeplitz covariance.
* :func:`simulate_fd` runs an explicit Euler finite-difference scheme for
  space-time white noise in d = 1 with a choice of volatility models.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, linalg, optimize, signal

from .constants import increment_autocorrelations, tau_sq_exact
from .errors import (
    ConstraintViolation,
    EmbeddingNotPSD,
    NonFiniteState,
    StabilityViolation,
)
from .model import ModelParams, NoiseKind, ObservedPath, SamplingScheme


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConstraintViolation("master_seed must be a 64-bit unsigned integer")
        if int(self.replication_index) < 0:
            raise ConstraintViolation("replication_index must be nonnegative")


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Independent generator for one replication.

    The stream is a pure function of ``(master_seed, replication_index)``;
    distinct indices map to distinct spawn keys of the same seed sequence.
    """
    ss = np.random.SeedSequence(int(seed.master_seed), spawn_key=(int(seed.replication_index),))
    return np.random.Generator(np.random.PCG64(ss))


def _burn_in_stream(seed: SeedSpec) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed.master_seed), spawn_key=(int(seed.replication_index), 1))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# volatility models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantVol:
    c: float = 1.0

    is_stochastic = False

    def __post_init__(self):
        if not self.c > 0:
            raise ConstraintViolation("constant volatility must be positive")

    def integrated(self, w: float, horizon: float) -> float:
        return self.c**w * horizon

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class DeterministicTimeVol:
    """Volatility depending on time only, ``sigma(t) = fn(t)``."""

    fn: Callable[[np.ndarray], np.ndarray]

    is_stochastic = False

    def __call__(self, t):
        return self.fn(t)

    def integrated(self, w: float, horizon: float) -> float:
        val, _ = integrate.quad(lambda s: abs(float(self.fn(s))) ** w, 0.0, horizon, limit=200)
        return val

    def to_dict(self):
        raise TypeError("arbitrary callables are not serializable; use SinusoidVol")


@dataclass(frozen=True)
class SinusoidVol(DeterministicTimeVol):
    """``sigma(t) = base + amplitude * sin(2 pi frequency t + phase)``."""

    fn: Optional[Callable] = field(default=None, init=False, repr=False, compare=False)
    base: float = 1.0
    amplitude: float = 0.5
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.base > abs(self.amplitude):
            raise ConstraintViolation("sinusoid volatility must stay positive (base > |amplitude|)")
        object.__setattr__(self, "fn", self._eval)

    def _eval(self, t):
        return self.base + self.amplitude * np.sin(2 * np.pi * self.frequency * np.asarray(t) + self.phase)

    def to_dict(self):
        return {
            "kind": "sinusoid",
            "base": self.base,
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class OUFieldVol:
    """Log-normal volatility driven by an OU process in time, smooth in space.

    ``sigma = mu_sigma * exp(Z - eta^2 / (4 theta))`` where each grid node of
    ``Z`` is a stationary OU process with rate ``theta`` and diffusion
    ``eta``, fed by noise convolved with a Gaussian kernel of width ``ell``
    (normalized so that the smoothed noise keeps unit variance per node).
    """

    theta: float = 1.0
    eta: float = 0.5
    mu_sigma: float = 1.0
    ell: float = 0.25

    is_stochastic = True

    def __post_init__(self):
        if not (self.theta > 0 and self.eta >= 0 and self.mu_sigma > 0 and self.ell > 0):
            raise ConstraintViolation("OU field needs theta > 0, eta >= 0, mu_sigma > 0, ell > 0")

    @property
    def stationary_var(self) -> float:
        return self.eta**2 / (2 * self.theta)

    def to_dict(self):
        return {"kind": "ou_field", "theta": self.theta, "eta": self.eta, "mu_sigma": self.mu_sigma, "ell": self.ell}


@dataclass(frozen=True)
class BoundedOfYVol:
    """``sigma = base + amplitude * tanh(Y)``, bounded by ``base + |amplitude|``."""

    base: float = 1.0
    amplitude: float = 0.5

    is_stochastic = True

    def __post_init__(self):
        if not self.base > abs(self.amplitude):
            raise ConstraintViolation("bounded volatility must stay positive (base > |amplitude|)")

    @property
    def bound(self) -> float:
        return self.base + abs(self.amplitude)

    def __call__(self, y):
        return self.base + self.amplitude * np.tanh(y)

    def to_dict(self):
        return {"kind": "bounded_of_y", "base": self.base, "amplitude": self.amplitude}


VolatilityModel = Union[ConstantVol, DeterministicTimeVol, OUFieldVol, BoundedOfYVol]


def volatility_from_dict(d: dict) -> VolatilityModel:
    kind = d.get("kind", "constant")
    args = {k: v for k, v in d.items() if k != "kind"}
    if kind == "constant":
        return ConstantVol(**args)
    if kind == "sinusoid":
        return SinusoidVol(**args)
    if kind == "ou_field":
        return OUFieldVol(**args)
    if kind == "bounded_of_y":
        return BoundedOfYVol(**args)
    raise ConstraintViolation(f"unknown volatility kind {kind!r}")


# ---------------------------------------------------------------------------
# exact stationary simulator
# ---------------------------------------------------------------------------

_CHOLESKY_MAX = 2**15


@lru_cache(maxsize=16)
def _embedding_factor(alpha, lam, delta, n):
    """Square-root spectrum of the circulant embedding, or a Cholesky factor."""
    rho = increment_autocorrelations(alpha, lam, delta, n)
    row = np.concatenate([rho, rho[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() >= -1e-10:
        eig = np.clip(eig, 0.0, None)
        out = np.sqrt(eig / row.size)
        out.setflags(write=False)
        return "circulant", out
    if n > _CHOLESKY_MAX:
        raise EmbeddingNotPSD(f"embedding spectrum has entry {eig.min():.3g} and n > {_CHOLESKY_MAX}")
    chol = linalg.cholesky(linalg.toeplitz(rho[:n]), lower=True)
    chol.setflags(write=False)
    return "cholesky", chol


def stationary_increments(
    params: ModelParams, delta: float, n: int, rng: np.random.Generator, c: float = 1.0
) -> np.ndarray:
    """Exact draw of ``n`` stationary increments with variance ``c^2 tau_n^2``."""
    method, factor = _embedding_factor(params.alpha, params.lam, delta, n)
    scale = c * math.sqrt(tau_sq_exact(params, delta))
    if method == "circulant":
        m = factor.size
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        x = np.fft.fft(factor * z).real[:n]
    else:
        x = factor @ rng.standard_normal(n)
    return scale * x


def simulate_exact_stationary(
    params: ModelParams,
    scheme: SamplingScheme,
    sigma: Union[ConstantVol, float],
    seed: SeedSpec,
) -> ObservedPath:
    """Single-site path of the stationary solution with constant volatility.

    Levels start at ``Y(0) = 0`` and are cumulative sums of the increments.
    """
    if scheme.n_sites != 1:
        raise ConstraintViolation("the exact simulator supports a single site only")
    c = sigma.c if isinstance(sigma, ConstantVol) else float(sigma)
    if not isinstance(sigma, (ConstantVol, int, float)):
        raise ConstraintViolation("the exact simulator needs constant volatility")
    rng = derive_stream(seed)
    dx = stationary_increments(params, scheme.delta, scheme.n_steps, rng, c)
    levels = np.concatenate([[0.0], np.cumsum(dx)])
    return ObservedPath(scheme.effective(), levels[:, None])


# ---------------------------------------------------------------------------
# finite-difference simulator
# ---------------------------------------------------------------------------


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class InitialCondition:
    """Initial level profile; ``kind`` is ``zero``, ``gaussian_bump`` or ``sine``."""

    kind: str = "zero"
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    mode: int = 1

    def __call__(self, x: np.ndarray, length: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "gaussian_bump":
            return self.amplitude * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)
        if self.kind == "sine":
            return self.amplitude * np.sin(np.pi * self.mode * x / length)
        raise ConstraintViolation(f"unknown initial condition {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude, "center": self.center,
                "width": self.width, "mode": self.mode}


@dataclass(frozen=True)
class FdGridConfig:
    dt: float
    dx: float
    domain_length: float
    boundary: Boundary = Boundary.DIRICHLET
    initial_condition: InitialCondition = InitialCondition()
    burn_in: Optional[float] = None  # None means 5 / lambda

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if isinstance(self.initial_condition, dict):
            object.__setattr__(self, "initial_condition", InitialCondition(**self.initial_condition))
        if not (self.dt > 0 and self.dx > 0 and self.domain_length > 0):
            raise StabilityViolation("dt, dx and domain_length must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise StabilityViolation("burn_in must be nonnegative")

    @property
    def n_cells(self) -> int:
        return int(round(self.domain_length / self.dx))

    def to_dict(self):
        return {
            "dt": self.dt,
            "dx": self.dx,
            "domain_length": self.domain_length,
            "boundary": self.boundary.value,
            "initial_condition": self.initial_condition.to_dict(),
            "burn_in": self.burn_in,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FdGridConfig":
        d = dict(d)
        d.pop("kind", None)
        ic = d.pop("initial_condition", None)
        if isinstance(ic, dict):
            d["initial_condition"] = InitialCondition(**ic)
        return cls(**d)


def default_domain_length(kappa: float, horizon: float, burn_in: float) -> float:
    """Conservative Dirichlet domain length ``20 sqrt(kappa (T + burn_in))``."""
    return 20.0 * math.sqrt(kappa * (horizon + burn_in))


def check_grid(params: ModelParams, scheme: SamplingScheme, grid: FdGridConfig) -> tuple:
    """Validate the grid against the sampling scheme.

    Returns ``(substeps, site_indices)``. Raises :class:`StabilityViolation`
    naming the violated inequality.
    """
    ratio = scheme.delta / grid.dt
    sub = int(round(ratio))
    if abs(ratio - sub) > 1e-9 * ratio:
        raise StabilityViolation(f"delta/dt = {ratio} must be an integer")
    if sub < 8:
        raise StabilityViolation(f"dt <= delta/8 violated (delta/dt = {sub})")
    cfl = params.kappa * grid.dt / grid.dx**2
    if cfl > 0.5:
        raise StabilityViolation(f"kappa*dt/dx^2 <= 1/2 violated (value {cfl:.4g})")
    M = grid.n_cells
    if abs(M * grid.dx - grid.domain_length) > 1e-9 * grid.domain_length:
        raise StabilityViolation("domain_length must be an integer multiple of dx")
    idx = []
    for s in scheme.sites:
        if not isinstance(s, float):
            raise StabilityViolation("the finite-difference simulator is one-dimensional")
        k = s / grid.dx
        j = int(round(k))
        if abs(k - j) > 1e-6:
            raise StabilityViolation(f"site {s} is not on the spatial grid")
        if grid.boundary is Boundary.PERIODIC:
            if not 0 <= j < M:
                raise StabilityViolation(f"site {s} outside [0, domain_length)")
        else:
            if min(s, grid.domain_length - s) < grid.domain_length / 8 - 1e-12:
                raise StabilityViolation(f"site {s} closer than domain_length/8 to the boundary")
        idx.append(j)
    return sub, idx


def _smoothing_fft(n_nodes: int, dx: float, ell: float) -> np.ndarray:
    j = np.arange(n_nodes)
    d = np.minimum(j, n_nodes - j) * dx
    k = np.exp(-0.5 * (d / ell) ** 2)
    k /= math.sqrt(np.sum(k**2))
    return np.fft.rfft(k)


_CHUNK = 512


@dataclass
class FdRecord:
    """Simulated path plus the volatility seen at the sites on the fine grid."""

    path: ObservedPath
    sigma_sites: np.ndarray  # shape (n_fine_steps, N), sigma at the start of each fine step
    dt: float

    def realized_integrated(self, w: float) -> np.ndarray:
        """Riemann sum of ``|sigma|^w`` over [0, T] per site."""
        return self.dt * np.sum(np.abs(self.sigma_sites) ** w, axis=0)


def simulate_fd(
    params: ModelParams,
    scheme: SamplingScheme,
    sigma: VolatilityModel,
    grid: FdGridConfig,
    seed: SeedSpec,
    damping: Optional[float] = None,
) -> ObservedPath:
    """Explicit Euler simulation of the white-noise heat equation; see :func:`simulate_fd_record`."""
    return simulate_fd_record(params, scheme, sigma, grid, seed, damping).path


def simulate_fd_record(
    params: ModelParams,
    scheme: SamplingScheme,
    sigma: VolatilityModel,
    grid: FdGridConfig,
    seed: SeedSpec,
    damping: Optional[float] = None,
) -> FdRecord:
    """Finite-difference path with the site volatility record.

    ``damping`` overrides ``params.lam`` and may be 0 (the non-stationary
    equation started from the initial condition).
    """
    if params.noise_kind is not NoiseKind.WHITE:
        raise ConstraintViolation("the finite-difference simulator needs space-time white noise")
    lam = params.lam if damping is None else float(damping)
    if lam < 0:
        raise ConstraintViolation("damping must be nonnegative")
    sub, site_idx = check_grid(params, scheme, grid)
    burn_in = 5.0 / lam if grid.burn_in is None else grid.burn_in
    if grid.burn_in is None and lam == 0:
        burn_in = 0.0
    dt, dx = grid.dt, grid.dx
    n_obs = scheme.n_steps
    burn_steps = int(round(burn_in / dt))
    total = burn_steps + n_obs * sub

    M = grid.n_cells
    periodic = grid.boundary is Boundary.PERIODIC
    n_nodes = M if periodic else M + 1
    x = np.arange(n_nodes) * dx
    y = grid.initial_condition(x, grid.domain_length).astype(float)
    if not periodic:
        y[0] = y[-1] = 0.0

    # burn-in draws come from a separate child stream, so the observation
    # window sees the same noise whatever the burn-in length
    rng = derive_stream(seed)
    burn_rng = _burn_in_stream(seed)
    diff = 0.5 * params.kappa * dt / dx**2
    decay = 1.0 - lam * dt
    noise_scale = math.sqrt(dt / dx)

    ou = isinstance(sigma, OUFieldVol)
    if ou:
        a = math.exp(-sigma.theta * dt)
        b = sigma.eta * math.sqrt((1.0 - a * a) / (2.0 * sigma.theta))
        kern = _smoothing_fft(n_nodes, dx, sigma.ell)
        smooth = lambda e: np.fft.irfft(np.fft.rfft(e, axis=-1) * kern, n=n_nodes, axis=-1)
        z = math.sqrt(sigma.stationary_var) * smooth(burn_rng.standard_normal(n_nodes))
        log_shift = sigma.stationary_var / 2.0

    levels = np.empty((n_obs + 1, len(site_idx)))
    sig_sites = np.empty((n_obs * sub, len(site_idx)))
    site_idx = np.asarray(site_idx)
    lap = np.empty(n_nodes)

    for phase_rng, first, last in ((burn_rng, 0, burn_steps), (rng, burn_steps, total)):
        step = first
        while step < last:
            k_chunk = min(_CHUNK, last - step)
            xi = phase_rng.standard_normal((k_chunk, n_nodes)) * noise_scale
            t0 = (step - burn_steps) * dt
            if isinstance(sigma, ConstantVol):
                sig_chunk = np.full((k_chunk, 1), sigma.c)
            elif isinstance(sigma, DeterministicTimeVol):
                tk = t0 + dt * np.arange(k_chunk)
                sig_chunk = np.asarray(sigma(tk), dtype=float).reshape(k_chunk, 1)
            elif ou:
                eps = smooth(phase_rng.standard_normal((k_chunk, n_nodes)))
                zs = signal.lfilter([b], [1.0, -a], eps, axis=0, zi=(a * z)[None, :])[0]
                zpath = np.vstack([z[None, :], zs[:-1]])
                z = zs[-1]
                sig_chunk = sigma.mu_sigma * np.exp(zpath - log_shift)
            else:
                sig_chunk = None
            for k in range(k_chunk):
                s_ = step + k
                if s_ >= burn_steps and (s_ - burn_steps) % sub == 0:
                    levels[(s_ - burn_steps) // sub] = y[site_idx]
                sig = sigma(y) if sig_chunk is None else sig_chunk[k]
                if s_ >= burn_steps:
                    sig_sites[s_ - burn_steps] = sig[site_idx] if np.size(sig) > 1 else sig
                if periodic:
                    lap[1:-1] = y[2:] + y[:-2]
                    lap[0] = y[1] + y[-1]
                    lap[-1] = y[0] + y[-2]
                    lap -= 2.0 * y
                else:
                    lap[1:-1] = y[2:] + y[:-2] - 2.0 * y[1:-1]
                    lap[0] = lap[-1] = 0.0
                y = decay * y + diff * lap + sig * xi[k]
                if not periodic:
                    y[0] = y[-1] = 0.0
            step += k_chunk
            if not np.all(np.isfinite(y)):
                raise NonFiniteState(f"non-finite level after {step} steps")
    levels[n_obs] = y[site_idx]
    if not np.all(np.isfinite(levels)):
        raise NonFiniteState("non-finite observed level")
    path = ObservedPath(scheme.effective(), levels)
    return FdRecord(path=path, sigma_sites=sig_sites, dt=dt)


# ---------------------------------------------------------------------------
# discretization diagnostics
# ---------------------------------------------------------------------------


def fd_increment_variance_ratio(
    params: ModelParams, delta: float, grid: FdGridConfig, damping: Optional[float] = None
) -> float:
    """Stationary increment variance of the Euler scheme divided by ``tau_n^2``.

    Computed mode by mode: each Fourier (periodic) or sine (Dirichlet, at the
    midpoint) mode is an AR(1) recursion with known stationary variance.
    """
    lam = params.lam if damping is None else damping
    dt, dx = grid.dt, grid.dx
    M = grid.n_cells
    sub = int(round(delta / dt))
    if grid.boundary is Boundary.PERIODIC:
        k = np.arange(M)
        ev = 4.0 / dx**2 * np.sin(np.pi * k / M) ** 2
        weight = np.full(M, 1.0 / M)
    else:
        k = np.arange(1, M)
        ev = 4.0 / dx**2 * np.sin(np.pi * k / (2 * M)) ** 2
        weight = 2.0 / M * np.sin(np.pi * k * (M // 2) / M) ** 2
    phi = 1.0 - dt * (0.5 * params.kappa * ev + lam)
    var = (dt / dx) / (1.0 - phi**2)
    inc = np.sum(weight * 2.0 * var * (1.0 - phi**sub))
    return float(inc / tau_sq_exact(params, delta))


def balanced_grid(
    params: ModelParams,
    delta: float,
    substeps: int = 16,
    domain_length: float = 6.0,
    boundary: Boundary = Boundary.PERIODIC,
    burn_in: Optional[float] = None,
    initial_condition: InitialCondition = InitialCondition(),
) -> FdGridConfig:
    """Grid whose space step makes the Euler increment variance match ``tau_n^2``.

    Spatial truncation lowers the increment variance and the explicit time
    step raises it; the mesh ratio ``kappa dt / dx^2`` is chosen where the
    two cancel, then ``dx`` is rounded to an even number of cells.
    """
    dt = delta / substeps

    def make(ratio):
        dx = math.sqrt(params.kappa * dt / ratio)
        M = max(2, 2 * int(round(domain_length / dx / 2)))
        return FdGridConfig(dt, domain_length / M, domain_length, boundary, initial_condition, burn_in)

    f = lambda ratio: fd_increment_variance_ratio(params, delta, make(ratio)) - 1.0
    lo, hi = 0.02, 0.5
    if f(lo) * f(hi) > 0:
        return make(0.25)
    ratio = optimize.brentq(f, lo, hi, xtol=1e-4)
    return make(ratio)
