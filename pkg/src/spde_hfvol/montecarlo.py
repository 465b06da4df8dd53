"""Replicated experiments: simulate, estimate, and summarize against the known target."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from . import constants as K
from .errors import (
    CltHypothesisWarning,
    ConstraintViolation,
    DomainError,
    SpdeHfvolError,
)
from .estimators import (
    clt_weights_ok,
    estimate_alpha_cof,
    estimate_alpha_corr,
    estimate_vol_known_alpha,
    estimate_vol_unknown_alpha,
)
from .model import ModelParams, MultipowerSpec, NoiseKind, SamplingScheme
from .simulate import (
    Boundary,
    ConstantVol,
    DeterministicTimeVol,
    FdGridConfig,
    SeedSpec,
    balanced_grid,
    simulate_exact_stationary,
    simulate_fd_record,
    volatility_from_dict,
)
from .variation import variation

MAX_ERROR_FRACTION = 0.01


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


class TargetKind(str, enum.Enum):
    LLN = "lln"
    CLT = "clt"
    ALPHA_COF = "alpha_cof"
    ALPHA_CORR = "alpha_corr"
    VOL_KNOWN = "vol_known"
    VOL_UNKNOWN = "vol_unknown"


@dataclass(frozen=True)
class Target:
    kind: TargetKind
    spec: Optional[MultipowerSpec] = None
    p: float = 2.0
    alpha_method: str = "cof"

    def __post_init__(self):
        object.__setattr__(self, "kind", TargetKind(self.kind))
        needs_spec = self.kind in (TargetKind.LLN, TargetKind.CLT, TargetKind.VOL_KNOWN, TargetKind.VOL_UNKNOWN)
        if needs_spec and self.spec is None:
            raise ConstraintViolation(f"target {self.kind.value} needs a functional spec")
        if self.alpha_method not in ("cof", "corr"):
            raise ConstraintViolation("alpha_method must be 'cof' or 'corr'")

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        if self.kind in (TargetKind.ALPHA_COF, TargetKind.VOL_UNKNOWN):
            out["p"] = self.p
        if self.kind is TargetKind.VOL_UNKNOWN:
            out["alpha_method"] = self.alpha_method
        return out

    @classmethod
    def from_dict(cls, d: dict, n_sites: int) -> "Target":
        spec = MultipowerSpec.from_dict(d["spec"], n_sites) if "spec" in d else None
        return cls(d["kind"], spec, float(d.get("p", d.get("p0", 2.0))), d.get("alpha_method", "cof"))


@dataclass(frozen=True)
class SimulatorConfig:
    kind: str = "exact"  # "exact" or "fd"
    grid: Optional[FdGridConfig] = None
    damping: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("exact", "fd"):
            raise ConstraintViolation("simulator kind must be 'exact' or 'fd'")
        if self.kind == "fd" and self.grid is None:
            raise ConstraintViolation("finite-difference simulator needs a grid")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        if self.damping is not None:
            out["damping"] = self.damping
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    scheme: SamplingScheme
    volatility: object
    simulator: SimulatorConfig
    target: Target
    replications: int
    master_seed: int
    level: float = 0.95
    gate: Optional[dict] = None

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 2:
            raise ConstraintViolation("replications >= 2 violated")
        if not 0 < self.level < 1:
            raise ConstraintViolation("level must lie in (0, 1)")
        validate_setup(self.model, self.scheme, self.volatility, self.simulator)
        SeedSpec(self.master_seed, 0)
        if self.target.spec is not None and self.target.spec.n_sites != self.scheme.n_sites:
            raise ConstraintViolation("target spec rows must match the number of sites")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "scheme": self.scheme.to_dict(),
            "volatility": self.volatility.to_dict(),
            "simulator": self.simulator.to_dict(),
            "target": self.target.to_dict(),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "level": self.level,
            "gate": self.gate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Build from the JSON form; see :func:`parse_setup` for the simulation part."""
        try:
            model, scheme, vol, sim = parse_setup(d)
            target = Target.from_dict(d["target"], scheme.n_sites)
            return cls(
                model,
                scheme,
                vol,
                sim,
                target,
                d["replications"],
                int(d["master_seed"]),
                float(d.get("level", 0.95)),
                d.get("gate"),
            )
        except KeyError as e:
            raise ConstraintViolation(f"missing config key {e}") from None
        except TypeError as e:
            raise ConstraintViolation(f"malformed config: {e}") from None


def validate_setup(model, scheme, vol, sim) -> None:
    if sim.kind == "exact":
        if not isinstance(vol, ConstantVol):
            raise ConstraintViolation("the exact simulator requires constant volatility")
        if scheme.n_sites != 1:
            raise ConstraintViolation("the exact simulator requires a single site")
    elif model.noise_kind is not NoiseKind.WHITE:
        raise ConstraintViolation("the finite-difference simulator requires white noise")


def parse_setup(d: dict) -> tuple:
    """``(model, scheme, volatility, simulator)`` from a JSON object.

    ``simulator.balanced`` (instead of ``simulator.grid``) requests a grid
    from :func:`balanced_grid`; sites are then moved to the nearest node.
    """
    try:
        model = ModelParams.from_dict(d["model"])
        scheme = SamplingScheme.from_dict(d["scheme"])
        vol = volatility_from_dict(d.get("volatility", {"kind": "constant", "c": 1.0}))
        sd = dict(d.get("simulator", {"kind": "exact"}))
        grid = None
        if sd.get("kind", "exact") == "fd":
            if "balanced" in sd:
                b = dict(sd["balanced"])
                grid = balanced_grid(
                    model,
                    scheme.delta,
                    substeps=int(b.get("substeps", 16)),
                    domain_length=float(b.get("domain_length", 6.0)),
                    boundary=Boundary(b.get("boundary", "periodic")),
                    burn_in=b.get("burn_in"),
                )
                sites = tuple(round(s / grid.dx) * grid.dx for s in scheme.sites)
                scheme = SamplingScheme(scheme.delta, scheme.horizon, sites)
            elif "grid" in sd:
                grid = FdGridConfig.from_dict(sd["grid"])
        sim = SimulatorConfig(sd.get("kind", "exact"), grid, sd.get("damping"))
    except KeyError as e:
        raise ConstraintViolation(f"missing config key {e}") from None
    except TypeError as e:
        raise ConstraintViolation(f"malformed config: {e}") from None
    validate_setup(model, scheme, vol, sim)
    return model, scheme, vol, sim


def load_config(text: str) -> ExperimentConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConstraintViolation(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise ConstraintViolation("config must be a JSON object")
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# statistics helpers
# ---------------------------------------------------------------------------


def coverage_ci(hits: int, n: int, level: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if not (n >= 1 and 0 <= hits <= n) or not 0 < level < 1:
        raise DomainError("coverage_ci needs n >= 1, 0 <= hits <= n and level in (0, 1)")
    z = stats.norm.ppf(0.5 + level / 2.0)
    phat = hits / n
    den = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / den
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / den
    # the interval touches 0 or 1 exactly at the boundary counts
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


def ks_against_standard_normal(sample) -> tuple:
    """One-sample KS statistic and asymptotic p-value against N(0, 1)."""
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size < 10 or not np.all(np.isfinite(x)):
        raise DomainError("KS test needs at least 10 finite values")
    res = stats.kstest(x, "norm", method="asymp")
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# one replication
# ---------------------------------------------------------------------------


def _analytic_integral(vol, w: np.ndarray, horizon: float) -> Optional[np.ndarray]:
    if isinstance(vol, (ConstantVol, DeterministicTimeVol)):
        return np.array([vol.integrated(float(wm), horizon) for wm in w])
    return None


def _simulate(cfg: ExperimentConfig, index: int):
    seed = SeedSpec(cfg.master_seed, index)
    if cfg.simulator.kind == "exact":
        path = simulate_exact_stationary(cfg.model, cfg.scheme, cfg.volatility, seed)
        return path, None
    rec = simulate_fd_record(cfg.model, cfg.scheme, cfg.volatility, cfg.simulator.grid, seed, cfg.simulator.damping)
    return rec.path, rec


def _clt_entries(cfg, path, spec, integral):
    """Power-variation CLT with the exact normalizer and the model's index."""
    alpha = cfg.model.alpha
    tau = math.sqrt(K.tau_sq_exact(cfg.model, path.delta))
    v = variation(path, spec, tau).per_site
    v2 = variation(path, spec.doubled(), tau).per_site
    z = stats.norm.ppf(0.5 + cfg.level / 2.0)
    out = []
    for m in range(spec.n_sites):
        row = spec.row(m)
        mu = K.mu_multipower(row, alpha)
        mu2 = K.mu_multipower(row.doubled(), alpha)
        rho = K.rho_sum(row, alpha)
        est = v[m] / mu
        se = math.sqrt(path.delta * rho * v2[m] / mu2) / abs(mu)
        entry = {"estimate": est, "truth": integral[m]}
        if se > 0:
            entry.update(studentized=(est - integral[m]) / se, ci=[est - z * se, est + z * se])
        out.append(entry)
    return out


def _run_one(cfg: ExperimentConfig, index: int) -> dict:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CltHypothesisWarning)
            return {"replication": index, "sites": _run_one_inner(cfg, index)}
    except (SpdeHfvolError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        return {"replication": index, "error": f"{type(e).__name__}: {e}"}


def _run_one_inner(cfg: ExperimentConfig, index: int) -> list:
    path, rec = _simulate(cfg, index)
    tgt = cfg.target
    horizon = path.scheme.horizon
    if tgt.kind in (TargetKind.ALPHA_COF, TargetKind.ALPHA_CORR):
        a = cfg.model.alpha
        if tgt.kind is TargetKind.ALPHA_COF:
            est = estimate_alpha_cof(path, tgt.p, cfg.level, null_value=a)
        else:
            est = estimate_alpha_corr(path, cfg.level, null_value=a)
        return [_entry_from_report(est.report, a)]

    w = tgt.spec.total_weights
    integral = _analytic_integral(cfg.volatility, w, horizon)
    if integral is None:
        integral = np.array([rec.realized_integrated(float(wm))[m] for m, wm in enumerate(w)])

    if tgt.kind is TargetKind.LLN:
        tau = math.sqrt(K.tau_sq_exact(cfg.model, path.delta))
        v = variation(path, tgt.spec, tau).per_site
        mus = [K.mu_multipower(tgt.spec.row(m), cfg.model.alpha) for m in range(tgt.spec.n_sites)]
        return [{"estimate": float(v[m]), "truth": float(mus[m] * integral[m])} for m in range(len(v))]
    if tgt.kind is TargetKind.CLT:
        return _clt_entries(cfg, path, tgt.spec, integral)
    if tgt.kind is TargetKind.VOL_KNOWN:
        ve = estimate_vol_known_alpha(path, tgt.spec, cfg.model.alpha, cfg.model.kappa, cfg.level, cfg.model.dim, integral)
    else:
        ve = estimate_vol_unknown_alpha(
            path, tgt.spec, cfg.model.kappa, tgt.alpha_method, tgt.p, cfg.level, cfg.model.dim, integral
        )
    return [_entry_from_report(r, integral[m]) for m, r in enumerate(ve.reports)]


def _entry_from_report(rep, truth) -> dict:
    entry = {"estimate": rep.estimate, "truth": float(truth)}
    if not rep.degenerate and rep.std_error is not None:
        entry.update(studentized=rep.statistic(truth), ci=[rep.ci_lower, rep.ci_upper])
    else:
        entry["degenerate"] = True
    return entry


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------


def default_workers() -> int:
    env = os.environ.get("SPDE_HFVOL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConstraintViolation("SPDE_HFVOL_THREADS must be a positive integer") from None
        if n < 1:
            raise ConstraintViolation("SPDE_HFVOL_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def _task(args):
    cfg, lo, hi = args
    return [_run_one(cfg, i) for i in range(lo, hi)]


@dataclass
class McReport:
    config: dict
    per_replication: list
    summary: dict
    truth: Optional[float]
    gate: Optional[dict] = None
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.gate is None or bool(self.gate["passed"])

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "config": self.config,
            "truth": self.truth,
            "summary": self.summary,
            "gate": self.gate,
            "per_replication": self.per_replication,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        return out

    def to_json(self, include_runtime: bool = False) -> str:
        """Deterministic JSON (sorted keys, non-finite values as null)."""
        return json.dumps(_clean(self.to_dict(include_runtime)), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["replication", "estimate", "studentized", "ci_lo", "ci_hi", "hit"])
        for e in self.per_replication:
            ci = e.get("ci") or [None, None]
            wr.writerow(
                [e["replication"]]
                + [_fmt(v) for v in (e.get("estimate"), e.get("studentized"), ci[0], ci[1])]
                + ["" if e.get("ci_hit") is None else int(e["ci_hit"])]
            )
        return buf.getvalue()


def _fmt(v):
    return "" if v is None or not math.isfinite(v) else repr(float(v))


def _clean(o):
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else None
    return o


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> McReport:
    """Run every replication and summarize.

    The result is a pure function of ``cfg``: replications use independent
    streams keyed by their index and are collected in index order, so the
    worker count does not matter.
    """
    t0 = time.perf_counter()
    if cfg.target.spec is not None and cfg.target.kind is not TargetKind.LLN and not clt_weights_ok(cfg.target.spec):
        warnings.warn("target weights outside the CLT range; intervals suppressed", CltHypothesisWarning)
    workers = default_workers() if workers is None else int(workers)
    n = int(cfg.replications)
    if workers <= 1 or n < 2:
        raw = [_run_one(cfg, i) for i in range(n)]
    else:
        n_chunks = min(n, 4 * workers)
        bounds = np.linspace(0, n, n_chunks + 1).astype(int)
        tasks = [(cfg, int(bounds[k]), int(bounds[k + 1])) for k in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            raw = [r for chunk in ex.map(_task, tasks) for r in chunk]
    raw.sort(key=lambda r: r["replication"])

    entries, errors = [], []
    for r in raw:
        if "error" in r:
            errors.append({"replication": r["replication"], "error": r["error"]})
            continue
        for m, e in enumerate(r["sites"]):
            e = dict(e, replication=r["replication"], site=m)
            if "ci" in e:
                e["ci_hit"] = bool(e["ci"][0] <= e["truth"] <= e["ci"][1])
            entries.append(e)

    summary = _summarize(entries, cfg.level)
    summary["n_replications"] = n
    summary["n_errors"] = len(errors)
    summary["errors"] = errors
    summary["batch_failed"] = len(errors) > MAX_ERROR_FRACTION * n
    truth = _common_truth(entries)
    gate = _evaluate_gate(cfg.gate, summary) if cfg.gate else None
    return McReport(cfg.to_dict(), entries, summary, truth, gate, time.perf_counter() - t0)


def _common_truth(entries) -> Optional[float]:
    truths = {e["truth"] for e in entries}
    return truths.pop() if len(truths) == 1 else None


def _summarize(entries, level) -> dict:
    est = np.array([e["estimate"] for e in entries], dtype=float)
    tru = np.array([e["truth"] for e in entries], dtype=float)
    ok = np.isfinite(est)
    err = est[ok] - tru[ok]
    out = {
        "count": int(ok.sum()),
        "mean": float(np.mean(est[ok])) if ok.any() else None,
        "bias": float(np.mean(err)) if ok.any() else None,
        "rel_bias": float(np.mean(err) / np.mean(tru[ok])) if ok.any() and np.mean(tru[ok]) != 0 else None,
        "rmse": float(np.sqrt(np.mean(err**2))) if ok.any() else None,
        "n_degenerate": int(sum(1 for e in entries if e.get("degenerate"))),
    }
    hits = [e["ci_hit"] for e in entries if "ci_hit" in e]
    if hits:
        h = int(sum(hits))
        out["coverage"] = h / len(hits)
        out["coverage_ci"] = list(coverage_ci(h, len(hits), level))
    else:
        out["coverage"] = None
    z = np.array([e["studentized"] for e in entries if e.get("studentized") is not None], dtype=float)
    z = z[np.isfinite(z)]
    if z.size >= 10:
        out["ks_statistic"], out["ks_pvalue"] = ks_against_standard_normal(z)
        out["studentized_mean"] = float(np.mean(z))
        out["studentized_sd"] = float(np.std(z, ddof=1))
    else:
        out["ks_statistic"] = out["ks_pvalue"] = None
    return out


def _evaluate_gate(gate: dict, summary: dict) -> dict:
    """Check summary statistics against thresholds.

    Recognized keys: ``coverage`` ([lo, hi]), ``ks_pvalue_min``,
    ``bias_abs_max``, ``rel_bias_max``, ``rmse_max``.
    """
    checks = {}

    def val(key):
        v = summary.get(key)
        return math.nan if v is None else v

    if "coverage" in gate:
        lo, hi = gate["coverage"]
        checks["coverage"] = lo <= val("coverage") <= hi
    if "ks_pvalue_min" in gate:
        checks["ks_pvalue"] = val("ks_pvalue") > gate["ks_pvalue_min"]
    if "bias_abs_max" in gate:
        checks["bias"] = abs(val("bias")) < gate["bias_abs_max"]
    if "rel_bias_max" in gate:
        checks["rel_bias"] = abs(val("rel_bias")) < gate["rel_bias_max"]
    if "rmse_max" in gate:
        checks["rmse"] = val("rmse") < gate["rmse_max"]
    checks["errors"] = not summary["batch_failed"]
    return {"checks": checks, "passed": all(checks.values())}
