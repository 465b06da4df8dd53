"""Command-line entry point ``spde-hfvol``.

Exit codes: 0 success, 2 invalid input, 3 simulation failure, 4 estimator
domain error, 5 Monte Carlo acceptance gate failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

from .constants import constants_summary
from .errors import (
    ConstraintViolation,
    DomainError,
    IngestError,
    RatioOutOfDomain,
    SpdeHfvolError,
    StabilityViolation,
)
from .estimators import (
    estimate_alpha_cof,
    estimate_alpha_corr,
    estimate_vol_known_alpha,
    estimate_vol_unknown_alpha,
)
from .io import format_path_csv, read_path_csv
from .model import MultipowerSpec
from .montecarlo import load_config, parse_setup, run_experiment
from .simulate import SeedSpec, check_grid, simulate_exact_stationary, simulate_fd

EXIT_OK, EXIT_INPUT, EXIT_SIM, EXIT_ESTIMATOR, EXIT_GATE = 0, 2, 3, 4, 5


class _Fail(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=1, sort_keys=True) + "\n"


def _finite(o):
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, list):
        return [_finite(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read {path}: {e.strerror}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise _Fail(EXIT_INPUT, f"invalid JSON in {path} at line {e.lineno} column {e.colno}: {e.msg}")


# --- subcommands -----------------------------------------------------------


def cmd_constants(args) -> int:
    try:
        out = constants_summary(args.alpha, args.p, args.n_gamma, args.lam, args.delta)
    except (SpdeHfvolError, ValueError) as e:
        raise _Fail(EXIT_INPUT, str(e))
    _emit(_dumps(out), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    d = _read_json(args.config)
    try:
        model, scheme, vol, sim = parse_setup(d)
        seed = SeedSpec(args.seed, args.replication)
        if sim.kind == "fd":
            check_grid(model, scheme, sim.grid)
    except (SpdeHfvolError, ValueError) as e:
        raise _Fail(EXIT_INPUT, str(e))
    try:
        if sim.kind == "exact":
            path = simulate_exact_stationary(model, scheme, vol, seed)
        else:
            path = simulate_fd(model, scheme, vol, sim.grid, seed, sim.damping)
    except StabilityViolation as e:
        raise _Fail(EXIT_INPUT, str(e))
    except (SpdeHfvolError, ArithmeticError) as e:
        raise _Fail(EXIT_SIM, f"simulation failed: {e}")
    _emit(format_path_csv(path), args.out)
    return EXIT_OK


def _vol_spec(args, n_sites):
    if args.spec:
        try:
            return MultipowerSpec.from_dict(json.loads(args.spec), n_sites)
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise _Fail(EXIT_INPUT, f"bad --spec: {e}")
    return MultipowerSpec.power(args.p, n_sites)


def cmd_estimate(args) -> int:
    try:
        path, _ = read_path_csv(args.path)
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read {args.path}: {e.strerror}")
    except (IngestError, ValueError) as e:
        raise _Fail(EXIT_INPUT, f"{type(e).__name__}: {e}")
    m = args.method
    if m in ("vol-known", "vol-unknown") and args.kappa is None:
        raise _Fail(EXIT_INPUT, "--kappa is required for volatility estimation")
    if m == "vol-known" and args.alpha is None:
        raise _Fail(EXIT_INPUT, "--alpha is required for vol-known")
    try:
        if m == "cof":
            out = estimate_alpha_cof(path, args.p, args.level, args.null).report.to_dict()
        elif m == "corr":
            out = estimate_alpha_corr(path, args.level, args.null).report.to_dict()
        else:
            spec = _vol_spec(args, path.n_sites)
            truth = None if args.null is None else [args.null] * path.n_sites
            if m == "vol-known":
                ve = estimate_vol_known_alpha(path, spec, args.alpha, args.kappa, args.level, truth=truth)
            else:
                ve = estimate_vol_unknown_alpha(
                    path, spec, args.kappa, args.alpha_method, args.p0, args.level, truth=truth
                )
            if path.n_sites == 1:
                out = ve.reports[0].to_dict()
                out["method"] = m
                out["rate"] = ve.rate_tag
                if not ve.alpha_known:
                    out["alpha_estimate"] = ve.alpha_mode.report.to_dict()
            else:
                out = ve.to_dict()
    except (RatioOutOfDomain, DomainError, ArithmeticError) as e:
        raise _Fail(EXIT_ESTIMATOR, f"{type(e).__name__}: {e}")
    except (SpdeHfvolError, ValueError) as e:
        raise _Fail(EXIT_INPUT, f"{type(e).__name__}: {e}")
    _emit(_dumps(out), args.out)
    return EXIT_OK


def cmd_mc(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read {args.config}: {e.strerror}")
    try:
        cfg = load_config(text)
    except (SpdeHfvolError, ValueError) as e:
        raise _Fail(EXIT_INPUT, str(e))
    report = run_experiment(cfg, args.workers)
    _emit(report.to_json(include_runtime=args.include_runtime), args.out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    s = report.summary
    print(
        f"replications={s['n_replications']} errors={s['n_errors']} mean={s['mean']} "
        f"coverage={s.get('coverage')} ks_pvalue={s.get('ks_pvalue')} "
        f"runtime={report.runtime_seconds:.1f}s",
        file=sys.stderr,
    )
    if s["batch_failed"] or not report.passed:
        print(f"gate failed: {report.gate}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


# --- parser ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Fail(EXIT_INPUT, message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spde-hfvol", description="High-frequency inference for the stochastic heat equation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("constants", help="print asymptotic constants as JSON")
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--p", type=float, default=2.0)
    c.add_argument("--lambda", dest="lam", type=float)
    c.add_argument("--delta", type=float)
    c.add_argument("--n-gamma", type=int, default=10)
    c.add_argument("--out")
    c.set_defaults(func=cmd_constants)

    s = sub.add_parser("simulate", help="simulate one path and write it as CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--replication", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate from a path CSV")
    e.add_argument("--path", required=True)
    e.add_argument("--method", choices=["cof", "corr", "vol-known", "vol-unknown"], required=True)
    e.add_argument("--p", type=float, default=2.0, help="power for cof, or power variation for vol-*")
    e.add_argument("--spec", help="functional as JSON, overrides --p for vol-*")
    e.add_argument("--alpha", type=float)
    e.add_argument("--kappa", type=float)
    e.add_argument("--alpha-method", choices=["cof", "corr"], default="cof")
    e.add_argument("--p0", type=float, default=2.0)
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("--null", type=float, help="reference value for the studentized field")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("mc", help="run a Monte Carlo experiment")
    m.add_argument("--config", required=True)
    m.add_argument("--out")
    m.add_argument("--csv")
    m.add_argument("--workers", type=int)
    m.add_argument("--include-runtime", action="store_true")
    m.set_defaults(func=cmd_mc)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except _Fail as f:
        print(f"error: {f}", file=sys.stderr)
        return f.code


if __name__ == "__main__":
    sys.exit(main())
