"""Run every bundled Monte Carlo config and print a one-line summary each.

Usage: python scripts/run_acceptance.py [--workers K] [--out DIR] [names ...]
"""

import argparse
from pathlib import Path

from spde_hfvol.montecarlo import load_config, run_experiment

ACC = Path(__file__).resolve().parents[1] / "acceptance"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", type=Path, help="directory for JSON reports")
    args = ap.parse_args()
    names = args.names or sorted(p.stem for p in ACC.glob("*.json"))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for name in names:
        rep = run_experiment(load_config((ACC / f"{name}.json").read_text()), args.workers)
        s = rep.summary
        cov = "-" if s.get("coverage") is None else f"{s['coverage']:.3f}"
        ks = "-" if s.get("ks_pvalue") is None else f"{s['ks_pvalue']:.3g}"
        status = "pass" if rep.passed else "FAIL"
        print(f"{name:<20} {status}  mean={s['mean']:.5f} rmse={s['rmse']:.5f} cov={cov} ks_p={ks} "
              f"t={rep.runtime_seconds:.0f}s")
        if args.out:
            (args.out / f"{name}.json").write_text(rep.to_json(include_runtime=True))


if __name__ == "__main__":
    main()
