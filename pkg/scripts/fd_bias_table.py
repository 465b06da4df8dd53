"""Finite-difference increment variance relative to tau_n^2 over a few grids.

Prints the analytic per-mode ratio and, optionally, an empirical check from
simulated paths. Usage: python scripts/fd_bias_table.py [--empirical N]
"""

import argparse
import math

import numpy as np

from spde_hfvol import constants as K
from spde_hfvol.model import ModelParams, SamplingScheme
from spde_hfvol.simulate import (
    Boundary,
    ConstantVol,
    FdGridConfig,
    SeedSpec,
    balanced_grid,
    fd_increment_variance_ratio,
    simulate_fd,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--empirical", type=int, default=0, help="replications per row (0 = analytic only)")
    ap.add_argument("--delta-log2", type=int, default=-10)
    args = ap.parse_args()

    params = ModelParams.white()
    delta = 2.0**args.delta_log2
    print(f"{'grid':<34}{'mesh':>8}{'analytic':>11}{'empirical':>12}")
    rows = []
    for sub in (8, 16, 32):
        dt = delta / sub
        for mesh in (0.5, 0.25):
            dx = math.sqrt(params.kappa * dt / mesh)
            n = max(2, round(6.0 / dx / 2) * 2)
            rows.append((f"periodic sub={sub} mesh={mesh}", FdGridConfig(dt, 6.0 / n, 6.0, Boundary.PERIODIC, burn_in=0.5)))
        rows.append((f"balanced sub={sub}", balanced_grid(params, delta, substeps=sub, burn_in=0.5)))
    for label, grid in rows:
        ratio = fd_increment_variance_ratio(params, delta, grid)
        emp = ""
        if args.empirical:
            site = round(3.0 / grid.dx) * grid.dx
            scheme = SamplingScheme(delta, 0.25, (site,))
            tau2 = K.tau_sq_exact(params, delta)
            vals = [
                np.mean(simulate_fd(params, scheme, ConstantVol(1.0), grid, SeedSpec(11, i)).increments() ** 2) / tau2
                for i in range(args.empirical)
            ]
            emp = f"{np.mean(vals):.4f}"
        mesh = params.kappa * grid.dt / grid.dx**2
        print(f"{label:<34}{mesh:>8.4f}{ratio:>11.4f}{emp:>12}")


if __name__ == "__main__":
    main()
