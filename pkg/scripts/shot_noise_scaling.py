"""Mean delta-chi versus shot count with no coupling and no SPAM.

Fits the ansatz mean = eta + eta_shots/sqrt(N) and, for comparison, a model
with an extra log(N)/sqrt(N) term. Prints a table and optionally writes CSV.
"""

import argparse
import csv
import sys

import numpy as np

from idleleak.config import ExperimentConfig
from idleleak.protocol import run_campaign
from idleleak.stats import bootstrap_fit, box_filter, mean_and_sem, weighted_r2


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shots", type=int, nargs="+", default=[1000, 2000, 4000, 8000])
    ap.add_argument("--samples", type=int, default=200, help="samples per shot count")
    ap.add_argument("--seed", type=int, default=404)
    ap.add_argument("--p-readout", type=float, default=0.0)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.from_dict({
        "master_seed": args.seed,
        "hamiltonian": {"J_range": [0.0, 0.0]},
        "spam": {"p_prep": 0.0, "p_readout": args.p_readout},
        "shot_grid": args.shots,
        "samples_per_stratum": {"P": {str(n): args.samples for n in args.shots}},
    })  # fmt: skip
    samples = run_campaign(cfg.campaign(), cfg.master_seed,
                           progress=lambda k, n: print(f"\r{k}/{n}", end="", file=sys.stderr))
    print(file=sys.stderr)
    points = []
    for n in args.shots:
        kept, _, _ = box_filter([s.delta_chi for s in samples if s.n_shots == n], 4.0)
        points.append((n, *mean_and_sem(kept)))

    fit = bootstrap_fit(points, 1000, np.random.default_rng(args.seed))
    print(f"{'N_S':>7} {'mean':>9} {'sem':>9} {'mean*sqrt(N)':>13}")
    for n, m, s in points:
        print(f"{n:>7} {m:9.5f} {s:9.5f} {m * np.sqrt(n):13.4f}")
    print(f"ansatz: eta = {fit.eta:.5f} +/- {fit.eta_stderr:.5f}, eta_shots = {fit.eta_shots:.4f}, "
          f"weighted R^2 = {weighted_r2(points, fit.eta, fit.eta_shots):.5f}")

    arr = np.array(points)
    x = 1 / np.sqrt(arr[:, 0])
    if len(points) >= 3:
        # weighted least squares in the basis {1, 1/sqrt(N), log(N)/sqrt(N)}
        X = np.column_stack([np.ones_like(x), x, np.log(arr[:, 0]) * x])
        w = 1 / arr[:, 2]
        coef, *_ = np.linalg.lstsq(X * w[:, None], arr[:, 1] * w, rcond=None)
        cov = np.linalg.inv((X * w[:, None] ** 2).T @ X)
        print(f"log-corrected: eta = {coef[0]:.5f} +/- {np.sqrt(cov[0, 0]):.5f}, "
              f"a = {coef[1]:.4f}, b(log) = {coef[2]:.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["n_shots", "mean", "sem"])
            wr.writerows(points)


if __name__ == "__main__":
    main()
