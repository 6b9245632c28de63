"""Convergence-rate study on the common-minimizer linear regression instance.

Prints the median normalized-error ratio between the last iteration and
k=100 and the log-log slope of the trial-mean error over [1e4, K], then
writes the per-iteration medians to CSV.

    python scripts/rate_study.py --trials 10 --iterations 200000 --out rate.csv
"""

import argparse
import time

import numpy as np

from ncota import verify
from ncota.harness import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--iterations", type=int, default=200_000)
    ap.add_argument("--out", default="rate.csv")
    args = ap.parse_args()
    t0 = time.perf_counter()
    ks, errs, _ = verify.rate_trajectories(args.trials, args.iterations)
    ratio, slope = verify.rate_statistics(ks, errs)
    print(f"{args.trials} trials, K={args.iterations}: {time.perf_counter() - t0:.0f} s")
    print(f"median error ratio K/100: {ratio:.4g}")
    print(f"log-log slope over [1e4, K]: {slope:.3f}")
    write_csv(args.out, ("k", "median_norm_err", "mean_norm_err"),
              [(int(k), float(m), float(a)) for k, m, a in
               zip(ks, np.median(errs, axis=0), errs.mean(axis=0))])


if __name__ == "__main__":
    main()
