"""Run one config under NCOTA-DGD and each baseline and print the final
normalized error of every scheme.

    python scripts/compare_algorithms.py scripts/configs/linreg_small.ini --out-dir results
"""

import argparse
import logging
from pathlib import Path

from ncota import harness
from ncota.config import load_config

ALGORITHMS = ("ncota", "qdgd-lpq", "qdgd-vq", "local")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    ap.add_argument("--subcarriers-per-node", type=int,
                    help="OFDMA block size for the quantized baselines")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    base = load_config(args.config)
    if args.subcarriers_per_node is not None:
        base = base.set("algorithm", "subcarriers_per_node", args.subcarriers_per_node)
    print(f"{'algorithm':<10} {'k':>8} {'time_s':>10} {'norm_err':>12}")
    for name in ALGORITHMS:
        cfg = base.set("run", "algorithm", name)
        _, agg = harness.run_experiment(cfg, args.out_dir / f"{args.config.stem}.{name}.csv")
        k, t, err = agg[-1][0], agg[-1][1], agg[-1][2]
        print(f"{name:<10} {k:>8d} {t:>10.4g} {err:>12.4g}")


if __name__ == "__main__":
    main()
