"""Train every benchmark arm on the ten benchmark seeds and tabulate.

    python scripts/run_benchmark.py --out results/benchmark.json
"""

import argparse
import json
from pathlib import Path

import numpy as np

from geotransfer.benchmark import ARMS, BENCHMARK_SEEDS, run_arm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--arms", nargs="+", default=list(ARMS), choices=list(ARMS))
    ap.add_argument("--seeds", type=int, nargs="+", default=list(BENCHMARK_SEEDS))
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    results = {}
    for arm in args.arms:
        results[arm] = [run_arm(s, arm) for s in args.seeds]
        acc = np.array([r["target_acc"] for r in results[arm]])
        inter = np.array([r["interclass_mean_angle_deg"] for r in results[arm]])
        cross = np.array([r["crossdomain_mean_angle_deg"] for r in results[arm]])
        print(f"{arm:12s} target acc {acc.mean():.3f} +/- {acc.std():.3f}   "
              f"inter {np.nanmean(inter):5.1f} deg   cross {np.nanmean(cross):4.1f} deg")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
