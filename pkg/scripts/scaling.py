"""Time dense and low-rank EP over an (n, p) grid and report log-log slopes.

    python3 scripts/scaling.py [--repeats 3] [--n 50 100 200 400] [--p 1 2 4 8]
"""

import argparse
import json

from dynprobit import EpConfig
from dynprobit.diagnostics import scaling_benchmark


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--p", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = [(n, 2) for n in args.n] + [(100, p) for p in args.p if p != 2]
    report = scaling_benchmark(grid, EpConfig(), args.seed, args.repeats)
    print(f"{'n':>5} {'p':>3} {'dense':>10} {'lowrank':>10} {'ratio':>7}")
    for c in report.cells:
        print(f"{c.n:>5} {c.p:>3} {c.dense_total:>10.4f} {c.lowrank_total:>10.4f} "
              f"{c.dense_total / c.lowrank_total:>7.2f}")
    print(json.dumps(report.slopes, indent=2))


if __name__ == "__main__":
    main()
