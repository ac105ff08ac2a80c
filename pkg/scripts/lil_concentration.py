"""Realized-minus-expected loss of the randomized aggregator, normalized by sqrt(2 L^2 n ln ln n).

    python scripts/lil_concentration.py [--seeds 20] [--horizon 100000]
"""

import argparse

from waa.experiments import lil_config
from waa.runner import run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--horizon", type=int, default=100_000)
    ap.add_argument("--threshold", type=float, default=1.2)
    args = ap.parse_args(argv)
    stats = []
    for seed in range(args.seeds):
        r = run(lil_config(seed, args.horizon), write=False)
        s, comp = r.summary["lil_statistic"], r.checks["lil"].get("competitor_max")
        stats.append(s)
        print(f"seed {seed:3d}  aggregator {s:.4f}  worst competitor {comp:.4f}")
    below = sum(s <= args.threshold for s in stats)
    print(f"\n{below}/{len(stats)} seeds at or below {args.threshold}")


if __name__ == "__main__":
    main()
