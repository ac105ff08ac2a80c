"""Average regret against the best expert at growing horizons on an AR(1) sequence.

    python scripts/regret_trend.py [--seeds 5]
"""

import argparse

import numpy as np

from waa.experiments import TREND_CHECKPOINTS, ar1_trend_config, regret_checkpoints
from waa.runner import run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args(argv)
    for loss in ("squared_norm", "absolute_norm"):
        table = np.array([[reg for _, reg, _ in regret_checkpoints(run(ar1_trend_config(loss, s), write=False))]
                          for s in range(args.seeds)])
        bound = [b for _, _, b in regret_checkpoints(run(ar1_trend_config(loss, 0), write=False))]
        print(loss)
        print(f"  {'N':>6s} {'mean':>9s} {'min':>9s} {'max':>9s} {'bound':>9s}")
        for j, n in enumerate(TREND_CHECKPOINTS):
            col = table[:, j]
            print(f"  {n:6d} {col.mean():9.4f} {col.min():9.4f} {col.max():9.4f} {bound[j]:9.4f}")


if __name__ == "__main__":
    main()
