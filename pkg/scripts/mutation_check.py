"""Show that freezing beta_n at 0.5 breaks the regret bound on the adversarial runs.

    python scripts/mutation_check.py [--horizon 10000]
"""

import argparse

from waa.experiments import MATRIX_POOL_SIZES, MATRIX_SEEDS, compact_config
from waa.runner import run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=10_000)
    args = ap.parse_args(argv)
    for mutation in (None, "frozen_beta"):
        print(f"beta schedule: {'1/sqrt(n)' if mutation is None else 'frozen at 0.5'}")
        for loss in ("absolute_norm", "squared_norm"):
            for k in MATRIX_POOL_SIZES:
                res = [run(compact_config(loss, "adversarial_worstcase", k, s, args.horizon, mutation=mutation),
                           write=False) for s in MATRIX_SEEDS]
                worst = min(r.checks["lemma5"]["margin"] for r in res)
                regret = max(r.summary["cum_own_loss"] - r.summary["best_expert_loss"] for r in res)
                print(f"  {loss:14s} K={k:2d}  regret {regret:8.2f}  worst bound margin {worst:9.2f}"
                      f"{'  FAIL' if worst < 0 else ''}")


if __name__ == "__main__":
    main()
