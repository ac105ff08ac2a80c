"""Run the loss x environment x pool size x seed matrix and tabulate worst margins.

    python scripts/run_matrix.py [--horizon 10000] [--mutation frozen_beta] [--csv out.csv]
"""

import argparse
import csv
import sys
import time

from waa.experiments import run_matrix


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=10_000)
    ap.add_argument("--mutation", choices=["frozen_beta"])
    ap.add_argument("--csv", help="write one row per run")
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    results = run_matrix(args.horizon, args.mutation)
    elapsed = time.perf_counter() - t0

    rows = []
    for r in results:
        c = r.config
        rows.append({
            "loss": c.loss, "env": c.environment.kind, "k": c.pool.k_max, "seed": c.environment.seed,
            "regret_per_round": r.summary["average_regret_vs_best"],
            "bound_margin": r.checks["lemma5"]["margin"],
            "identity_margin": r.checks["lemma9"]["margin"],
            "ok": r.ok,
        })
    print(f"{'loss':14s} {'env':22s} {'k':>3s} {'seed':>4s} {'regret/N':>10s} {'bound':>10s} {'identity':>10s}")
    for row in rows:
        print(f"{row['loss']:14s} {row['env']:22s} {row['k']:3d} {row['seed']:4d} {row['regret_per_round']:10.4g} "
              f"{row['bound_margin']:10.4g} {row['identity_margin']:10.3g}{'' if row['ok'] else '  FAIL'}")
    failed = sum(not row["ok"] for row in rows)
    print(f"\n{len(rows)} runs, {failed} with a violated invariant, {elapsed:.1f}s")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
