"""Restarts of the removal meta-strategy against escaping observation sequences.

    python scripts/removal_ladder.py [--cap 50] [--r0 2] [--factor 3]
"""

import argparse

from waa.experiments import escaping_config
from waa.runner import run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cap", type=float, default=50.0, help="0 for an unbounded sequence")
    ap.add_argument("--r0", type=float, default=2.0)
    ap.add_argument("--factor", type=float, default=3.0)
    ap.add_argument("--horizon", type=int, default=300)
    ap.add_argument("--loss", default="absolute_norm", choices=["absolute_norm", "squared_norm"])
    args = ap.parse_args(argv)
    cfg = escaping_config(factor=args.factor, cap=args.cap or None, r0=args.r0, horizon=args.horizon, loss=args.loss)
    r = run(cfg, write=False)
    s = r.summary
    print(f"restarts {s['restart_count']} at rounds {s['restart_rounds']}, final stage {s['final_stage']} "
          f"(radius {args.r0 * 2 ** s['final_stage']:g})")
    t = r.trace
    for n in [0] + [k for k in s["restart_rounds"]]:
        if n < t.horizon:
            print(f"  from round {n + 1:4d}: stage {int(t.stage[n])}  loss bound {t.loss_bound[n]:.4g}")
    for name, c in sorted(r.checks.items()):
        print(f"  {name:20s} {'ok' if c['holds'] else 'FAIL'}  margin={c['margin']:.4g}")


if __name__ == "__main__":
    main()
