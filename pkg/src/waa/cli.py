"""Command line: ``waa run|verify|replay``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import MODES, ConfigError, load_config
from .runner import output_dir, replay_trace, run, verify_suite

log = logging.getLogger("waa")


def _apply_overrides(cfg, args):
    kw = {}
    if args.seed is not None:
        kw["rng_seed"] = args.seed
        kw["environment"] = type(cfg.environment)(cfg.environment.kind, dict(cfg.environment.params), args.seed)
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    if args.mode is not None:
        kw["mode"] = args.mode
    return cfg.override(**kw) if kw else cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    res = run(cfg, out_dir=Path(args.out) if args.out else None)
    s = res.summary
    print(f"mode={s['mode']} path={s['path']} N={s['horizon']} K={s['pool_size']} "
          f"cum_loss={s['cum_own_loss']:.6g} regret/N={s['average_regret_vs_best']:.6g} "
          f"restarts={s['restart_count']}")
    for name, c in sorted(res.checks.items()):
        print(f"  {name:20s} {'ok' if c['holds'] else 'FAIL'}  margin={c['margin']:.6g}")
    if not res.ok:
        sys.stdout.flush()
        print(f"invariant violated: {', '.join(res.failures)}", file=sys.stderr)
        return 1
    return 0


def _cmd_verify(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    report = verify_suite(cfg)
    for name, p in sorted(report["properties"].items()):
        print(f"{name:20s} {'PASS' if p['holds'] else 'FAIL'}  worst_margin={p['worst_margin']:.6g}  runs={p['runs']}")
    d = output_dir(Path(args.out) if args.out else None)
    d.mkdir(parents=True, exist_ok=True)
    (d / "verify.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if not report["ok"]:
        bad = sorted(n for n, p in report["properties"].items() if not p["holds"])
        sys.stdout.flush()
        print(f"invariant violated: {', '.join(bad)}", file=sys.stderr)
        return 1
    return 0


def _cmd_replay(args) -> int:
    out = replay_trace(Path(args.trace).read_text())
    for name, ok in sorted(out["checks"].items()):
        print(f"{name:20s} {'ok' if ok else 'FAIL'}")
    if not out["ok"]:
        sys.stdout.flush()
        print(f"invariant violated: {', '.join(out['failures'])}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="waa", description="Weak aggregating algorithm experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("run", _cmd_run), ("verify", _cmd_verify)):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--out", help="output directory (default: $WAA_OUTPUT_DIR or .)")
        p.set_defaults(func=fn)
    p = sub.add_parser("replay")
    p.add_argument("trace")
    p.set_defaults(func=_cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
