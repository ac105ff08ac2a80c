"""Experiment runner: executes a RunConfig, checks every inequality, writes traces."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .core import loss_bound_on
from .engine import (
    TOL,
    PointSpace,
    WaaState,
    frozen_beta_rate,
    logsumexp,
    run_adaptive,
    run_batch,
    sqrt_rate,
)
from .environments import Environment
from .experts import ExpertPool, geometric_priors, project_onto
from .randomized import (
    LIL_MIN_ROUNDS,
    MeasureBatch,
    MeasurePool,
    MeasureSpace,
    RandomizedStrategy,
    RngState,
    sample_rows,
    uniforms,
)
from .removal import RemovalMeta, clip_measure_batch, clip_points

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "WAA_OUTPUT_DIR"

TRACE_COLUMNS = (
    "n",
    "beta",
    "own_loss",
    "cum_own_loss",
    "best_expert_loss",
    "lemma9_lhs",
    "lemma9_rhs",
    "lemma5_excess_best",
    "lemma5_bound_best",
    "inner_n",
    "stage",
    "stage_change",
    "mixture_loss",
    "loss_bound",
    "sampled_loss",
)


@dataclass
class Trace:
    """Per-round arrays of one run; rows are rounds 1..N."""

    inner_n: np.ndarray
    beta: np.ndarray
    weights: np.ndarray
    expert_losses: np.ndarray
    cum_expert: np.ndarray
    own: np.ndarray
    inner_cum_own: np.ndarray
    mixture: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    loss_bound: np.ndarray
    stage: np.ndarray
    stage_change: np.ndarray
    priors: np.ndarray
    sampled: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.own.shape[0]

    @property
    def cum_own(self) -> np.ndarray:
        return np.cumsum(self.own)

    def lemma5(self) -> tuple[np.ndarray, np.ndarray]:
        """(excess, bound), each (N, K), against the experts of the current stage."""
        excess = self.inner_cum_own[:, None] - self.cum_expert
        lb = self.loss_bound[:, None]
        with np.errstate(over="ignore"):
            growth = np.where(lb < 700.0, lb**2 * np.exp(np.minimum(lb, 700.0)), np.inf)
        bound = (growth - np.log(self.priors)[None, :]) * np.sqrt(self.inner_n)[:, None]
        return excess, bound


@dataclass
class RunResult:
    config: RunConfig
    trace: Trace
    summary: dict
    checks: dict
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _rate(cfg: RunConfig):
    return frozen_beta_rate if cfg.mutation == "frozen_beta" else sqrt_rate


def build_pool(cfg: RunConfig):
    strategies = cfg.pool.strategies(cfg.dims)
    priors = geometric_priors(len(strategies))
    if cfg.randomized:
        spreads = cfg.pool.spreads or [0.0]
        rs = [RandomizedStrategy.spread(s, float(spreads[k % len(spreads)])) for k, s in enumerate(strategies)]
        pool = MeasurePool(rs, priors)
        if cfg.gamma_region is not None and not cfg.removal:
            region = cfg.gamma_region
            pool = pool.with_transform(lambda b: MeasureBatch(project_onto(region, b.points), b.masses))
        return pool
    pool = ExpertPool(strategies, priors)
    if cfg.gamma_region is not None and not cfg.removal:
        region = cfg.gamma_region
        pool = pool.with_transform(lambda g: project_onto(region, g))
    return pool


def _space(cfg: RunConfig, loss):
    return MeasureSpace(loss) if cfg.randomized else PointSpace(loss)


# -- compact modes ----------------------------------------------------------


def stack_predictions(preds: list):
    """Stack per-round expert predictions into one (N, K, ...) batch."""
    if isinstance(preds[0], MeasureBatch):
        return MeasureBatch(np.stack([b.points for b in preds]), np.stack([b.masses for b in preds]))
    return np.stack(preds)


def draw_outcomes(cfg: RunConfig, weights: np.ndarray, preds: MeasureBatch, ys: np.ndarray, loss):
    """Realized losses of the sampled aggregator and of each sampled competitor.

    Round n uses uniform n-1 of stream 0 (aggregator) and of stream k+1
    (competitor k), mapped through the inverse CDF of the lexicographically
    ordered support.
    """
    n = ys.shape[0]
    mixture = MeasureSpace(loss).mix(weights, preds)
    u, _ = uniforms(RngState(cfg.rng_seed, 0), n)
    sampled = loss.batch(sample_rows(mixture.points, mixture.masses, u), ys)
    comp = np.empty(weights.shape)
    for k in range(weights.shape[1]):
        uk, _ = uniforms(RngState(cfg.rng_seed, k + 1), n)
        comp[:, k] = loss.batch(sample_rows(preds.points[:, k], preds.masses[:, k], uk), ys)
    return sampled, comp


def _trace_from_batch(b, bound: float) -> Trace:
    n_rounds = b.horizon
    return Trace(
        inner_n=np.arange(1, n_rounds + 1),
        beta=b.beta,
        weights=b.weights,
        expert_losses=b.expert_losses,
        cum_expert=b.cum_expert,
        own=b.own_losses,
        inner_cum_own=b.cum_own,
        mixture=b.mixture_losses,
        lhs=b.lemma9_lhs,
        rhs=b.lemma9_rhs,
        loss_bound=np.full(n_rounds, bound),
        stage=np.ones(n_rounds, dtype=int),
        stage_change=np.zeros(n_rounds, dtype=int),
        priors=b.priors,
    )


def _run_compact(cfg: RunConfig):
    loss = cfg.loss_function()
    space = _space(cfg, loss)
    pool = build_pool(cfg)
    bound = loss_bound_on(loss, cfg.gamma_region, cfg.obs_region)
    env = Environment(cfg.environment, cfg.d_x, cfg.d_y, cfg.obs_region, space.loss)
    rate = _rate(cfg)
    n_rounds = cfg.horizon
    extra = {}

    if env.oblivious and cfg.fast_path:
        extra["path"] = "batch"
        xs, ys = env.generate(n_rounds)
        preds = pool.predict_batch(xs, ys)
        trace = _trace_from_batch(run_batch(pool, space, xs, ys, rate, expert_preds=preds), bound)
    elif cfg.fast_path:
        extra["path"] = "adaptive"
        xs = np.stack([env.signal(n) for n in range(1, n_rounds + 1)])
        b = run_adaptive(pool, space, xs, env.observation, rate)
        ys = b.extra["observations"]
        preds = stack_predictions(b.extra["expert_predictions"]) if cfg.randomized else None
        trace = _trace_from_batch(b, bound)
    else:
        extra["path"] = "sequential"
        state = WaaState(pool, loss, space, learning_rate=rate, loss_bound=bound)
        rec = _Recorder()
        for n in range(1, n_rounds + 1):
            gamma, partial = state.begin_round(env.signal(n))
            report = state.end_round(env.observation(n, gamma))
            rec.add(state, report, bound, 1, 0)
        trace = rec.finish(pool.priors)
        ys, preds = rec.observations(), rec.predictions()
    if cfg.randomized:
        trace.sampled, extra["competitor_sampled"] = draw_outcomes(cfg, trace.weights, preds, ys, loss)
    return trace, extra, pool, loss


class _Recorder:
    def __init__(self):
        self.rows = {
            name: []
            for name in (
                "inner_n", "beta", "weights", "expert_losses", "cum_expert", "own",
                "inner_cum_own", "mixture", "lhs", "rhs", "loss_bound", "stage", "stage_change",
            )
        }
        self.preds: list = []
        self.ys: list = []

    def observations(self) -> np.ndarray:
        return np.stack(self.ys)

    def predictions(self):
        return stack_predictions(self.preds)

    def add(self, state: WaaState, report, bound: float, stage: int, change: int) -> None:
        r = self.rows
        self.preds.append(report.expert_predictions)
        self.ys.append(state.last_round[1])
        r["inner_n"].append(report.n)
        r["beta"].append(report.beta)
        r["weights"].append(report.normalized_weights)
        r["expert_losses"].append(report.per_expert_losses)
        r["cum_expert"].append(state.cumulative_losses)
        r["own"].append(report.own_loss)
        r["inner_cum_own"].append(report.cum_own_loss)
        r["mixture"].append(report.mixture_loss)
        r["lhs"].append(report.lemma9_lhs)
        r["rhs"].append(report.lemma9_rhs)
        r["loss_bound"].append(bound)
        r["stage"].append(stage)
        r["stage_change"].append(change)

    def finish(self, priors) -> Trace:
        r = {k: np.array(v) for k, v in self.rows.items()}
        return Trace(priors=priors, **r)


# -- removal modes ----------------------------------------------------------


def _run_removal(cfg: RunConfig):
    loss = cfg.loss_function()
    space = _space(cfg, loss)
    pool = build_pool(cfg)
    meta = RemovalMeta(
        pool, loss, cfg.r0, cfg.d_x, space=space, learning_rate=_rate(cfg),
        replay_on_restart=cfg.replay_on_restart,
    )
    env = Environment(cfg.environment, cfg.d_x, cfg.d_y, cfg.obs_region, space.loss)
    rec = _Recorder()
    raw_samples = []
    for n in range(1, cfg.horizon + 1):
        x = env.signal(n)
        gamma = meta.begin_round(x)
        y = env.observation(n, gamma)
        stage, bound, inner = meta.stage, meta.stages[-1].loss_bound, meta.inner
        report, restarted = meta.end_round(y)
        rec.add(inner, report, bound, stage, int(restarted))
        if len(raw_samples) < 256 and (n % max(1, cfg.horizon // 256) == 0):
            raw_samples.append((inner.last_round[0], stage))
    trace = rec.finish(pool.priors)
    extra = {
        "path": "sequential",
        "restart_count": meta.escape_count,
        "final_stage": meta.stage,
        "restart_rounds": list(meta.restart_rounds),
        "meta": meta,
        "raw_samples": raw_samples,
    }
    if cfg.randomized:
        trace.sampled, extra["competitor_sampled"] = draw_outcomes(
            cfg, trace.weights, rec.predictions(), rec.observations(), loss)
    return trace, extra, pool, loss


def clip_dominance_margin(spec, raw, ys: np.ndarray, loss, randomized: bool = False) -> float:
    """min over predictions and ys of loss(raw) - loss(clipped); >= -1e-9 means dominance."""
    worst = math.inf
    if randomized:
        clipped = clip_measure_batch(spec, raw)
        for y in ys:
            before = np.sum(raw.masses * loss.batch(raw.points, y), axis=-1)
            after = np.sum(clipped.masses * loss.batch(clipped.points, y), axis=-1)
            worst = min(worst, float(np.min(before - after)))
        return worst
    clipped = clip_points(spec, raw)
    for y in ys:
        worst = min(worst, float(np.min(loss.batch(raw, y) - loss.batch(clipped, y))))
    return worst


def _removal_clip_margin(cfg: RunConfig, extra: dict, pool, loss) -> float:
    meta = extra["meta"]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.rng_seed, 0xC11])))
    worst = math.inf
    by_stage = {s.stage: s for s in meta.stages}
    for h, stage in extra["raw_samples"]:
        spec = by_stage[stage].spec
        raw = pool.predict_all(h)
        radius = cfg.r0 * 2.0**stage * math.sqrt(cfg.d_y)
        dirs = rng.standard_normal((8, cfg.d_y))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        ys = dirs * (radius * rng.uniform(0, 1, (8, 1)))
        worst = min(worst, clip_dominance_margin(spec, raw, ys, loss, cfg.randomized))
    return worst


# -- checks -----------------------------------------------------------------


def _margin(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """rhs + tol*max(1,|rhs|) - lhs; nonnegative where lhs <= rhs holds."""
    return rhs + TOL * np.maximum(1.0, np.abs(rhs)) - lhs


def evaluate_checks(cfg: RunConfig, trace: Trace, extra: dict, pool, loss) -> dict:
    out = {}
    enabled = set(cfg.checks)
    if "normalization" in enabled:
        err = float(np.max(np.abs(trace.weights.sum(axis=1) - 1.0)))
        out["normalization"] = {"holds": err <= 1e-12, "margin": 1e-12 - err, "max_error": err}
    if "countable_convexity" in enabled:
        m = trace.mixture + TOL - trace.own
        out["countable_convexity"] = {"holds": bool(np.all(m >= 0)), "margin": float(np.min(m))}
    if "lemma9" in enabled:
        valid = np.isfinite(trace.rhs)
        m = _margin(trace.lhs[valid], trace.rhs[valid])
        worst = float(np.min(m)) if m.size else math.inf
        out["lemma9"] = {"holds": bool(np.all(m >= 0)), "margin": worst, "rounds_checked": int(valid.sum())}
    if "lemma5" in enabled:
        excess, bound = trace.lemma5()
        m = _margin(excess, bound)
        worst_round, worst_k = np.unravel_index(np.argmin(m), m.shape)
        out["lemma5"] = {
            "holds": bool(np.all(m >= 0)),
            "margin": float(m[worst_round, worst_k]),
            "worst_round": int(worst_round) + 1,
            "worst_expert": int(worst_k),
        }
    if "mean_comparison" in enabled:
        log_q = np.log(trace.priors)
        n = trace.inner_n.astype(float)
        here = -logsumexp(log_q[None, :] - trace.cum_expert / np.sqrt(n)[:, None]) * np.sqrt(n)
        nxt = -logsumexp(log_q[None, :] - trace.cum_expert / np.sqrt(n + 1)[:, None]) * np.sqrt(n + 1)
        m = nxt + TOL - here
        out["mean_comparison"] = {"holds": bool(np.all(m >= 0)), "margin": float(np.min(m))}
    if "lil" in enabled and trace.sampled is not None and trace.horizon >= LIL_MIN_ROUNDS:
        stat = _lil(trace.sampled - trace.own, trace.loss_bound.max())
        out["lil"] = {"holds": stat <= cfg.lil_threshold, "margin": cfg.lil_threshold - stat, "statistic": stat}
        comp = extra.get("competitor_sampled")
        if comp is not None:
            stats = [_lil(comp[:, k] - trace.expert_losses[:, k], trace.loss_bound.max()) for k in range(comp.shape[1])]
            out["lil"]["competitor_max"] = max(stats)
    if "clip_dominance" in enabled and cfg.removal and extra.get("raw_samples"):
        m = _removal_clip_margin(cfg, extra, pool, loss) + TOL
        out["clip_dominance"] = {"holds": m >= 0, "margin": m}
    for v in out.values():
        v["holds"] = bool(v["holds"])
    return out


def _lil(increments: np.ndarray, loss_bound: float) -> float:
    n = increments.shape[0]
    s = float(np.sum(increments))
    return abs(s) / math.sqrt(2.0 * loss_bound**2 * n * math.log(math.log(n)))


# -- trace I/O --------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trace_rows(trace: Trace) -> list[list[str]]:
    n_rounds = trace.horizon
    cum_own = trace.cum_own
    best_idx = np.argmin(trace.cum_expert, axis=1)
    rows_idx = np.arange(n_rounds)
    best = trace.cum_expert[rows_idx, best_idx]
    _, bound = trace.lemma5()
    bound_best = bound[rows_idx, best_idx]
    excess_best = trace.inner_cum_own - best
    out = []
    for i in range(n_rounds):
        out.append(
            [
                _fmt(i + 1),
                _fmt(trace.beta[i]),
                _fmt(trace.own[i]),
                _fmt(cum_own[i]),
                _fmt(best[i]),
                _fmt(trace.lhs[i]),
                _fmt(trace.rhs[i]),
                _fmt(excess_best[i]),
                _fmt(bound_best[i]),
                _fmt(trace.inner_n[i]),
                _fmt(trace.stage[i]),
                _fmt(trace.stage_change[i]),
                _fmt(trace.mixture[i]),
                _fmt(trace.loss_bound[i]),
                _fmt(None if trace.sampled is None else trace.sampled[i]),
            ]
        )
    return out


def trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(trace))
    return buf.getvalue()


def output_dir(default: Optional[Path] = None) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, default or "."))


# -- entry points -----------------------------------------------------------


def run(cfg: RunConfig, out_dir: Optional[Path] = None, write: bool = True) -> RunResult:
    """Execute the protocol for cfg.horizon rounds and check every enabled inequality."""
    if cfg.removal:
        trace, extra, pool, loss = _run_removal(cfg)
    else:
        trace, extra, pool, loss = _run_compact(cfg)
    checks = evaluate_checks(cfg, trace, extra, pool, loss)
    failures = sorted(name for name, c in checks.items() if not c["holds"])
    n_rounds = trace.horizon
    final_best = int(np.argmin(trace.cum_expert[-1]))
    inner_rounds = int(trace.inner_n[-1])
    summary = {
        "mode": cfg.mode,
        "path": extra["path"],
        "horizon": n_rounds,
        "pool_size": int(trace.priors.shape[0]),
        "mutation": cfg.mutation,
        "cum_own_loss": float(trace.cum_own[-1]),
        "best_expert": final_best,
        "best_expert_loss": float(trace.cum_expert[-1, final_best]),
        "average_regret_vs_best": float(
            (trace.inner_cum_own[-1] - trace.cum_expert[-1, final_best]) / inner_rounds
        ),
        "loss_bound": float(trace.loss_bound[-1]),
        "restart_count": int(extra.get("restart_count", 0)),
        "final_stage": int(extra.get("final_stage", 1)),
        "checks": checks,
        "failures": failures,
        "ok": not failures,
    }
    if "lil" in checks:
        summary["lil_statistic"] = checks["lil"]["statistic"]
    if "restart_rounds" in extra:
        summary["restart_rounds"] = extra["restart_rounds"]
    result = RunResult(cfg, trace, summary, checks, failures)
    if write:
        write_outputs(result, out_dir)
    return result


def write_outputs(result: RunResult, out_dir: Optional[Path] = None) -> None:
    cfg = result.config
    d = output_dir(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    if cfg.trace:
        (d / cfg.trace).write_text(trace_csv(result.trace))
    if cfg.summary:
        (d / cfg.summary).write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")


VERIFY_SEEDS = (11, 12, 13)


def verify_suite(cfg: RunConfig, seeds=VERIFY_SEEDS, modes=None, horizon_cap: int = 2000) -> dict:
    """Run the invariant battery over a fixed seed x mode matrix; failures are reported, not raised."""
    if modes is None:
        compact = cfg.gamma_region is not None and cfg.obs_region is not None
        modes = ("deterministic", "randomized", "removal", "removal-randomized") if compact else (
            "removal", "removal-randomized")
    report: dict = {}
    runs = []
    for mode in modes:
        for seed in seeds:
            env = type(cfg.environment)(cfg.environment.kind, dict(cfg.environment.params), seed)
            c = cfg.override(mode=mode, environment=env, rng_seed=seed, horizon=min(cfg.horizon, horizon_cap))
            res = run(c, write=False)
            runs.append({"mode": mode, "seed": seed, "ok": res.ok, "failures": res.failures})
            for name, chk in res.checks.items():
                entry = report.setdefault(name, {"holds": True, "worst_margin": math.inf, "runs": 0})
                entry["holds"] = entry["holds"] and chk["holds"]
                entry["worst_margin"] = min(entry["worst_margin"], chk["margin"])
                entry["runs"] += 1
    return {"properties": report, "runs": runs, "ok": all(p["holds"] for p in report.values())}


def replay_trace(text: str) -> dict:
    """Recompute every check a trace file supports from its columns alone."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        return {"ok": False, "failures": ["empty_trace"], "checks": {}}
    col = lambda name: np.array([float(r[name]) if r[name] != "" else math.nan for r in rows])
    own, cum = col("own_loss"), col("cum_own_loss")
    inner_n = col("inner_n")
    checks = {}
    recomputed = np.cumsum(own)
    checks["cumulative_sum"] = bool(np.array_equal(recomputed, cum))
    beta = col("beta")
    expected = np.array([math.exp(-1.0 / math.sqrt(n)) for n in inner_n])
    checks["beta_schedule"] = bool(np.all(np.abs(beta - expected) <= np.spacing(expected)))
    lhs, rhs = col("lemma9_lhs"), col("lemma9_rhs")
    valid = np.isfinite(rhs)
    checks["lemma9"] = bool(np.all(_margin(lhs[valid], rhs[valid]) >= 0))
    checks["lemma5_best"] = bool(np.all(_margin(col("lemma5_excess_best"), col("lemma5_bound_best")) >= 0))
    checks["countable_convexity"] = bool(np.all(col("mixture_loss") + TOL - own >= 0))
    sampled = col("sampled_loss")
    out = {"rounds": len(rows)}
    if np.all(np.isfinite(sampled)) and len(rows) >= LIL_MIN_ROUNDS:
        stat = _lil(sampled - own, float(np.max(col("loss_bound"))))
        out["lil_statistic"] = stat
        checks["lil"] = stat <= 1.2
    out["checks"] = checks
    out["failures"] = sorted(k for k, v in checks.items() if not v)
    out["ok"] = not out["failures"]
    return out
