"""End-to-end acceptance criteria; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (about two minutes on one core).
"""

import math
import time

import numpy as np
import pytest

from waa.core import ball, make_loss
from waa.engine import mean_comparison_check
from waa.experiments import (
    MATRIX_ENVS,
    MATRIX_LOSSES,
    MATRIX_POOL_SIZES,
    MATRIX_SEEDS,
    TREND_CHECKPOINTS,
    ar1_trend_config,
    compact_config,
    escaping_config,
    lil_config,
    regret_checkpoints,
    run_matrix,
)
from waa.experts import EnumConfig, ExpertPool, FamilyGrid, enumerate_pool
from waa.randomized import MeasurePool, RandomizedStrategy
from waa.removal import build_clipping, clip_measure_batch, clip_points
from waa.runner import run, trace_csv

MATRIX_SIZE = len(MATRIX_LOSSES) * len(MATRIX_ENVS) * len(MATRIX_POOL_SIZES) * len(MATRIX_SEEDS)
TOL = 1e-9


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    return emit


@pytest.fixture(scope="module")
def matrix():
    t0 = time.perf_counter()
    results = run_matrix()
    return results, time.perf_counter() - t0


def test_01_regret_bound_matrix(matrix, report):
    results, elapsed = matrix
    worst, failed = math.inf, []
    for r in results:
        excess, bound = r.trace.lemma5()
        m = bound + TOL * np.abs(bound) - excess
        worst = min(worst, float(m.min()))
        if np.any(m < 0):
            failed.append(r.config)
    ok = len(results) == MATRIX_SIZE and not failed and elapsed < 60.0
    report(1, ok, f"{len(results)} runs, {len(failed)} violating, worst margin {worst:.4g}, {elapsed:.1f}s (budget 60s)")
    assert len(results) == MATRIX_SIZE and not failed
    assert elapsed < 60.0


def test_02_regret_identity_every_round(matrix, report):
    results, _ = matrix
    worst, rounds, bad = math.inf, 0, 0
    for r in results:
        lhs, rhs = r.trace.lhs, r.trace.rhs
        m = rhs + TOL * np.maximum(1.0, np.abs(rhs)) - lhs
        rounds += m.size
        bad += int(np.sum(~(m >= 0)))
        worst = min(worst, float(m.min()))
    report(2, bad == 0, f"{rounds} rounds, {bad} violating, worst margin {worst:.4g}")
    assert bad == 0


def test_03_mean_comparison_random(report):
    rng = np.random.default_rng(20240603)
    bad = 0
    for _ in range(10_000):
        k = int(rng.integers(1, 65))
        q = rng.uniform(1e-6, 1.0, k)
        q /= q.sum()
        losses = rng.uniform(-100.0, 100.0, k)
        n = int(rng.integers(1, 10**6))
        bad += not mean_comparison_check(q, losses, n)
    report(3, bad == 0, f"10000 random (q, L, n) triples, {bad} violating")
    assert bad == 0


def test_04_countable_convexity(matrix, report):
    results, _ = matrix
    worst = min(float(np.min(r.trace.mixture + TOL - r.trace.own)) for r in results)
    report(4, worst >= 0, f"worst margin {worst:.4g} over every round of {len(results)} runs")
    assert worst >= 0


@pytest.mark.parametrize("loss", MATRIX_LOSSES)
def test_05_regret_trend(loss, report):
    per_seed = [regret_checkpoints(run(ar1_trend_config(loss, s), write=False)) for s in MATRIX_SEEDS]
    mean = np.mean([[reg for _, reg, _ in cp] for cp in per_seed], axis=0)
    decreasing = bool(np.all(np.diff(mean) < 0))
    bounded = all(reg <= bound for cp in per_seed for _, reg, bound in cp)
    trend = ", ".join(f"N={n}: {v:.4f}" for n, v in zip(TREND_CHECKPOINTS, mean))
    report(5, decreasing and bounded, f"{loss} mean regret {trend}; bound held for every seed: {bounded}")
    assert decreasing and bounded


def _wild_pool(k):
    """Enumerated strategies whose coefficients range far outside the clipping compacts."""
    cfg = EnumConfig(families=(
        FamilyGrid("constant", coef_range=(-40.0, 40.0)),
        FamilyGrid("linear_memory_m", coef_range=(-25.0, 25.0), memory_depths=(1, 1)),
        FamilyGrid("nearest_centroid", coef_range=(-40.0, 40.0)),
    ))
    return enumerate_pool(cfg, k)


@pytest.mark.parametrize("kind", MATRIX_LOSSES)
def test_06_clip_dominance(kind, report):
    rng = np.random.default_rng(6)
    loss = make_loss(kind, 1)
    B = ball([0.0], 4.0)
    spec = build_clipping(loss, B)
    strategies = _wild_pool(64)
    points = ExpertPool(strategies)
    measures = MeasurePool([RandomizedStrategy.spread(s, 3.0) for s in strategies])
    worst_det = worst_rand = math.inf
    moved = 0
    for _ in range(1000):
        k = int(rng.integers(64))
        xs = rng.uniform(-3, 3, (1, 1))
        prev = rng.uniform(-6, 6, (1, 1))
        y = rng.uniform(-4, 4, 1)
        phi = np.concatenate([[1.0], prev[0], xs[0]])
        g = points.predict_features(phi)[k]
        clipped_g = clip_points(spec, g[None])[0]
        moved += not np.array_equal(clipped_g, g)
        worst_det = min(worst_det, loss(g, y) - loss(clipped_g, y))
        mu = measures.predict_features(phi)
        raw_pts, raw_ms = mu.points[k], mu.masses[k]
        clipped = clip_measure_batch(spec, mu)
        before = float(np.sum(raw_ms * loss.batch(raw_pts, y)))
        after = float(np.sum(clipped.masses[k] * loss.batch(clipped.points[k], y)))
        worst_rand = min(worst_rand, before - after)
    ok = worst_det >= -TOL and worst_rand >= -TOL and moved > 0
    report(6, ok, f"{kind}: 1000 triples ({moved} moved by clipping), worst loss reduction "
                  f"{worst_det:.4g} (points) {worst_rand:.4g} (measures)")
    assert ok


def _ladder(values, r0):
    """Closed-form stage arithmetic: stage j has radius r0 2^j; an escape jumps to ceil(log2(v / r0))."""
    stage, restarts = 1, 0
    for v in values:
        if v > r0 * 2.0**stage:
            stage = max(stage + 1, math.ceil(math.log2(v / r0)))
            restarts += 1
    return restarts, stage


def test_07_removal_ladder(report):
    r0 = 2.0
    esc = run(escaping_config(cap=None, horizon=60), write=False)
    values = [3.0 ** (n - 1) for n in range(1, 61)]
    want = _ladder(values, r0)
    got = (esc.summary["restart_count"], esc.summary["final_stage"])

    # absolute loss keeps L below the e^L overflow point, so the bound stays finite
    bnd = run(escaping_config(cap=50.0, r0=r0, horizon=300, loss="absolute_norm"), write=False)
    final_stage = math.ceil(math.log2(50.0 / r0))
    restarts = bnd.summary["restart_count"]
    last = bnd.summary["restart_rounds"][-1]
    excess, bound = bnd.trace.lemma5()
    post = (bound + TOL * np.abs(bound) - excess)[last:]
    ok = (got == want and bnd.summary["final_stage"] == final_stage and restarts <= 5
          and post.size > 0 and bool(np.all(np.isfinite(bound[last:]))) and bool(np.all(post >= 0)))
    report(7, ok, f"escaping: restarts/final stage {got} vs closed form {want}; bounded by 50: "
                  f"final stage {bnd.summary['final_stage']} (expected {final_stage}) after {restarts} restarts, "
                  f"regret-bound margin after last restart {float(post.min()):.4g}")
    assert ok


def test_08_lil_concentration(report):
    stats = [run(lil_config(seed), write=False).summary["lil_statistic"] for seed in range(20)]
    passing = sum(s <= 1.2 for s in stats)
    report(8, passing >= 19, f"{passing}/20 seeds with statistic <= 1.2 at N=1e5 (max {max(stats):.3f})")
    assert passing >= 19


@pytest.mark.parametrize("cfg", [
    compact_config("squared_norm", "ar1", 8, seed=1, horizon=2000),
    compact_config("absolute_norm", "adversarial_worstcase", 8, seed=2, horizon=2000),
    compact_config("absolute_norm", "iid_gaussian", 8, seed=3, horizon=2000, mode="randomized",
                   pool={"k_max": 8, "spreads": [0.25]}),
    escaping_config(horizon=200, mode="removal-randomized"),
], ids=["deterministic", "adversarial", "randomized", "removal"])
def test_09_reproducible_csv(cfg, report, tmp_path):
    cfg = cfg.override(trace="trace.csv")
    a = run(cfg, out_dir=tmp_path / "a")
    b = run(cfg, out_dir=tmp_path / "b")
    same = (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    same = same and trace_csv(a.trace) == trace_csv(b.trace)
    report(9, same, f"{cfg.mode}/{cfg.environment.kind} trace CSVs byte-identical across two executions")
    assert same


def test_10_mutation_detected(report):
    results = run_matrix(mutation="frozen_beta")
    failing = [r for r in results if not r.checks["lemma5"]["holds"]]
    report(10, bool(failing), f"frozen beta = 0.5: {len(failing)}/{len(results)} runs violate the regret bound")
    assert failing
