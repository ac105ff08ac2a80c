"""Named experiment configurations shared by the scripts and the acceptance suite.

All compact experiments play on Gamma = Y = [0, 1], where both built-in
losses are bounded by L = 1.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from .config import RunConfig
from .runner import RunResult, run

UNIT = {"center": [0.5], "radius": 0.5}

ENUM_UNIT = {
    "families": [
        {"family": "constant", "coef_range": [0.0, 1.0]},
        {"family": "linear_memory_m", "coef_range": [-1.0, 1.0], "memory_depths": [1, 1]},
        {"family": "nearest_centroid", "coef_range": [0.0, 1.0]},
    ]
}

# the two extreme constants lead every matrix pool
EDGE_EXPERTS = [
    {"family": "constant", "params": [0.0]},
    {"family": "constant", "params": [1.0]},
]

MATRIX_LOSSES = ("squared_norm", "absolute_norm")
MATRIX_ENVS = ("iid_gaussian", "ar1", "drifting_sine", "adversarial_worstcase")
MATRIX_POOL_SIZES = (2, 8, 32)
MATRIX_SEEDS = (0, 1, 2, 3, 4)

ENV_PARAMS = {
    "iid_gaussian": {"mean": 0.5, "sd": 0.2},
    "ar1": {"mean": 0.5, "phi": 0.5, "sd": 0.2},
    "drifting_sine": {"mean": 0.5, "amplitude": 0.3, "period": 200.0, "sd": 0.1},
    "adversarial_worstcase": {},
}


def compact_config(loss: str, env: str, k_max: int, seed: int, horizon: int = 10_000,
                   mode: str = "deterministic", mutation: Optional[str] = None, **kw) -> RunConfig:
    d = {
        "spaces": {"d_x": 1, "d_y": 1},
        "loss": loss,
        "mode": mode,
        "gamma_region": UNIT,
        "obs_region": UNIT,
        "pool": {"k_max": k_max, "enum": ENUM_UNIT, "extra": EDGE_EXPERTS},
        "environment": {"kind": env, "params": dict(ENV_PARAMS.get(env, {})), "seed": seed},
        "horizon": horizon,
        "rng_seed": seed,
        "mutation": mutation,
        "output": {"trace": None, "summary": None},
    }
    d.update(kw)
    return RunConfig.from_dict(d)


def matrix_configs(horizon: int = 10_000, mutation: Optional[str] = None) -> Iterator[RunConfig]:
    """2 losses x 4 environments x 3 pool sizes x 5 seeds."""
    for loss in MATRIX_LOSSES:
        for env in MATRIX_ENVS:
            for k in MATRIX_POOL_SIZES:
                for seed in MATRIX_SEEDS:
                    yield compact_config(loss, env, k, seed, horizon, mutation=mutation)


def run_matrix(horizon: int = 10_000, mutation: Optional[str] = None) -> list[RunResult]:
    return [run(c, write=False) for c in matrix_configs(horizon, mutation)]


# -- regret trend on ar1 ----------------------------------------------------

TREND_PHI, TREND_SD, TREND_POOL = 0.9, 0.2, 4
TREND_CHECKPOINTS = (100, 1_000, 10_000)


def ar1_trend_config(loss: str, seed: int, horizon: int = 10_000) -> RunConfig:
    """ar1 Reality with the matched linear expert y ~ mean (1 - phi) + phi y_{n-1}
    appended last, so it starts with the smallest prior."""
    matched = {"family": "linear_memory_m", "params": [0.5 * (1 - TREND_PHI), TREND_PHI, 0.0], "memory_depth": 1}
    return RunConfig.from_dict({
        "loss": loss,
        "gamma_region": UNIT,
        "obs_region": UNIT,
        "pool": {"k_max": TREND_POOL, "enum": ENUM_UNIT, "extra": [matched], "extra_position": "last"},
        "environment": {"kind": "ar1", "params": {"mean": 0.5, "phi": TREND_PHI, "sd": TREND_SD}, "seed": seed},
        "horizon": horizon,
        "output": {"trace": None, "summary": None},
    })


def regret_checkpoints(result: RunResult, checkpoints=TREND_CHECKPOINTS) -> list[tuple[int, float, float]]:
    """(N, average regret vs the best expert at N, (L^2 e^L + ln 1/q_best) / sqrt N)."""
    t = result.trace
    out = []
    for n in checkpoints:
        best = int(np.argmin(t.cum_expert[n - 1]))
        regret = (t.cum_own[n - 1] - t.cum_expert[n - 1, best]) / n
        lb = float(t.loss_bound[n - 1])
        bound = (lb * lb * math.exp(lb) + math.log(1.0 / t.priors[best])) / math.sqrt(n)
        out.append((n, float(regret), float(bound)))
    return out


# -- randomized concentration -----------------------------------------------


def lil_config(seed: int, horizon: int = 100_000) -> RunConfig:
    """Randomized WAA with two-point experts on [0, 1] under absolute loss (L = 1)."""
    return RunConfig.from_dict({
        "loss": "absolute_norm",
        "mode": "randomized",
        "gamma_region": UNIT,
        "obs_region": UNIT,
        "pool": {"k_max": 8, "enum": ENUM_UNIT, "extra": EDGE_EXPERTS, "spreads": [0.25]},
        "environment": {"kind": "iid_gaussian", "params": {"mean": 0.5, "sd": 0.3}, "seed": seed},
        "horizon": horizon,
        "rng_seed": seed,
        "checks": ["lil"],
        "output": {"trace": None, "summary": None},
    })


# -- removal ----------------------------------------------------------------


def escaping_config(base: float = 1.0, factor: float = 3.0, cap: Optional[float] = 50.0, r0: float = 2.0,
                    horizon: int = 300, loss: str = "squared_norm", mode: str = "removal") -> RunConfig:
    params = {"base": base, "factor": factor}
    if cap is not None:
        params["cap"] = cap
    return RunConfig.from_dict({
        "loss": loss,
        "mode": mode,
        "pool": {"k_max": 8},
        "environment": {"kind": "escaping", "params": params},
        "horizon": horizon,
        "removal": {"r0": r0},
        "output": {"trace": None, "summary": None},
    })
