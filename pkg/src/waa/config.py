"""Run configuration (a single JSON document)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import CompactBall, LossFunction, make_loss
from .environments import EnvironmentSpec
from .experts import EnumConfig, StationaryStrategy, enumerate_pool

MODES = ("deterministic", "randomized", "removal", "removal-randomized")
MUTATIONS = (None, "frozen_beta")
ALL_CHECKS = ("normalization", "countable_convexity", "lemma9", "lemma5", "mean_comparison", "lil", "clip_dominance")


class ConfigError(ValueError):
    pass


def _ball(d: Optional[dict]) -> Optional[CompactBall]:
    if d is None:
        return None
    return CompactBall(np.asarray(d["center"], dtype=float), float(d["radius"]))


def _ball_dict(b: Optional[CompactBall]) -> Optional[dict]:
    if b is None:
        return None
    return {"center": b.center.tolist(), "radius": b.radius}


@dataclass
class PoolConfig:
    k_max: int = 8
    priors: str = "geometric"
    enum: dict = field(default_factory=dict)
    extra: list = field(default_factory=list)
    spreads: list = field(default_factory=lambda: [0.0])
    extra_position: str = "first"

    def strategies(self, dims: tuple) -> list[StationaryStrategy]:
        explicit = [
            StationaryStrategy(e["family"], tuple(e["params"]), int(e.get("memory_depth", 0)), dims)
            for e in self.extra
        ]
        n_enum = self.k_max - len(explicit)
        if n_enum < 0:
            raise ConfigError("more explicit experts than k_max")
        enumerated = enumerate_pool(EnumConfig.from_dict(self.enum, dims), n_enum)
        return explicit + enumerated if self.extra_position == "first" else enumerated + explicit


@dataclass
class RunConfig:
    d_x: int = 1
    d_y: int = 1
    loss: str = "squared_norm"
    convex_in_prediction: bool = True
    mode: str = "deterministic"
    gamma_region: Optional[CompactBall] = None
    obs_region: Optional[CompactBall] = None
    pool: PoolConfig = field(default_factory=PoolConfig)
    environment: EnvironmentSpec = field(default_factory=lambda: EnvironmentSpec("iid_gaussian"))
    horizon: int = 1000
    rng_seed: int = 0
    r0: float = 2.0
    replay_on_restart: bool = False
    mutation: Optional[str] = None
    fast_path: bool = True
    checks: tuple = ALL_CHECKS
    lil_threshold: float = 1.2
    trace: Optional[str] = "trace.csv"
    summary: Optional[str] = "summary.json"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.pool.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.pool.extra_position not in ("first", "last"):
            raise ConfigError("pool.extra_position must be 'first' or 'last'")
        if self.pool.priors != "geometric":
            raise ConfigError(f"unknown priors rule {self.pool.priors!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mutation not in MUTATIONS:
            raise ConfigError(f"unknown mutation {self.mutation!r}")
        if self.loss not in ("squared_norm", "absolute_norm"):
            raise ConfigError(f"unknown loss kind {self.loss!r}")
        if self.d_y < 1 or self.d_x < 1:
            raise ConfigError("space dimensions must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")
        if self.mode in ("deterministic", "removal") and not self.convex_in_prediction:
            raise ConfigError(f"{self.mode} mode needs a loss convex in the prediction")
        if self.mode in ("deterministic", "randomized"):
            if self.gamma_region is None or self.obs_region is None:
                raise ConfigError(f"{self.mode} mode needs gamma_region and obs_region (compact spaces)")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks {sorted(unknown)}")

    @property
    def dims(self) -> tuple:
        return (self.d_x, self.d_y, self.d_y)

    @property
    def randomized(self) -> bool:
        return self.mode in ("randomized", "removal-randomized")

    @property
    def removal(self) -> bool:
        return self.mode.startswith("removal")

    def loss_function(self) -> LossFunction:
        return make_loss(self.loss, self.d_y, self.convex_in_prediction)

    def override(self, **kw) -> "RunConfig":
        out = replace(self, **kw)
        out.validate()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        spaces = d.get("spaces", {})
        pool = d.get("pool", {})
        removal = d.get("removal", {})
        out = d.get("output", {})
        try:
            return cls(
                d_x=int(spaces.get("d_x", 1)),
                d_y=int(spaces.get("d_y", 1)),
                loss=d.get("loss", "squared_norm"),
                convex_in_prediction=bool(d.get("convex_in_prediction", True)),
                mode=d.get("mode", "deterministic"),
                gamma_region=_ball(d.get("gamma_region")),
                obs_region=_ball(d.get("obs_region")),
                pool=PoolConfig(
                    k_max=int(pool.get("k_max", 8)),
                    priors=pool.get("priors", "geometric"),
                    enum=pool.get("enum", {}),
                    extra=list(pool.get("extra", [])),
                    spreads=list(pool.get("spreads", [0.0])),
                    extra_position=pool.get("extra_position", "first"),
                ),
                environment=EnvironmentSpec.from_dict(d.get("environment", {"kind": "iid_gaussian"})),
                horizon=int(d.get("horizon", 1000)),
                rng_seed=int(d.get("rng_seed", 0)),
                r0=float(removal.get("r0", 2.0)),
                replay_on_restart=bool(removal.get("replay_on_restart", False)),
                mutation=d.get("mutation"),
                fast_path=bool(d.get("fast_path", True)),
                checks=tuple(d.get("checks", ALL_CHECKS)),
                lil_threshold=float(d.get("lil_threshold", 1.2)),
                trace=out.get("trace", "trace.csv"),
                summary=out.get("summary", "summary.json"),
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed config: {e}") from e

    def to_dict(self) -> dict:
        return {
            "spaces": {"d_x": self.d_x, "d_y": self.d_y},
            "loss": self.loss,
            "convex_in_prediction": self.convex_in_prediction,
            "mode": self.mode,
            "gamma_region": _ball_dict(self.gamma_region),
            "obs_region": _ball_dict(self.obs_region),
            "pool": {
                "k_max": self.pool.k_max,
                "priors": self.pool.priors,
                "enum": self.pool.enum,
                "extra": self.pool.extra,
                "spreads": self.pool.spreads,
                "extra_position": self.pool.extra_position,
            },
            "environment": {
                "kind": self.environment.kind,
                "params": self.environment.params,
                "seed": self.environment.seed,
            },
            "horizon": self.horizon,
            "rng_seed": self.rng_seed,
            "removal": {"r0": self.r0, "replay_on_restart": self.replay_on_restart},
            "mutation": self.mutation,
            "fast_path": self.fast_path,
            "checks": list(self.checks),
            "lil_threshold": self.lil_threshold,
            "output": {"trace": self.trace, "summary": self.summary},
        }


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return RunConfig.from_dict(data)
