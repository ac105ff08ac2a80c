"""Weak Aggregating Algorithm over pools of stationary strategies."""

from .core import (
    CompactBall,
    History,
    InvalidArgumentError,
    InvalidStateError,
    LossFunction,
    Transcript,
    UnsupportedError,
    absolute_norm,
    as_point,
    ball,
    history_extend,
    loss_bound_on,
    loss_eval,
    make_loss,
    squared_norm,
    sublevel_compact,
)
from .engine import (
    PointSpace,
    RoundReport,
    WaaState,
    average_regret,
    lemma5_bound,
    lemma9_check,
    mean_comparison_check,
    run_adaptive,
    run_batch,
)
from .experts import (
    EnumConfig,
    ExpertPool,
    FamilyGrid,
    StationaryStrategy,
    enumerate_strategy,
    replay_cumulative_loss,
    strategy_predict,
)
from .config import ConfigError, RunConfig, load_config
from .randomized import DiscreteMeasure, MeasurePool, RandomizedStrategy, RngState, sample
from .removal import RemovalMeta, build_clipping, clip_measure, clip_points, remover_next
from .runner import replay_trace, run, verify_suite

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
