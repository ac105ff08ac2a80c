"""Unbounded domains: the game of removal, clipping into compacts, restarts.

Remover plays the exhaustion A_j x B_j = max-norm balls of radius
r0 * 2^j centred at the origin of X x Y.  Predictor runs an inner WAA over
the pool clipped into C(B_k) and starts a fresh one every time an
observed pair (x_n, y_n) escapes the current box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    CompactBall,
    InvalidArgumentError,
    InvalidStateError,
    LossFunction,
    as_point,
    loss_bound_on,
    norm_rows,
    sublevel_compact,
)
from .engine import PointSpace, RoundReport, WaaState, sqrt_rate
from .experts import TransformedStrategy, replay_cumulative_loss
from .randomized import DiscreteMeasure, MeasureBatch, MeasurePool


class ProtocolError(InvalidStateError):
    pass


def stage_radius(r0: float, stage: int) -> float:
    return r0 * 2.0**stage


def stage_for(value: float, r0: float) -> int:
    """Smallest stage j >= 1 whose radius r0 * 2^j is at least `value`."""
    if value <= 2.0 * r0:
        return 1
    j = max(1, math.ceil(math.log2(value / r0)))
    while stage_radius(r0, j) < value:
        j += 1
    while j > 1 and stage_radius(r0, j - 1) >= value:
        j -= 1
    return j


@dataclass(frozen=True)
class RemovalState:
    r0: float
    stage: int = 1
    escape_count: int = 0
    d_x: int = 1
    d_y: int = 1

    @property
    def radius(self) -> float:
        return stage_radius(self.r0, self.stage)

    @property
    def current_compact(self) -> tuple[CompactBall, CompactBall]:
        return (
            CompactBall(np.zeros(self.d_x), self.radius, max_norm=True),
            CompactBall(np.zeros(self.d_y), self.radius, max_norm=True),
        )

    def contains(self, x, y) -> bool:
        return _sup(x, y) <= self.radius


def _sup(x, y) -> float:
    return float(np.max(np.abs(np.concatenate([np.atleast_1d(x), np.atleast_1d(y)]))))


def remover_next(state: RemovalState, escape_point: tuple) -> RemovalState:
    """Remover's answer to an escape: the smallest later stage containing the point."""
    x, y = escape_point
    size = _sup(x, y)
    if size <= state.radius:
        raise InvalidArgumentError("escape point lies inside the current compact")
    j = max(state.stage + 1, stage_for(size, state.r0))
    return RemovalState(state.r0, j, state.escape_count + 1, state.d_x, state.d_y)


def r0_for_prefix(r0: float, prefix_pairs) -> float:
    """Smallest r0' >= r0 whose stage-1 box contains every (x, y) of a real prefix."""
    sup = max((_sup(x, y) for x, y in prefix_pairs), default=0.0)
    return max(float(r0), sup / 2.0)


def expected_escapes(sup_values, r0: float) -> tuple[int, int]:
    """(escape count, final stage) of the ladder on a sequence of sup-norms."""
    stage, escapes = 1, 0
    for v in sup_values:
        if v > stage_radius(r0, stage):
            stage = stage_for(v, r0)
            escapes += 1
    return escapes, stage


# -- clipping ---------------------------------------------------------------


@dataclass(frozen=True)
class ClippingSpec:
    gamma0: np.ndarray
    C1: CompactBall
    C2: CompactBall
    M1: float
    M2: float

    def __post_init__(self):
        g0 = as_point(self.gamma0)
        object.__setattr__(self, "gamma0", g0)
        if not np.array_equal(self.C1.center, self.C2.center):
            raise InvalidArgumentError("C1 and C2 must share a center")
        if not self.C1.radius < self.C2.radius:
            raise InvalidArgumentError("C1 must lie in the interior of C2")
        if not self.C1.contains(g0):
            raise InvalidArgumentError("gamma0 must lie in C1")
        if self.M1 > self.M2:
            raise InvalidArgumentError("M1 must not exceed M2")


def build_clipping(loss: LossFunction, B: CompactBall, gamma0=None) -> ClippingSpec:
    g0 = as_point(np.zeros(loss.dim) if gamma0 is None else gamma0, loss.dim)
    M1 = loss_bound_on(loss, CompactBall(g0, 0.0), B)
    C1 = sublevel_compact(loss, B, M1 + 1.0)
    C1 = CompactBall(C1.center, max(C1.radius, float(norm_rows(g0 - C1.center))))
    M2 = loss_bound_on(loss, C1, B)
    C2 = sublevel_compact(loss, B, M2 + 1.0)
    c2_radius = C2.radius
    if not np.array_equal(C2.center, C1.center):
        c2_radius = max(c2_radius, C1.radius + float(norm_rows(C2.center - C1.center)))
        C2 = CompactBall(C1.center, c2_radius)
    if C2.radius <= C1.radius:
        C2 = CompactBall(C1.center, C1.radius + 1.0)
    return ClippingSpec(g0, C1, C2, M1, M2)


def bump(spec: ClippingSpec, g: np.ndarray) -> np.ndarray:
    """f1: 1 on C1, 0 outside C2, rho(g, not C2) / (rho(g, C1) + rho(g, not C2)) between."""
    t = norm_rows(np.asarray(g) - spec.C1.center)
    to_c1 = np.maximum(0.0, t - spec.C1.radius)
    to_outside = np.maximum(0.0, spec.C2.radius - t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = to_outside / (to_c1 + to_outside)
    return np.where(t <= spec.C1.radius, 1.0, np.where(t > spec.C2.radius, 0.0, ratio))


def clip_points(spec: ClippingSpec, g: np.ndarray) -> np.ndarray:
    """D'(sigma) for an array of raw predictions (..., d)."""
    f = bump(spec, g)
    mixed = f[..., None] * g + (1.0 - f)[..., None] * spec.gamma0
    t = norm_rows(g - spec.C1.center)
    return np.where((t <= spec.C1.radius)[..., None], g, mixed)


def clip_strategy(spec: ClippingSpec, d):
    return TransformedStrategy(d, lambda g: clip_points(spec, g), "clipped")


def clip_measure_batch(spec: ClippingSpec, batch: MeasureBatch) -> MeasureBatch:
    """Each atom (g, m) becomes (g, m f1(g)) plus (gamma0, m (1 - f1(g)))."""
    f = bump(spec, batch.points)
    g0 = np.broadcast_to(spec.gamma0, batch.points.shape)
    pts = np.concatenate([batch.points, g0], axis=-2)
    ms = np.concatenate([batch.masses * f, batch.masses * (1.0 - f)], axis=-1)
    return MeasureBatch(pts, ms)


def clip_measure(spec: ClippingSpec, mu: DiscreteMeasure) -> DiscreteMeasure:
    out = clip_measure_batch(spec, MeasureBatch(mu.points, mu.masses))
    return DiscreteMeasure.canonical(out.points, out.masses)


def clipped_pool(pool, spec: ClippingSpec):
    """The pool with every expert clipped; works for point and measure pools."""
    if isinstance(pool, MeasurePool):
        return pool.with_transform(lambda b: clip_measure_batch(spec, b))
    return pool.with_transform(lambda g: clip_points(spec, g))


def obs_ball(state: RemovalState) -> CompactBall:
    """Euclidean ball containing the current Y box (radius scaled by sqrt(d_y))."""
    return CompactBall(np.zeros(state.d_y), state.radius * math.sqrt(state.d_y))


# -- restart meta-strategy --------------------------------------------------


@dataclass
class StageRecord:
    stage: int
    start_round: int
    spec: ClippingSpec
    loss_bound: float


class RemovalMeta:
    """Predictor playing Evader in the game of removal.

    Alternate `begin_round(signal)` -> prediction and `end_round(observation)`.
    On an escape the round is completed under the current stage, then a
    fresh inner WAA over the pool clipped to C(B_{k+1}) takes over from the
    next round.  With ``replay_on_restart`` the new inner state starts from
    the clipped experts' replayed losses over the whole past instead.
    """

    def __init__(
        self,
        pool,
        loss: LossFunction,
        r0: float,
        d_x: int = 1,
        gamma0=None,
        space=None,
        learning_rate: Callable[[int], float] = sqrt_rate,
        replay_on_restart: bool = False,
    ):
        self.base_pool = pool
        self.loss = loss
        self.space = space if space is not None else PointSpace(loss)
        self.learning_rate = learning_rate
        self.replay_on_restart = replay_on_restart
        self.gamma0 = np.zeros(loss.dim) if gamma0 is None else as_point(gamma0, loss.dim)
        self.removal = RemovalState(float(r0), 1, 0, d_x, loss.obs_dim)
        self.round = 1
        self.stages: list[StageRecord] = []
        self.restart_rounds: list[int] = []
        self.own_cumulative_loss = 0.0
        self.full_transcript: list = []
        self._awaiting = "signal"
        self._signal = None
        self._new_inner(prefix=None)

    def _new_inner(self, prefix):
        B = obs_ball(self.removal)
        spec = build_clipping(self.loss, B, self.gamma0)
        bound = loss_bound_on(self.loss, spec.C2, B)
        pool = clipped_pool(self.base_pool, spec)
        initial = None
        if self.replay_on_restart and self.full_transcript:
            initial = np.array(
                [replay_cumulative_loss(pool.strategy(k), self.full_transcript, self.space.loss) for k in range(pool.size)]
            )
        self.inner = WaaState(pool, self.loss, self.space, prefix, self.learning_rate, bound, initial)
        self.stages.append(StageRecord(self.removal.stage, self.round, spec, bound))

    @property
    def stage(self) -> int:
        return self.removal.stage

    @property
    def escape_count(self) -> int:
        return self.removal.escape_count

    @property
    def spec(self) -> ClippingSpec:
        return self.stages[-1].spec

    def begin_round(self, signal):
        if self._awaiting != "signal":
            raise ProtocolError("expected an observation")
        self._signal = as_point(signal)
        gamma, _ = self.inner.begin_round(self._signal)
        self._awaiting = "observation"
        return gamma

    def end_round(self, observation) -> tuple[RoundReport, bool]:
        """Complete the round; returns (inner report, whether a restart happened)."""
        if self._awaiting != "observation":
            raise ProtocolError("expected a signal")
        y = as_point(observation)
        report = self.inner.end_round(y)
        self.own_cumulative_loss += report.own_loss
        self.full_transcript.append(self.inner.last_round)
        restarted = False
        if not self.removal.contains(self._signal, y):
            self.removal = remover_next(self.removal, (self._signal, y))
            self.restart_rounds.append(self.round)
            restarted = True
        self.round += 1
        if restarted:
            self._new_inner(prefix=self.inner.last_round)
        self._awaiting = "signal"
        return report, restarted


def meta_step(meta: RemovalMeta, event: tuple):
    """Dispatch ("signal", x) -> prediction, ("observation", y) -> meta."""
    kind, value = event
    if kind == "signal":
        return meta.begin_round(value)
    if kind == "observation":
        meta.end_round(value)
        return meta
    raise ProtocolError(f"unknown event {kind!r}")
