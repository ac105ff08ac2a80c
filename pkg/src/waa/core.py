"""Points, histories, loss functions and compact balls."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

LOSS_KINDS = ("squared_norm", "absolute_norm", "custom")


class InvalidArgumentError(ValueError):
    pass


class UnsupportedError(NotImplementedError):
    pass


class InvalidStateError(RuntimeError):
    pass


def as_point(coords, dim: Optional[int] = None) -> np.ndarray:
    """Return `coords` as a read-only finite float64 vector."""
    arr = np.array(coords, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"non-finite coordinates: {arr}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidArgumentError(f"expected dimension {dim}, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


def norm_rows(diff: np.ndarray) -> np.ndarray:
    """Euclidean norm along the last axis, summed in coordinate order."""
    acc = diff[..., 0] * diff[..., 0]
    for i in range(1, diff.shape[-1]):
        acc = acc + diff[..., i] * diff[..., i]
    return np.sqrt(acc)


@dataclass(frozen=True)
class CompactBall:
    """Closed ball; `max_norm` selects the box (sup-norm) geometry."""

    center: np.ndarray
    radius: float
    max_norm: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not (self.radius >= 0.0 and math.isfinite(self.radius)):
            raise InvalidArgumentError(f"radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def distance_to_center(self, pts) -> np.ndarray:
        diff = np.asarray(pts, dtype=np.float64) - self.center
        if self.max_norm:
            return np.max(np.abs(diff), axis=-1)
        return norm_rows(diff)

    def contains(self, pt) -> bool:
        return bool(self.distance_to_center(pt) <= self.radius)

    def __eq__(self, other):
        if not isinstance(other, CompactBall):
            return NotImplemented
        return (
            self.radius == other.radius
            and self.max_norm == other.max_norm
            and np.array_equal(self.center, other.center)
        )

    def __hash__(self):
        return hash((self.center.tobytes(), self.radius, self.max_norm))


def ball(center, radius: float) -> CompactBall:
    return CompactBall(as_point(center), float(radius))


@dataclass(frozen=True, eq=False)
class LossFunction:
    """A loss lambda(gamma, y).

    Custom kinds carry their own `fn` (vectorized over leading axes of the
    prediction array) plus optional `bound_oracle(gamma_region, obs_region)`
    and `sublevel_oracle(obs_region, threshold)`.
    """

    kind: str
    dim: int = 1
    obs_dim: Optional[int] = None
    convex_in_prediction: bool = True
    fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    bound_oracle: Optional[Callable[[CompactBall, CompactBall], float]] = None
    sublevel_oracle: Optional[Callable[[CompactBall, float], CompactBall]] = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidArgumentError(f"unknown loss kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise InvalidArgumentError("custom loss needs fn")
        if self.obs_dim is None:
            object.__setattr__(self, "obs_dim", self.dim)

    @property
    def arity(self) -> tuple[int, int]:
        return (self.dim, self.obs_dim)

    def batch(self, predictions: np.ndarray, observation: np.ndarray) -> np.ndarray:
        """Losses of an array of predictions (..., d) against one observation."""
        if self.kind == "custom":
            return np.asarray(self.fn(predictions, observation), dtype=np.float64)
        dist = norm_rows(observation - predictions)
        if self.kind == "squared_norm":
            return dist * dist
        return dist

    def __call__(self, prediction, observation) -> float:
        return float(self.batch(np.asarray(prediction)[None, :], np.asarray(observation))[0])


def squared_norm(dim: int = 1) -> LossFunction:
    return LossFunction("squared_norm", dim)


def absolute_norm(dim: int = 1) -> LossFunction:
    return LossFunction("absolute_norm", dim)


def make_loss(kind: str, dim: int = 1, convex_in_prediction: bool = True) -> LossFunction:
    if kind == "custom":
        raise InvalidArgumentError("custom losses are built directly with LossFunction")
    return LossFunction(kind, dim, convex_in_prediction=convex_in_prediction)


def _check_dims(loss: LossFunction, prediction: np.ndarray, observation: np.ndarray):
    if prediction.shape != (loss.dim,) or observation.shape != (loss.obs_dim,):
        raise InvalidArgumentError(
            f"loss arity {loss.arity} does not match shapes {prediction.shape}, {observation.shape}"
        )


def loss_eval(loss: LossFunction, prediction, observation) -> float:
    prediction = np.asarray(prediction, dtype=np.float64)
    observation = np.asarray(observation, dtype=np.float64)
    _check_dims(loss, prediction, observation)
    return loss(prediction, observation)


def loss_bound_on(loss: LossFunction, gamma_region: CompactBall, obs_region: CompactBall) -> float:
    """An upper bound on |loss| over gamma_region x obs_region."""
    if gamma_region.dim != loss.dim or obs_region.dim != loss.obs_dim:
        raise InvalidArgumentError("region dimensions do not match loss arity")
    if loss.kind == "custom":
        if loss.bound_oracle is None:
            raise UnsupportedError("custom loss has no bound oracle")
        return float(loss.bound_oracle(gamma_region, obs_region))
    gap = float(norm_rows(gamma_region.center - obs_region.center))
    reach = gamma_region.radius + obs_region.radius + gap
    return reach * reach if loss.kind == "squared_norm" else reach


def sublevel_compact(loss: LossFunction, obs_region: CompactBall, threshold: float) -> CompactBall:
    """A ball C with loss(gamma, y) > threshold for gamma outside C and y in obs_region."""
    if loss.kind == "custom":
        if loss.sublevel_oracle is None:
            raise UnsupportedError("custom loss has no sublevel oracle")
        return loss.sublevel_oracle(obs_region, threshold)
    if loss.kind == "absolute_norm":
        extra = max(threshold, 0.0)
    else:
        extra = math.sqrt(max(threshold, 0.0))
    return CompactBall(obs_region.center, obs_region.radius + extra)


@dataclass(frozen=True, eq=False)
class History:
    """sigma_n = (..., x_{n-1}, y_{n-1}, x_n).

    The realized pairs live in append-only buffers that may be shared between
    histories; a history only ever reads its first `length` entries, so
    extending never disturbs an existing value.  Rounds before the first pair
    are the "no feedback" prepast and are never materialized.
    """

    current_signal: np.ndarray
    _signals: list = field(default_factory=list, repr=False)
    _observations: list = field(default_factory=list, repr=False)
    length: int = 0
    prepast: bool = True

    @classmethod
    def start(cls, signal) -> "History":
        return cls(as_point(signal))

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple], current_signal) -> "History":
        xs = [as_point(x) for x, _ in pairs]
        ys = [as_point(y) for _, y in pairs]
        return cls(as_point(current_signal), xs, ys, len(xs))

    @property
    def pairs(self) -> tuple:
        return tuple(zip(self._signals[: self.length], self._observations[: self.length]))

    @property
    def round(self) -> int:
        return self.length + 1

    def observation(self, lag: int) -> Optional[np.ndarray]:
        """y_{n-lag}, or None when that round is in the prepast."""
        if 1 <= lag <= self.length:
            return self._observations[self.length - lag]
        return None

    def signal(self, lag: int) -> Optional[np.ndarray]:
        if lag == 0:
            return self.current_signal
        if 1 <= lag <= self.length:
            return self._signals[self.length - lag]
        return None

    def extend(self, observation, next_signal) -> "History":
        return history_extend(self, observation, next_signal)

    def __eq__(self, other):
        if not isinstance(other, History):
            return NotImplemented
        if self.length != other.length or self.prepast != other.prepast:
            return False
        if not np.array_equal(self.current_signal, other.current_signal):
            return False
        return all(
            np.array_equal(a, c) and np.array_equal(b, d)
            for (a, b), (c, d) in zip(self.pairs, other.pairs)
        )

    def __hash__(self):
        return hash((self.length, self.current_signal.tobytes()))


def history_extend(h: History, observation, next_signal) -> History:
    y = as_point(observation)
    x = as_point(next_signal)
    if h.length > 0:
        if y.shape != h._observations[0].shape:
            raise InvalidArgumentError("observation dimension changed mid-history")
    if x.shape != h.current_signal.shape:
        raise InvalidArgumentError("signal dimension changed mid-history")
    if len(h._observations) == h.length:
        xs, ys = h._signals, h._observations
    else:
        xs, ys = h._signals[: h.length], h._observations[: h.length]
    xs.append(h.current_signal)
    ys.append(y)
    return History(x, xs, ys, h.length + 1, h.prepast)


class Transcript:
    """Rounds of one game: the history at each round and its observation."""

    def __init__(self, start: Optional[History] = None):
        self._histories: list[History] = []
        self._observations: list[np.ndarray] = []
        self.start = start

    def append(self, history: History, observation) -> None:
        self._histories.append(history)
        self._observations.append(as_point(observation))

    def __len__(self) -> int:
        return len(self._histories)

    def __iter__(self) -> Iterator[tuple[History, np.ndarray]]:
        return iter(zip(self._histories, self._observations))

    def __getitem__(self, i):
        if isinstance(i, slice):
            return list(zip(self._histories[i], self._observations[i]))
        return self._histories[i], self._observations[i]
