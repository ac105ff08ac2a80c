"""Enumerable families of stationary prediction strategies.

A strategy sees only the content of the history (at most its last
``memory_depth`` observations and the current signal), never the round
index.  Pools evaluate all their strategies in one vectorized pass that
performs exactly the same floating point operations, in the same order, as
the single-strategy path, so live and replayed losses agree bit for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import CompactBall, History, InvalidArgumentError, norm_rows

FAMILIES = ("constant", "linear_memory_m", "nearest_centroid")


@dataclass(frozen=True)
class StationaryStrategy:
    """A pure map from histories to predictions.

    ``params`` layout by family:

    * constant: the prediction itself (d_gamma values).
    * linear_memory_m: a d_gamma x (1 + m*d_y + d_x) row-major matrix applied
      to [1, y_{n-1}, ..., y_{n-m}, x_n]; prepast observations read as zero.
    * nearest_centroid: c anchors in X (c*d_x values) followed by their c
      outputs in Gamma (c*d_gamma values); the output of the anchor nearest
      to x_n is returned (lowest index on ties).
    """

    family: str
    params: tuple
    memory_depth: int = 0
    dims: tuple = (1, 1, 1)  # (d_x, d_y, d_gamma)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not all(math.isfinite(p) for p in self.params):
            raise InvalidArgumentError("strategy parameters must be finite")
        d_x, d_y, d_g = self.dims
        n = len(self.params)
        if self.family == "constant":
            ok = n == d_g and self.memory_depth == 0
        elif self.family == "linear_memory_m":
            ok = self.memory_depth >= 0 and n == d_g * (1 + self.memory_depth * d_y + d_x)
        else:
            ok = self.memory_depth == 0 and n > 0 and n % (d_x + d_g) == 0
        if not ok:
            raise InvalidArgumentError(f"bad parameter shape for {self.family}: {n} values")

    @property
    def d_gamma(self) -> int:
        return self.dims[2]

    def weight_matrix(self, memory: int) -> np.ndarray:
        """Linear form over features with `memory` lags (constant and linear families)."""
        d_x, d_y, d_g = self.dims
        width = 1 + memory * d_y + d_x
        w = np.zeros((d_g, width))
        p = np.asarray(self.params)
        if self.family == "constant":
            w[:, 0] = p
            return w
        m = self.memory_depth
        own = p.reshape(d_g, 1 + m * d_y + d_x)
        w[:, : 1 + m * d_y] = own[:, : 1 + m * d_y]
        w[:, width - d_x :] = own[:, 1 + m * d_y :]
        return w

    def centroids(self) -> tuple[np.ndarray, np.ndarray]:
        d_x, _, d_g = self.dims
        p = np.asarray(self.params)
        c = len(p) // (d_x + d_g)
        return p[: c * d_x].reshape(c, d_x), p[c * d_x :].reshape(c, d_g)

    def predict(self, h: History) -> np.ndarray:
        return strategy_predict(self, h)


def history_features(h: History, memory: int, d_y: int) -> np.ndarray:
    """[1, y_{n-1}, ..., y_{n-memory}, x_n] with zeros for prepast rounds."""
    parts = [np.ones(1)]
    for lag in range(1, memory + 1):
        y = h.observation(lag)
        parts.append(np.zeros(d_y) if y is None else y)
    parts.append(h.current_signal)
    return np.concatenate(parts)


def transcript_features(
    signals: np.ndarray, observations: np.ndarray, memory: int
) -> np.ndarray:
    """Feature rows for rounds 1..N of a game started from the prepast.

    ``observations`` may be one row longer or shorter than needed; row n only
    reads y_1..y_{n-1}.
    """
    n, d_x = signals.shape
    d_y = observations.shape[1]
    out = np.zeros((n, 1 + memory * d_y + d_x))
    out[:, 0] = 1.0
    for lag in range(1, memory + 1):
        col = 1 + (lag - 1) * d_y
        if n > lag:
            out[lag:, col : col + d_y] = observations[: n - lag]
    out[:, out.shape[1] - d_x :] = signals
    return out


def _linear_apply(w: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """sum_f w[..., f] * phi[f], accumulated left to right.

    ``w`` is (K, d, F) and ``phi`` is (..., F); result is (..., K, d).
    """
    ph = phi[..., None, None, :]
    acc = w[..., 0] * ph[..., 0]
    for f in range(1, w.shape[-1]):
        acc = acc + w[..., f] * ph[..., f]
    return acc


def _centroid_apply(anchors: np.ndarray, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """anchors (K, c, d_x), values (K, c, d), x (..., d_x) -> (..., K, d)."""
    diff = x[..., None, None, :] - anchors
    d2 = diff[..., 0] * diff[..., 0]
    for i in range(1, diff.shape[-1]):
        d2 = d2 + diff[..., i] * diff[..., i]
    idx = np.argmin(d2, axis=-1)
    k = np.arange(anchors.shape[0])
    return values[k, idx]


def strategy_predict(d: StationaryStrategy, h: History) -> np.ndarray:
    d_x, d_y, _ = d.dims
    if d.family == "nearest_centroid":
        anchors, values = d.centroids()
        return _centroid_apply(anchors[None], values[None], h.current_signal)[0]
    m = d.memory_depth
    phi = history_features(h, m, d_y)
    return _linear_apply(d.weight_matrix(m)[None], phi)[0]


def replay_cumulative_loss(strategy, transcript: Iterable, loss: Callable) -> float:
    """Sum of strategy losses over (history, observation) rounds, in round order."""
    total = 0.0
    for h, y in transcript:
        total += loss(strategy.predict(h), y)
    return total


def project_onto(region: CompactBall, g: np.ndarray) -> np.ndarray:
    """Nearest point of a Euclidean ball; points already inside are returned unchanged."""
    diff = g - region.center
    dist = norm_rows(diff)
    inside = dist <= region.radius
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = region.radius / dist
        moved = region.center + diff * scale[..., None]
    return np.where(inside[..., None], g, moved)


@dataclass(frozen=True)
class TransformedStrategy:
    """A base strategy post-composed with a pure map on predictions."""

    base: object
    transform: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    label: str = "transformed"

    @property
    def d_gamma(self) -> int:
        return self.base.d_gamma

    def predict(self, h: History) -> np.ndarray:
        return self.transform(self.base.predict(h)[None])[0]


def geometric_priors(k_max: int) -> np.ndarray:
    """q_k = 2^-k, renormalized over the first k_max experts."""
    q = np.array([2.0 ** -(k + 1) for k in range(k_max)])
    return q / q.sum()


class ExpertPool:
    """An ordered finite pool of strategies with positive priors.

    ``transforms`` are applied to every expert's prediction, in order (used
    for projection onto a compact prediction set and for clipping).
    """

    def __init__(
        self,
        strategies: Sequence[StationaryStrategy],
        priors: Optional[Sequence[float]] = None,
        transforms: Sequence[Callable[[np.ndarray], np.ndarray]] = (),
    ):
        if not strategies:
            raise InvalidArgumentError("empty pool")
        self.strategies = list(strategies)
        k = len(self.strategies)
        q = geometric_priors(k) if priors is None else np.asarray(priors, dtype=np.float64)
        if q.shape != (k,) or not np.all(q > 0):
            raise InvalidArgumentError("priors must be positive, one per expert")
        self.priors = q / q.sum()
        self.transforms = tuple(transforms)
        dims = {s.dims for s in self.strategies}
        if len(dims) != 1:
            raise InvalidArgumentError("mixed dimensions in pool")
        self.dims = dims.pop()
        self.memory = max(s.memory_depth for s in self.strategies)
        self._compile()

    def _compile(self):
        lin = [i for i, s in enumerate(self.strategies) if s.family != "nearest_centroid"]
        cen = [i for i, s in enumerate(self.strategies) if s.family == "nearest_centroid"]
        self._lin_idx = np.array(lin, dtype=int)
        self._lin_w = (
            np.stack([self.strategies[i].weight_matrix(self.memory) for i in lin]) if lin else None
        )
        self._cen_groups = []
        by_count: dict[int, list[int]] = {}
        for i in cen:
            by_count.setdefault(len(self.strategies[i].params), []).append(i)
        for idx in by_count.values():
            pairs = [self.strategies[i].centroids() for i in idx]
            self._cen_groups.append(
                (np.array(idx), np.stack([a for a, _ in pairs]), np.stack([v for _, v in pairs]))
            )

    def __len__(self) -> int:
        return len(self.strategies)

    @property
    def size(self) -> int:
        return len(self.strategies)

    def with_transform(self, transform) -> "ExpertPool":
        return ExpertPool(self.strategies, self.priors, self.transforms + (transform,))

    def strategy(self, k: int):
        """The effective (transformed) strategy of expert k (0-based)."""
        s = self.strategies[k]
        for t in self.transforms:
            s = TransformedStrategy(s, t)
        return s

    def predict_features(self, phi: np.ndarray) -> np.ndarray:
        """Predictions (..., K, d_gamma) from feature rows [1, y_{n-1..n-M}, x_n]."""
        return self._apply(phi)

    def _apply(self, phi: np.ndarray) -> np.ndarray:
        d_x, _, d_g = self.dims
        out = np.empty(phi.shape[:-1] + (self.size, d_g))
        if self._lin_w is not None:
            out[..., self._lin_idx, :] = _linear_apply(self._lin_w, phi)
        x = phi[..., phi.shape[-1] - d_x :]
        for idx, anchors, values in self._cen_groups:
            out[..., idx, :] = _centroid_apply(anchors, values, x)
        for t in self.transforms:
            out = t(out)
        return out

    def predict_all(self, h: History) -> np.ndarray:
        """(K, d_gamma) predictions for one history."""
        return self._apply(history_features(h, self.memory, self.dims[1]))

    def predict_batch(self, signals: np.ndarray, observations: np.ndarray) -> np.ndarray:
        """(N, K, d_gamma) predictions for rounds 1..N of a game from the prepast."""
        return self._apply(transcript_features(signals, observations, self.memory))


# -- enumeration ------------------------------------------------------------


@dataclass(frozen=True)
class FamilyGrid:
    """Dyadic parameter grid for one family.

    Level 0 holds the midpoint of ``coef_range`` only; level l >= 1 holds
    mid + half * j / 2^(l-1) for integer |j| <= 2^(l-1), per coordinate.
    Centroid anchors use ``anchor_range`` with the same scheme.
    """

    family: str
    coef_range: tuple = (-1.0, 1.0)
    memory_depths: tuple = (0, 0)
    max_level: Optional[int] = None
    n_centroids: int = 2
    anchor_range: tuple = (-1.0, 1.0)


@dataclass(frozen=True)
class EnumConfig:
    dims: tuple = (1, 1, 1)
    families: tuple = (
        FamilyGrid("constant"),
        FamilyGrid("linear_memory_m", memory_depths=(1, 1)),
        FamilyGrid("nearest_centroid"),
    )

    @classmethod
    def from_dict(cls, d: dict, dims: tuple) -> "EnumConfig":
        fams = []
        for f in d.get("families", []):
            fams.append(
                FamilyGrid(
                    family=f["family"],
                    coef_range=tuple(f.get("coef_range", (-1.0, 1.0))),
                    memory_depths=tuple(f.get("memory_depths", (0, 0))),
                    max_level=f.get("max_level"),
                    n_centroids=int(f.get("n_centroids", 2)),
                    anchor_range=tuple(f.get("anchor_range", (-1.0, 1.0))),
                )
            )
        return cls(dims=tuple(dims), families=tuple(fams) if fams else cls.families)


def _n_params(fam: FamilyGrid, m: int, dims: tuple) -> tuple[int, int]:
    """(number of anchor coordinates, number of coefficient coordinates)."""
    d_x, d_y, d_g = dims
    if fam.family == "constant":
        return 0, d_g
    if fam.family == "linear_memory_m":
        return 0, d_g * (1 + m * d_y + d_x)
    return fam.n_centroids * d_x, fam.n_centroids * d_g


def _new_points(level: int, n: int) -> list[tuple[int, ...]]:
    """Integer coordinates (units of 2^-(level-1)) of grid points first seen at `level`."""
    if level == 0:
        return [(0,) * n]
    h = 2 ** (level - 1)
    pts = itertools.product(range(-h, h + 1), repeat=n)
    if level == 1:
        return [p for p in pts if any(p)]
    return [p for p in pts if any(v % 2 for v in p)]


def _to_value(j: int, level: int, rng: tuple) -> float:
    lo, hi = rng
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    if level == 0:
        return mid
    return mid + half * j / 2 ** (level - 1)


def _groups(config: EnumConfig, shell: int) -> list[tuple[FamilyGrid, int, int]]:
    out = []
    for fam in config.families:
        lo, hi = fam.memory_depths
        for m in range(lo, hi + 1):
            level = shell - m
            if level < 0 or (fam.max_level is not None and level > fam.max_level):
                continue
            out.append((fam, m, level))
    return out


def _group_strategies(config: EnumConfig, fam: FamilyGrid, m: int, level: int):
    n_anchor, n_coef = _n_params(fam, m, config.dims)
    out = []
    for p in _new_points(level, n_anchor + n_coef):
        vals = [_to_value(j, level, fam.anchor_range) for j in p[:n_anchor]]
        vals += [_to_value(j, level, fam.coef_range) for j in p[n_anchor:]]
        out.append(StationaryStrategy(fam.family, tuple(vals), m, config.dims))
    return out


@lru_cache(maxsize=64)
def _shell(config: EnumConfig, shell: int) -> tuple:
    """Strategies of one shell, round-robin interleaved across (family, depth) groups."""
    lists = [_group_strategies(config, f, m, lv) for f, m, lv in _groups(config, shell)]
    out = []
    for row in itertools.zip_longest(*lists):
        out.extend(s for s in row if s is not None)
    return tuple(out)


def _shell_size(config: EnumConfig, shell: int) -> int:
    total = 0
    for fam, m, level in _groups(config, shell):
        n = sum(_n_params(fam, m, config.dims))
        if level == 0:
            total += 1
        elif level == 1:
            total += 3**n - 1
        else:
            total += (2**level + 1) ** n - (2 ** (level - 1) + 1) ** n
    return total


def _max_shell(config: EnumConfig) -> Optional[int]:
    if any(f.max_level is None for f in config.families):
        return None
    return max(f.max_level + f.memory_depths[1] for f in config.families)


def enumerate_strategy(index: int, config: EnumConfig = EnumConfig()) -> StationaryStrategy:
    """The index-th (1-based) strategy of the diagonal enumeration.

    Shell s collects, for every family and memory depth m, the grid points
    first appearing at level s - m; every (family, m, grid point) therefore
    shows up after finitely many indices.
    """
    if index < 1:
        raise InvalidArgumentError("index must be >= 1")
    last = _max_shell(config)
    remaining = index - 1
    shell = 0
    while True:
        if last is not None and shell > last:
            raise InvalidArgumentError(f"enumeration has fewer than {index} strategies")
        size = _shell_size(config, shell)
        if remaining < size:
            return _shell(config, shell)[remaining]
        remaining -= size
        shell += 1


def enumeration_bound(config: EnumConfig, level: int, memory: int) -> int:
    """Number of indices covering every grid strategy with level <= `level`, depth <= `memory`."""
    return sum(_shell_size(config, s) for s in range(level + memory + 1))


def enumerate_pool(config: EnumConfig, k_max: int) -> list[StationaryStrategy]:
    return [enumerate_strategy(i, config) for i in range(1, k_max + 1)]
