"""Randomized prediction: finite-support measures as predictions.

The randomized WAA is the ordinary engine run on `MeasureSpace`, whose
predictions are measures and whose loss is the expected loss.  Realized
outcomes are drawn by inverse-CDF sampling from counter-based random
streams, one stream for the aggregator and one per competitor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import History, InvalidArgumentError, LossFunction, as_point
from .experts import ExpertPool, StationaryStrategy

MASS_TOL = 1e-12


def _canonical_arrays(points: np.ndarray, masses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = masses > 0
    points, masses = points[keep], masses[keep]
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=masses, minlength=uniq.shape[0])
    return uniq, merged


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with finitely many atoms, kept in canonical form.

    Canonical form: positive masses, no repeated points, support sorted
    lexicographically.  Use `from_atoms` / `canonical` to build one.
    """

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        ms = np.asarray(self.masses, dtype=np.float64)
        if pts.ndim != 2 or ms.shape != (pts.shape[0],) or pts.shape[0] == 0:
            raise InvalidArgumentError("a measure needs one mass per point and at least one atom")
        if not (np.all(np.isfinite(pts)) and np.all(ms > 0)):
            raise InvalidArgumentError("atoms must be finite with positive mass")
        if abs(ms.sum() - 1.0) > MASS_TOL:
            raise InvalidArgumentError(f"total mass {ms.sum()!r} is not 1")
        pts.setflags(write=False)
        ms.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    @classmethod
    def canonical(cls, points, masses) -> "DiscreteMeasure":
        pts, ms = _canonical_arrays(np.asarray(points, dtype=float), np.asarray(masses, dtype=float))
        return cls(pts, ms)

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple]) -> "DiscreteMeasure":
        pts = np.array([as_point(p) for p, _ in atoms])
        return cls.canonical(pts, [m for _, m in atoms])

    @property
    def atoms(self) -> list[tuple[np.ndarray, float]]:
        return [(p, float(m)) for p, m in zip(self.points, self.masses)]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash((self.points.tobytes(), self.masses.tobytes()))

    def __repr__(self):
        body = " + ".join(f"{m:g}*d{tuple(p.tolist())}" for p, m in self.atoms)
        return f"DiscreteMeasure({body})"

    def to_json(self) -> str:
        return json.dumps([{"point": p.tolist(), "mass": m} for p, m in self.atoms])

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_atoms([(a["point"], a["mass"]) for a in json.loads(text)])


def canonicalize(mu: DiscreteMeasure) -> DiscreteMeasure:
    return DiscreteMeasure.canonical(mu.points, mu.masses)


def point_mass(point) -> DiscreteMeasure:
    p = as_point(point)
    return DiscreteMeasure(p[None, :], np.ones(1))


def expected_loss(loss: LossFunction, measure: DiscreteMeasure, observation) -> float:
    """sum over atoms of mass * loss(point, y)."""
    y = np.asarray(observation, dtype=np.float64)
    return float(np.sum(measure.masses * loss.batch(measure.points, y)))


def mixture_measure(weights, measures: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(measures),):
        raise InvalidArgumentError("one weight per measure required")
    if np.any(w <= 0) or abs(w.sum() - 1.0) > MASS_TOL:
        raise InvalidArgumentError("weights must be positive and sum to 1")
    pts = np.concatenate([m.points for m in measures])
    ms = np.concatenate([wk * m.masses for wk, m in zip(w, measures)])
    return DiscreteMeasure.canonical(pts, ms)


# -- random streams ---------------------------------------------------------

_BLOCK = 4096


@lru_cache(maxsize=256)
def _block(seed: int, stream: int, index: int) -> np.ndarray:
    key = np.random.SeedSequence([seed, stream]).generate_state(2, np.uint64)
    bitgen = np.random.Philox(key=key, counter=np.array([0, index, 0, 0], dtype=np.uint64))
    out = np.random.Generator(bitgen).random(_BLOCK)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RngState:
    """Position in a counter-based uniform stream; a pure function of its fields.

    Distinct `stream` numbers under one seed are independent Philox keys.
    """

    seed: int
    stream: int = 0
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    def split(self, stream: int) -> "RngState":
        return RngState(self.seed, stream, 0)


def uniform(state: RngState) -> tuple[float, RngState]:
    b, i = divmod(state.counter, _BLOCK)
    return float(_block(state.seed, state.stream, b)[i]), RngState(state.seed, state.stream, state.counter + 1)


def uniforms(state: RngState, n: int) -> tuple[np.ndarray, RngState]:
    out = np.empty(n)
    pos, filled = state.counter, 0
    while filled < n:
        b, i = divmod(pos, _BLOCK)
        take = min(_BLOCK - i, n - filled)
        out[filled : filled + take] = _block(state.seed, state.stream, b)[i : i + take]
        filled += take
        pos += take
    return out, RngState(state.seed, state.stream, pos)


def _inverse_cdf(masses: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(np.cumsum(masses), u, side="right"))
    return min(idx, masses.shape[0] - 1)


def sample(measure: DiscreteMeasure, state: RngState) -> tuple[np.ndarray, RngState]:
    """One inverse-CDF draw over the sorted support."""
    u, state = uniform(state)
    return measure.points[_inverse_cdf(measure.masses, u)], state


# -- LIL monitor ------------------------------------------------------------

LIL_MIN_ROUNDS = 16


class UndefinedStatisticError(ValueError):
    pass


@dataclass
class LilMonitor:
    """Running sum of realized-minus-expected losses."""

    loss_bound: float
    partial_sum: float = 0.0
    n: int = 0
    max_increment: float = 0.0

    def update(self, realized: float, expected: float) -> None:
        inc = realized - expected
        self.partial_sum += inc
        self.n += 1
        self.max_increment = max(self.max_increment, abs(inc))


def lil_statistic(monitor: LilMonitor) -> float:
    """|S_n| / sqrt(2 L^2 n ln ln n)."""
    if monitor.n < LIL_MIN_ROUNDS:
        raise UndefinedStatisticError(f"needs n >= {LIL_MIN_ROUNDS}, have {monitor.n}")
    n = monitor.n
    return abs(monitor.partial_sum) / math.sqrt(2.0 * monitor.loss_bound**2 * n * math.log(math.log(n)))


# -- randomized strategies and the measure prediction space -----------------


@dataclass(frozen=True)
class RandomizedStrategy:
    """D(sigma) = sum_a m_a delta_{base(sigma) + offset_a}."""

    base: StationaryStrategy
    offsets: tuple = ((0.0,),)
    masses: tuple = (1.0,)

    def __post_init__(self):
        off = tuple(tuple(float(v) for v in o) for o in self.offsets)
        ms = tuple(float(m) for m in self.masses)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "masses", ms)
        if len(off) != len(ms) or any(len(o) != self.base.d_gamma for o in off):
            raise InvalidArgumentError("offsets must match masses and the prediction dimension")
        if any(m <= 0 for m in ms) or abs(sum(ms) - 1.0) > MASS_TOL:
            raise InvalidArgumentError("kernel masses must be positive and sum to 1")

    @classmethod
    def spread(cls, base: StationaryStrategy, width: float) -> "RandomizedStrategy":
        """Point mass for width 0, else equal mass at base +- width along every axis."""
        if width == 0:
            return cls(base, ((0.0,) * base.d_gamma,), (1.0,))
        d = base.d_gamma
        return cls(base, ((-width,) * d, (width,) * d), (0.5, 0.5))

    @property
    def d_gamma(self) -> int:
        return self.base.d_gamma

    def predict(self, h: History) -> DiscreteMeasure:
        g = self.base.predict(h)
        return DiscreteMeasure.canonical(g + np.asarray(self.offsets), self.masses)


@dataclass
class MeasureBatch:
    """Un-normalized-form measures: points (..., K, A, d), masses (..., K, A)."""

    points: np.ndarray
    masses: np.ndarray

    def measure(self, *index) -> DiscreteMeasure:
        return DiscreteMeasure.canonical(self.points[index], self.masses[index])


@dataclass(frozen=True)
class TransformedRandomizedStrategy:
    base: object
    transform: object = field(compare=False)

    @property
    def d_gamma(self) -> int:
        return self.base.d_gamma

    def predict(self, h: History) -> DiscreteMeasure:
        mu = self.base.predict(h)
        out = self.transform(MeasureBatch(mu.points[None], mu.masses[None]))
        return DiscreteMeasure.canonical(out.points[0], out.masses[0])


class MeasurePool:
    """Pool of randomized strategies; batch transforms act on `MeasureBatch`."""

    def __init__(self, strategies: Sequence[RandomizedStrategy], priors=None, transforms=()):
        self.strategies = list(strategies)
        self._bases = ExpertPool([s.base for s in self.strategies], priors)
        self.priors = self._bases.priors
        self.transforms = tuple(transforms)
        width = max(len(s.masses) for s in self.strategies)
        d = self.strategies[0].d_gamma
        self._offsets = np.zeros((len(self.strategies), width, d))
        self._masses = np.zeros((len(self.strategies), width))
        for k, s in enumerate(self.strategies):
            a = len(s.masses)
            self._offsets[k, :a] = s.offsets
            self._masses[k, :a] = s.masses

    def __len__(self) -> int:
        return len(self.strategies)

    @property
    def size(self) -> int:
        return len(self.strategies)

    @property
    def memory(self) -> int:
        return self._bases.memory

    @property
    def dims(self) -> tuple:
        return self._bases.dims

    def with_transform(self, transform) -> "MeasurePool":
        return MeasurePool(self.strategies, self.priors, self.transforms + (transform,))

    def strategy(self, k: int):
        s = self.strategies[k]
        for t in self.transforms:
            s = TransformedRandomizedStrategy(s, t)
        return s

    def _wrap(self, base_preds: np.ndarray) -> MeasureBatch:
        pts = base_preds[..., None, :] + self._offsets
        ms = np.broadcast_to(self._masses, pts.shape[:-1]).copy()
        out = MeasureBatch(pts, ms)
        for t in self.transforms:
            out = t(out)
        return out

    def predict_all(self, h: History) -> MeasureBatch:
        return self._wrap(self._bases.predict_all(h))

    def predict_features(self, phi: np.ndarray) -> MeasureBatch:
        return self._wrap(self._bases.predict_features(phi))

    def predict_batch(self, signals: np.ndarray, observations: np.ndarray) -> MeasureBatch:
        return self._wrap(self._bases.predict_batch(signals, observations))


@dataclass
class FlatMixture:
    """Batch of mixtures, one row per round, atoms not merged."""

    points: np.ndarray  # (N, M, d)
    masses: np.ndarray  # (N, M)

    def measure(self, n: int) -> DiscreteMeasure:
        return DiscreteMeasure.canonical(self.points[n], self.masses[n])


class MeasureSpace:
    """Prediction space of finite-support measures with expected loss."""

    def __init__(self, loss: LossFunction):
        self.loss_fn = loss

    def losses(self, preds: MeasureBatch, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)[..., None, None, :]
        return np.sum(preds.masses * self.loss_fn.batch(preds.points, y), axis=-1)

    def mix(self, p: np.ndarray, preds: MeasureBatch):
        ms = p[..., None] * preds.masses
        lead = ms.shape[:-2]
        pts = preds.points.reshape(lead + (-1, preds.points.shape[-1]))
        ms = ms.reshape(lead + (-1,))
        if not lead:
            mu = DiscreteMeasure.canonical(pts, ms)
            # unmerged atoms, so the loss sums exactly like the batch path
            object.__setattr__(mu, "_flat", (pts, ms))
            return mu
        return FlatMixture(pts, ms)

    def loss(self, prediction: DiscreteMeasure, y) -> float:
        flat = getattr(prediction, "_flat", None)
        if flat is None:
            return expected_loss(self.loss_fn, prediction, y)
        pts, ms = flat
        lam = self.loss_fn.batch(pts[None], np.asarray(y, dtype=np.float64)[None, None, :])
        return float(np.sum(ms[None] * lam, axis=-1)[0])

    def own_losses(self, gammas: FlatMixture, ys: np.ndarray) -> np.ndarray:
        lam = self.loss_fn.batch(gammas.points, ys[:, None, :])
        return np.sum(gammas.masses * lam, axis=-1)


def sample_rows(points: np.ndarray, masses: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws, one per row, over each row's lexicographically sorted support.

    ``points`` (N, M, d), ``masses`` (N, M), ``u`` (N,).  Zero-mass atoms and
    repeated points never change which point a draw hits, except exactly on
    cumulative-sum boundaries.
    """
    n, m, d = points.shape
    if d == 1:
        order = np.argsort(points[..., 0], axis=1, kind="stable")
    else:
        order = np.stack([np.lexsort(points[i].T[::-1]) for i in range(n)])
    rows = np.arange(n)[:, None]
    sorted_masses = masses[rows, order]
    cdf = np.cumsum(sorted_masses, axis=1)
    # first atom whose cdf exceeds u; it always has positive mass
    idx = np.sum(cdf <= u[:, None], axis=1)
    last_positive = m - 1 - np.argmax(sorted_masses[:, ::-1] > 0, axis=1)
    idx = np.where(idx >= m, last_positive, idx)
    return points[np.arange(n), order[np.arange(n), idx]]
