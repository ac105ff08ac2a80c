"""Reality: seeded generators of signals and observations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CompactBall, InvalidArgumentError, as_point, norm_rows
from .experts import project_onto

ENV_KINDS = ("iid_gaussian", "ar1", "drifting_sine", "adversarial_worstcase", "escaping")


def extreme_points(bounds: CompactBall) -> np.ndarray:
    """Candidate worst-case observations: c -/+ r e_i, sorted lexicographically."""
    d = bounds.dim
    eye = np.eye(d)
    pts = np.concatenate([bounds.center - bounds.radius * eye, bounds.center + bounds.radius * eye])
    pts = np.unique(pts, axis=0)
    return pts


def adversarial_next(past, current_prediction, bounds: CompactBall, loss: Callable,
                     candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """The candidate extreme point maximizing loss(prediction, y); ties go to the
    lexicographically smallest candidate.  ``past`` is unused by this adversary."""
    best, best_val = None, -math.inf
    for y in extreme_points(bounds) if candidates is None else candidates:
        v = loss(current_prediction, y)
        if v > best_val:
            best, best_val = y, v
    return as_point(best)


@dataclass
class EnvironmentSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise InvalidArgumentError(f"unknown environment kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentSpec":
        return cls(d["kind"], dict(d.get("params", {})), int(d.get("seed", 0)))


class Environment:
    """Sequential generator; call `signal(n)` then `observation(n, prediction)` for n = 1, 2, ...

    Outputs are a pure function of the seed and the round (and, for the
    adversary, of the predictions shown to it).
    """

    def __init__(self, spec: EnvironmentSpec, d_x: int, d_y: int,
                 obs_region: Optional[CompactBall] = None, loss: Optional[Callable] = None):
        self.spec = spec
        self.d_x, self.d_y = d_x, d_y
        self.obs_region = obs_region
        self.loss = loss
        ss = np.random.SeedSequence([spec.seed, 0x5EED])
        sig_seq, obs_seq = ss.spawn(2)
        self._sig_rng = np.random.Generator(np.random.Philox(sig_seq))
        self._obs_rng = np.random.Generator(np.random.Philox(obs_seq))
        self._prev_y = None
        self._round = 0
        p = spec.params
        if spec.kind == "adversarial_worstcase" and (obs_region is None or loss is None):
            raise InvalidArgumentError("the adversary needs bounds and a loss")
        if spec.kind in ("iid_gaussian", "ar1", "drifting_sine") and obs_region is None:
            raise InvalidArgumentError(f"{spec.kind} needs an observation region")
        self._candidates = extreme_points(obs_region) if obs_region is not None else None
        self._mean = np.broadcast_to(np.asarray(p.get("mean", 0.0), dtype=float), (d_y,))

    @property
    def oblivious(self) -> bool:
        return self.spec.kind != "adversarial_worstcase"

    def _clip(self, y: np.ndarray) -> np.ndarray:
        if self.obs_region is None:
            return y
        if norm_rows(y - self.obs_region.center) <= self.obs_region.radius:
            return y
        return project_onto(self.obs_region, y[None])[0]

    def signal(self, n: int) -> np.ndarray:
        if n != self._round + 1:
            raise InvalidArgumentError("rounds must be generated in order")
        self._round = n
        kind, p = self.spec.kind, self.spec.params
        if kind == "escaping":
            return np.zeros(self.d_x)
        x = self._sig_rng.uniform(-1.0, 1.0, self.d_x)
        if kind == "drifting_sine":
            x[0] = math.sin(2.0 * math.pi * n / float(p.get("period", 100.0)))
        return x

    def observation(self, n: int, prediction=None) -> np.ndarray:
        kind, p = self.spec.kind, self.spec.params
        if kind == "adversarial_worstcase":
            return adversarial_next(None, prediction, self.obs_region, self.loss, self._candidates)
        if kind == "escaping":
            cap = p.get("cap")
            try:
                v = float(p.get("base", 1.0)) * float(p.get("factor", 3.0)) ** (n - 1)
            except OverflowError:
                v = math.inf
            if cap is not None:
                v = min(v, float(cap))
            if not v < 1e150:
                raise InvalidArgumentError(f"escaping observation overflows at round {n}; set params.cap")
            return np.full(self.d_y, v)
        z = self._obs_rng.standard_normal(self.d_y)
        sd = float(p.get("sd", 0.1))
        if kind == "iid_gaussian":
            y = self._mean + sd * z
        elif kind == "ar1":
            phi = float(p.get("phi", 0.5))
            prev = self._mean if self._prev_y is None else self._prev_y
            y = self._mean + phi * (prev - self._mean) + sd * z
        else:
            amp = float(p.get("amplitude", 0.4))
            y = self._mean + amp * math.sin(2.0 * math.pi * n / float(p.get("period", 100.0))) + sd * z
        y = self._clip(y)
        self._prev_y = y
        return y

    def generate(self, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        """(signals, observations) for rounds 1..horizon of an oblivious environment.

        Draws in bulk; the values equal those of calling `signal` and
        `observation` round by round on a fresh environment.
        """
        if not self.oblivious:
            raise InvalidArgumentError("adaptive environments cannot be pre-generated")
        if self._round != 0:
            raise InvalidArgumentError("generate needs a fresh environment")
        kind, p = self.spec.kind, self.spec.params
        if kind == "escaping":
            xs = np.empty((horizon, self.d_x))
            ys = np.empty((horizon, self.d_y))
            for n in range(1, horizon + 1):
                xs[n - 1] = self.signal(n)
                ys[n - 1] = self.observation(n)
            return xs, ys
        period = float(p.get("period", 100.0))
        waves = np.array([math.sin(2.0 * math.pi * n / period) for n in range(1, horizon + 1)])
        xs = self._sig_rng.uniform(-1.0, 1.0, (horizon, self.d_x))
        if kind == "drifting_sine":
            xs[:, 0] = waves
        z = self._obs_rng.standard_normal((horizon, self.d_y))
        sd = float(p.get("sd", 0.1))
        if kind == "ar1":
            phi = float(p.get("phi", 0.5))
            ys = np.empty((horizon, self.d_y))
            prev = self._mean
            for i in range(horizon):
                prev = self._clip(self._mean + phi * (prev - self._mean) + sd * z[i])
                ys[i] = prev
        else:
            if kind == "iid_gaussian":
                raw = self._mean + sd * z
            else:
                raw = self._mean + float(p.get("amplitude", 0.4)) * waves[:, None] + sd * z
            ys = raw if self.obs_region is None else project_onto(self.obs_region, raw)
        self._round = horizon
        self._prev_y = ys[-1].copy()
        return xs, ys


def make_environment(spec: EnvironmentSpec, d_x: int, d_y: int, obs_region=None, loss=None) -> Environment:
    return Environment(spec, d_x, d_y, obs_region, loss)
