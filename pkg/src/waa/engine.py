"""Weak Aggregating Algorithm: exponential weights with learning rate 1/sqrt(n).

Weights are kept in the log domain: log w_n^(k) = ln q_k - eta_n L_{n-1}^(k)
with eta_n = 1/sqrt(n), so beta_n = exp(-eta_n).  Normalization uses a
max shift.  The same kernels drive the round-by-round `WaaState` and the
vectorized `run_batch`, which is only valid for environments that never
look at the learner's predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import History, InvalidArgumentError, InvalidStateError, LossFunction, Transcript, as_point
from .experts import ExpertPool, replay_cumulative_loss

TOL = 1e-9


def sqrt_rate(n: int) -> float:
    return 1.0 / math.sqrt(n)


def frozen_beta_rate(n: int) -> float:
    """Mutation: beta_n stuck at 0.5 for every round."""
    return math.log(2.0)


def within(lhs: float, rhs: float, tol: float = TOL) -> bool:
    return lhs <= rhs + tol * max(1.0, abs(rhs))


def logsumexp(a: np.ndarray) -> np.ndarray:
    """log sum exp along the last axis with a max shift."""
    m = np.max(a, axis=-1)
    return m + np.log(np.sum(np.exp(a - m[..., None]), axis=-1))


def normalize_log_weights(lw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(p, log p) along the last axis."""
    m = np.max(lw, axis=-1)
    e = np.exp(lw - m[..., None])
    s = np.sum(e, axis=-1)
    return e / s[..., None], lw - (m + np.log(s))[..., None]


def lemma5_bound_value(loss_bound: float, prior, n_rounds: int):
    """(L^2 e^L + ln(1/q_K)) sqrt(N); infinite once e^L overflows."""
    growth = loss_bound**2 * math.exp(loss_bound) if loss_bound < 700.0 else math.inf
    return (growth - np.log(prior)) * math.sqrt(n_rounds)


class PointSpace:
    """Predictions are points of R^d; losses come straight from the loss function."""

    def __init__(self, loss: LossFunction):
        self.loss_fn = loss

    def losses(self, preds: np.ndarray, y: np.ndarray) -> np.ndarray:
        """preds (..., K, d) against y (..., d) -> (..., K)."""
        return self.loss_fn.batch(preds, np.asarray(y)[..., None, :])

    def mix(self, p: np.ndarray, preds: np.ndarray) -> np.ndarray:
        return np.sum(p[..., None] * preds, axis=-2)

    def loss(self, prediction, y) -> float:
        return self.loss_fn(prediction, y)

    def own_losses(self, gammas: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return self.loss_fn.batch(gammas, ys)


@dataclass
class RoundReport:
    n: int
    beta: float
    normalized_weights: np.ndarray
    prediction: object
    per_expert_losses: Optional[np.ndarray] = None
    own_loss: Optional[float] = None
    mixture_loss: Optional[float] = None
    cum_own_loss: Optional[float] = None
    best_expert: Optional[int] = None
    best_expert_loss: Optional[float] = None
    lemma9_lhs: Optional[float] = None
    lemma9_rhs: Optional[float] = None
    lemma5_excess_best: Optional[float] = None
    lemma5_bound_best: Optional[float] = None
    lemma5_min_margin: Optional[float] = None
    expert_predictions: object = None

    @property
    def complete(self) -> bool:
        return self.own_loss is not None


class WaaState:
    """Single-writer game state; call begin_round and end_round alternately.

    ``prefix`` optionally supplies the last completed round (history,
    observation) of an earlier game the experts may keep reading (used on
    restarts); ``initial_losses`` seeds L_0^(k) for experts activated
    mid-game by replay.
    """

    def __init__(
        self,
        pool: ExpertPool,
        loss: LossFunction,
        space=None,
        prefix: Optional[tuple] = None,
        learning_rate: Callable[[int], float] = sqrt_rate,
        loss_bound: Optional[float] = None,
        initial_losses: Optional[np.ndarray] = None,
    ):
        if pool is None or pool.size == 0:
            raise InvalidStateError("empty pool")
        self.pool = pool
        self.loss = loss
        self.space = space if space is not None else PointSpace(loss)
        self.learning_rate = learning_rate
        self.loss_bound = loss_bound
        self.round = 1
        k = pool.size
        self.cumulative_losses = np.zeros(k) if initial_losses is None else np.array(initial_losses, dtype=float)
        self.own_cumulative_loss = 0.0
        self.transcript = Transcript()
        self.reports: list[RoundReport] = []
        self._prefix = prefix
        self._pending = None
        self._mix_sum = 0.0
        self._mean_sum = 0.0
        self._lemma9_valid = initial_losses is None
        self._log_q = np.log(pool.priors)

    @property
    def rounds_completed(self) -> int:
        return self.round - 1

    @property
    def last_round(self) -> Optional[tuple]:
        """(history, observation) of the most recent completed round."""
        return self._prefix

    def begin_round(self, signal) -> tuple[object, RoundReport]:
        if self._pending is not None:
            raise InvalidStateError("begin_round called twice without end_round")
        x = as_point(signal)
        h = History.start(x) if self._prefix is None else self._prefix[0].extend(self._prefix[1], x)
        n = self.round
        eta = self.learning_rate(n)
        p, log_p = normalize_log_weights(self._log_q - eta * self.cumulative_losses)
        preds = self.pool.predict_all(h)
        gamma = self.space.mix(p, preds)
        report = RoundReport(n=n, beta=math.exp(-eta), normalized_weights=p, prediction=gamma,
                             expert_predictions=preds)
        self._pending = (h, preds, gamma, p, log_p, eta, report)
        return gamma, report

    def end_round(self, observation) -> RoundReport:
        if self._pending is None:
            raise InvalidStateError("end_round called before begin_round")
        y = np.asarray(observation, dtype=np.float64)
        if y.shape != (self.loss.obs_dim,):
            raise InvalidArgumentError(f"observation shape {y.shape} does not match loss arity")
        y = as_point(y)
        h, preds, gamma, p, log_p, eta, report = self._pending
        l = self.space.losses(preds, y)
        own = self.space.loss(gamma, y)
        self.cumulative_losses = self.cumulative_losses + l
        self.own_cumulative_loss += own
        mixture_loss = float(np.sum(p * l))
        self._mix_sum += mixture_loss
        self._mean_sum += float(logsumexp(log_p - eta * l)) / eta
        term3 = -float(logsumexp(self._log_q - eta * self.cumulative_losses)) / eta

        report.per_expert_losses = l
        report.own_loss = own
        report.mixture_loss = mixture_loss
        report.cum_own_loss = self.own_cumulative_loss
        best = int(np.argmin(self.cumulative_losses))
        report.best_expert = best
        report.best_expert_loss = float(self.cumulative_losses[best])
        report.lemma9_lhs = self.own_cumulative_loss
        report.lemma9_rhs = self._mix_sum + self._mean_sum + term3 if self._lemma9_valid else math.nan
        report.lemma5_excess_best = self.own_cumulative_loss - report.best_expert_loss
        if self.loss_bound is not None:
            bounds = lemma5_bound_value(self.loss_bound, self.pool.priors, self.round)
            excess = self.own_cumulative_loss - self.cumulative_losses
            report.lemma5_bound_best = float(bounds[best])
            report.lemma5_min_margin = float(np.min(bounds - excess))

        self.transcript.append(h, y)
        self._prefix = (h, y)
        self._pending = None
        self.reports.append(report)
        self.round += 1
        return report

    def activate(self, strategy, prior: float) -> int:
        """Add an expert mid-game, seeding its cumulative loss by exact replay.

        Returns the new expert's index.  The regret-identity bookkeeping is disabled
        afterwards since its accumulated terms assumed a fixed pool.
        """
        if self._pending is not None:
            raise InvalidStateError("cannot activate mid-round")
        raw = np.append(self.pool.priors, prior)
        self.pool = ExpertPool(self.pool.strategies + [strategy], raw, self.pool.transforms)
        self._log_q = np.log(self.pool.priors)
        past = replay_cumulative_loss(self.pool.strategy(self.pool.size - 1), self.transcript, self.space.loss)
        self.cumulative_losses = np.append(self.cumulative_losses, past)
        self._lemma9_valid = False
        return self.pool.size - 1


def lemma9_check(state: WaaState) -> tuple[float, float, bool]:
    if not state.reports:
        raise InvalidStateError("no completed rounds")
    r = state.reports[-1]
    return r.lemma9_lhs, r.lemma9_rhs, within(r.lemma9_lhs, r.lemma9_rhs)


def lemma5_bound(state: WaaState, expert_index: int, loss_bound: float) -> tuple[float, float, bool]:
    """(L_N - L_N^(K), (L^2 e^L + ln 1/q_K) sqrt(N), holds); K is 0-based."""
    if not 0 <= expert_index < state.pool.size:
        raise InvalidArgumentError(f"unknown expert index {expert_index}")
    n = state.rounds_completed
    if n == 0:
        return 0.0, 0.0, True
    excess = state.own_cumulative_loss - float(state.cumulative_losses[expert_index])
    bound = float(lemma5_bound_value(loss_bound, state.pool.priors[expert_index], n))
    return excess, bound, within(excess, bound)


def generalized_mean_term(log_q: np.ndarray, cumulative: np.ndarray, n: int, rate=sqrt_rate) -> float:
    """log_{beta_n} sum_k q_k beta_n^{L^(k)}."""
    eta = rate(n)
    return -float(logsumexp(log_q - eta * np.asarray(cumulative))) / eta


def mean_comparison_check(q, cumulative, n: int) -> bool:
    """log_{beta_n} sum q beta_n^L <= log_{beta_{n+1}} sum q beta_{n+1}^L (+1e-9)."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    log_q = np.log(np.asarray(q, dtype=float))
    lhs = generalized_mean_term(log_q, cumulative, n)
    rhs = generalized_mean_term(log_q, cumulative, n + 1)
    return lhs <= rhs + TOL


def average_regret(state: WaaState, competitor) -> float:
    n = state.rounds_completed
    if n == 0:
        raise InvalidStateError("no completed rounds")
    theirs = replay_cumulative_loss(competitor, state.transcript, state.space.loss)
    return (state.own_cumulative_loss - theirs) / n


@dataclass
class BatchRun:
    """Per-round arrays of a vectorized WAA run (row n-1 is round n)."""

    beta: np.ndarray
    weights: np.ndarray
    predictions: object
    expert_losses: np.ndarray
    own_losses: np.ndarray
    cum_own: np.ndarray
    cum_expert: np.ndarray
    mixture_losses: np.ndarray
    lemma9_lhs: np.ndarray
    lemma9_rhs: np.ndarray
    priors: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.own_losses.shape[0]

    def lemma5(self, loss_bound: float) -> tuple[np.ndarray, np.ndarray]:
        """(excess, bound) arrays of shape (N, K)."""
        n = np.arange(1, self.horizon + 1)
        excess = self.cum_own[:, None] - self.cum_expert
        bound = (loss_bound**2 * math.exp(loss_bound) - np.log(self.priors))[None, :] * np.sqrt(n)[:, None]
        return excess, bound


def run_batch(pool: ExpertPool, space, signals: np.ndarray, observations: np.ndarray,
              learning_rate: Callable[[int], float] = sqrt_rate, expert_preds=None) -> BatchRun:
    """All rounds at once for an oblivious environment (observations fixed in advance)."""
    signals = np.asarray(signals, dtype=float)
    observations = np.asarray(observations, dtype=float)
    n_rounds = signals.shape[0]
    preds = pool.predict_batch(signals, observations) if expert_preds is None else expert_preds
    l = space.losses(preds, observations)
    cum = np.cumsum(l, axis=0)
    prev = np.vstack([np.zeros((1, l.shape[1])), cum[:-1]])
    eta = np.array([learning_rate(n) for n in range(1, n_rounds + 1)])
    log_q = np.log(pool.priors)
    p, log_p = normalize_log_weights(log_q[None, :] - eta[:, None] * prev)
    gamma = space.mix(p, preds)
    own = space.own_losses(gamma, observations)
    mixture = np.sum(p * l, axis=-1)
    mean_terms = logsumexp(log_p - eta[:, None] * l) / eta
    term3 = -logsumexp(log_q[None, :] - eta[:, None] * cum) / eta
    cum_own = np.cumsum(own)
    return BatchRun(
        beta=np.array([math.exp(-e) for e in eta]),
        weights=p,
        predictions=gamma,
        expert_losses=l,
        own_losses=own,
        cum_own=cum_own,
        cum_expert=cum,
        mixture_losses=mixture,
        lemma9_lhs=cum_own,
        lemma9_rhs=np.cumsum(mixture) + np.cumsum(mean_terms) + term3,
        priors=pool.priors,
    )


def run_adaptive(pool, space, signals: np.ndarray, respond: Callable[[int, object], np.ndarray],
                 learning_rate: Callable[[int], float] = sqrt_rate) -> BatchRun:
    """Round-by-round WAA against a reactive Reality: ``respond(n, gamma_n) -> y_n``.

    Same arithmetic, in the same order, as driving `WaaState` by hand, without
    building histories; the feature row is updated in place.
    """
    signals = np.asarray(signals, dtype=float)
    n_rounds, d_x = signals.shape
    d_y = pool.dims[1]
    memory = pool.memory
    k = pool.size
    log_q = np.log(pool.priors)
    phi = np.zeros(1 + memory * d_y + d_x)
    phi[0] = 1.0
    cum = np.zeros(k)
    cum_own = mix_sum = mean_sum = 0.0
    beta = np.empty(n_rounds)
    weights = np.empty((n_rounds, k))
    l_all = np.empty((n_rounds, k))
    cum_all = np.empty((n_rounds, k))
    own = np.empty(n_rounds)
    cum_own_all = np.empty(n_rounds)
    mixture = np.empty(n_rounds)
    rhs = np.empty(n_rounds)
    ys = np.empty((n_rounds, d_y))
    gammas, preds_all = [], []
    for i in range(n_rounds):
        n = i + 1
        phi[phi.shape[0] - d_x :] = signals[i]
        eta = learning_rate(n)
        p, log_p = normalize_log_weights(log_q - eta * cum)
        preds = pool.predict_features(phi)
        gamma = space.mix(p, preds)
        y = as_point(respond(n, gamma))
        l = space.losses(preds, y)
        o = space.loss(gamma, y)
        cum = cum + l
        cum_own += o
        m = float(np.sum(p * l))
        mix_sum += m
        mean_sum += float(logsumexp(log_p - eta * l)) / eta
        term3 = -float(logsumexp(log_q - eta * cum)) / eta
        beta[i] = math.exp(-eta)
        weights[i], l_all[i], cum_all[i] = p, l, cum
        own[i], cum_own_all[i], mixture[i] = o, cum_own, m
        rhs[i] = mix_sum + mean_sum + term3
        ys[i] = y
        gammas.append(gamma)
        preds_all.append(preds)
        if memory:
            phi[1 + d_y : 1 + memory * d_y] = phi[1 : 1 + (memory - 1) * d_y].copy()
            phi[1 : 1 + d_y] = y
    return BatchRun(
        beta=beta,
        weights=weights,
        predictions=gammas,
        expert_losses=l_all,
        own_losses=own,
        cum_own=cum_own_all,
        cum_expert=cum_all,
        mixture_losses=mixture,
        lemma9_lhs=cum_own_all.copy(),
        lemma9_rhs=rhs,
        priors=pool.priors,
        extra={"observations": ys, "expert_predictions": preds_all},
    )
