import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waa.core import History, InvalidArgumentError, absolute_norm, squared_norm
from waa.engine import PointSpace, WaaState, run_batch
from waa.experts import EnumConfig, ExpertPool, StationaryStrategy, enumerate_pool
from waa.randomized import (
    DiscreteMeasure,
    LilMonitor,
    MeasurePool,
    MeasureSpace,
    RandomizedStrategy,
    RngState,
    UndefinedStatisticError,
    canonicalize,
    expected_loss,
    lil_statistic,
    mixture_measure,
    point_mass,
    sample,
    sample_rows,
    uniforms,
)

pts = st.floats(-10, 10, allow_nan=False)


@st.composite
def measures(draw, max_atoms=6):
    n = draw(st.integers(1, max_atoms))
    points = [[draw(pts)] for _ in range(n)]
    raw = np.array([draw(st.floats(0.05, 1.0)) for _ in range(n)])
    return DiscreteMeasure.canonical(points, raw / raw.sum())


class TestMeasures:
    def test_expected_loss_two_point(self):
        mu = DiscreteMeasure.from_atoms([([0.0], 0.5), ([1.0], 0.5)])
        assert expected_loss(squared_norm(), mu, [0.0]) == 0.5
        assert expected_loss(absolute_norm(), mu, [0.5]) == 0.5

    def test_point_mass_matches_loss(self):
        assert expected_loss(squared_norm(), point_mass([3.0]), [1.0]) == 4.0

    def test_mixture_merges_atoms(self):
        a = DiscreteMeasure.from_atoms([([0.0], 1.0)])
        b = DiscreteMeasure.from_atoms([([0.0], 0.5), ([2.0], 0.5)])
        m = mixture_measure([0.5, 0.5], [a, b])
        assert m.points[:, 0].tolist() == [0.0, 2.0]
        assert m.masses.tolist() == [0.75, 0.25]

    def test_mixture_validation(self):
        a = point_mass([0.0])
        with pytest.raises(InvalidArgumentError):
            mixture_measure([0.4, 0.4], [a, a])
        with pytest.raises(InvalidArgumentError):
            mixture_measure([1.0], [a, a])

    def test_invalid_measures(self):
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure.from_atoms([([0.0], 0.6), ([1.0], 0.6)])
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure.canonical([[np.nan]], [1.0])
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure(np.zeros((0, 1)), np.zeros(0))

    def test_canonical_form(self):
        mu = DiscreteMeasure.canonical([[2.0], [0.0], [2.0], [1.0]], [0.25, 0.25, 0.25, 0.25])
        assert mu.points[:, 0].tolist() == [0.0, 1.0, 2.0]
        assert mu.masses.tolist() == [0.25, 0.25, 0.5]

    @given(measures())
    def test_canonical_idempotent(self, mu):
        assert canonicalize(mu) == mu
        assert canonicalize(canonicalize(mu)) == canonicalize(mu)

    @given(measures())
    def test_json_round_trip(self, mu):
        assert DiscreteMeasure.from_json(mu.to_json()) == mu

    @given(measures(), measures(), st.floats(0.01, 0.99), pts)
    def test_expected_loss_linear(self, a, b, w, y):
        mix = mixture_measure([w, 1 - w], [a, b])
        for loss in (squared_norm(), absolute_norm()):
            lhs = expected_loss(loss, mix, [y])
            rhs = w * expected_loss(loss, a, [y]) + (1 - w) * expected_loss(loss, b, [y])
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestSampling:
    def test_frequency(self):
        mu = DiscreteMeasure.from_atoms([([0.0], 0.5), ([1.0], 0.5)])
        state, hits = RngState(7), 0
        for _ in range(100_000):
            g, state = sample(mu, state)
            hits += g[0] == 1.0
        assert abs(hits / 100_000 - 0.5) <= 0.01

    def test_deterministic_and_pure(self):
        mu = DiscreteMeasure.from_atoms([([0.0], 0.3), ([1.0], 0.3), ([2.0], 0.4)])
        s = RngState(3, 1, 10)
        a, s2 = sample(mu, s)
        b, s3 = sample(mu, s)
        assert np.array_equal(a, b) and s2 == s3 and s2.counter == 11

    def test_streams_independent(self):
        a, _ = uniforms(RngState(1, 0), 1000)
        b, _ = uniforms(RngState(1, 1), 1000)
        assert not np.array_equal(a, b)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_uniforms_cross_blocks(self):
        s = RngState(9)
        bulk, end = uniforms(s, 10_000)
        first, mid = uniforms(s, 4_000)
        rest, end2 = uniforms(mid, 6_000)
        assert np.array_equal(bulk, np.concatenate([first, rest])) and end == end2

    def test_seed_range(self):
        with pytest.raises(InvalidArgumentError):
            RngState(-1)

    @settings(max_examples=50)
    @given(measures(), st.floats(0, 1, exclude_max=True))
    def test_sample_rows_matches_single(self, mu, u):
        cdf = np.cumsum(mu.masses)
        expect = mu.points[min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)]
        got = sample_rows(mu.points[None], mu.masses[None], np.array([u]))[0]
        assert np.array_equal(got, expect)


class TestLil:
    def test_unit_case(self):
        m = LilMonitor(loss_bound=1.0)
        for _ in range(16):
            m.update(0.5, 0.4375)
        expect = 1.0 / math.sqrt(2 * 16 * math.log(math.log(16)))
        assert lil_statistic(m) == pytest.approx(expect, rel=1e-12)

    def test_undefined_below_16(self):
        m = LilMonitor(loss_bound=1.0)
        for _ in range(15):
            m.update(1.0, 0.0)
        with pytest.raises(UndefinedStatisticError):
            lil_statistic(m)


class TestMeasurePool:
    def test_spread_prediction(self):
        s = RandomizedStrategy.spread(StationaryStrategy("constant", (0.5,)), 0.25)
        mu = s.predict(History.start([0.0]))
        assert mu.points[:, 0].tolist() == [0.25, 0.75] and mu.masses.tolist() == [0.5, 0.5]

    def test_kernel_validation(self):
        with pytest.raises(InvalidArgumentError):
            RandomizedStrategy(StationaryStrategy("constant", (0.0,)), ((0.0,), (1.0,)), (0.5, 0.6))

    def test_point_mass_pool_matches_point_engine(self):
        """With zero spread the randomized WAA is the ordinary WAA."""
        rng = np.random.default_rng(8)
        strategies = enumerate_pool(EnumConfig(), 10)
        pool = MeasurePool([RandomizedStrategy.spread(s, 0.0) for s in strategies])
        xs, ys = rng.uniform(-1, 1, (30, 1)), rng.uniform(-1, 1, (30, 1))
        a = run_batch(pool, MeasureSpace(squared_norm()), xs, ys)
        b = run_batch(ExpertPool(strategies), PointSpace(squared_norm()), xs, ys)
        assert np.allclose(a.weights, b.weights, rtol=0, atol=1e-12)
        assert np.all(a.cum_own >= b.cum_own - 1e-9)  # Jensen: expected loss >= loss of the mean

    def test_sequential_measure_prediction(self):
        strategies = enumerate_pool(EnumConfig(), 4)
        pool = MeasurePool([RandomizedStrategy.spread(s, 0.1) for s in strategies])
        state = WaaState(pool, absolute_norm(), MeasureSpace(absolute_norm()))
        gamma, rep = state.begin_round([0.0])
        assert isinstance(gamma, DiscreteMeasure)
        assert gamma.masses.sum() == pytest.approx(1.0, abs=1e-12)
        rep = state.end_round([0.3])
        assert rep.own_loss == pytest.approx(float(np.sum(rep.normalized_weights * rep.per_expert_losses)), rel=1e-12)
