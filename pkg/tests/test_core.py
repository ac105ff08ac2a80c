import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waa.core import (
    CompactBall,
    History,
    InvalidArgumentError,
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

coords = st.floats(-50, 50, allow_nan=False)


def _grid_max(loss, g_ball, y_ball, n=201):
    """Brute-force max |loss| over a 1-D grid of both intervals."""
    gs = np.linspace(g_ball.center[0] - g_ball.radius, g_ball.center[0] + g_ball.radius, n)
    ys = np.linspace(y_ball.center[0] - y_ball.radius, y_ball.center[0] + y_ball.radius, n)
    return max(abs(loss([g], [y])) for g in gs for y in ys)


class TestPoint:
    def test_read_only(self):
        p = as_point([1.0, 2.0])
        with pytest.raises(ValueError):
            p[0] = 3.0

    @pytest.mark.parametrize("bad", [[np.nan], [np.inf, 0.0], [-np.inf]])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidArgumentError):
            as_point(bad)

    def test_dimension_check(self):
        with pytest.raises(InvalidArgumentError):
            as_point([1.0, 2.0], dim=3)


class TestLossEval:
    def test_zero_distance(self):
        assert loss_eval(squared_norm(), [0.0], [0.0]) == 0.0

    def test_three_four_five(self):
        assert loss_eval(absolute_norm(2), [3.0, 4.0], [0.0, 0.0]) == 5.0

    def test_squared_half(self):
        assert loss_eval(squared_norm(), [0.5], [0.0]) == 0.25

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            loss_eval(squared_norm(2), [0.0], [0.0, 1.0])
        with pytest.raises(InvalidArgumentError):
            loss_eval(absolute_norm(1), [0.0], [0.0, 1.0])

    @given(st.lists(coords, min_size=3, max_size=3), st.lists(coords, min_size=3, max_size=3),
           st.sampled_from(["squared_norm", "absolute_norm"]))
    def test_symmetry_is_exact(self, g, y, kind):
        loss = make_loss(kind, 3)
        assert loss(g, y) == loss(y, g)

    @given(st.lists(coords, min_size=2, max_size=2), st.lists(coords, min_size=2, max_size=2),
           st.lists(coords, min_size=2, max_size=2), st.floats(0, 1),
           st.sampled_from(["squared_norm", "absolute_norm"]))
    def test_convex_in_prediction(self, g1, g2, y, t, kind):
        loss = make_loss(kind, 2)
        mid = t * np.asarray(g1) + (1 - t) * np.asarray(g2)
        assert loss(mid, y) <= t * loss(g1, y) + (1 - t) * loss(g2, y) + 1e-9 * max(1.0, loss(g1, y) + loss(g2, y))

    def test_batch_matches_scalar_bitwise(self):
        rng = np.random.default_rng(0)
        preds = rng.normal(size=(50, 3))
        y = rng.normal(size=3)
        for loss in (squared_norm(3), absolute_norm(3)):
            batch = loss.batch(preds, y)
            assert all(batch[i] == loss(preds[i], y) for i in range(50))

    def test_custom_loss(self):
        loss = LossFunction("custom", 1, fn=lambda g, y: np.sum(np.abs(g - y) ** 3, axis=-1))
        assert loss([2.0], [0.0]) == 8.0
        with pytest.raises(UnsupportedError):
            loss_bound_on(loss, ball([0.0], 1.0), ball([0.0], 1.0))
        with pytest.raises(UnsupportedError):
            sublevel_compact(loss, ball([0.0], 1.0), 1.0)

    def test_custom_needs_fn(self):
        with pytest.raises(InvalidArgumentError):
            LossFunction("custom", 1)

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgumentError):
            LossFunction("hinge", 1)


class TestLossBound:
    def test_max_distance_to_origin(self):
        assert loss_bound_on(absolute_norm(), ball([0.0], 1.0), ball([0.0], 0.0)) == 1.0

    def test_squared_unit_balls(self):
        L = loss_bound_on(squared_norm(), ball([0.0], 1.0), ball([0.0], 1.0))
        assert L == 4.0
        assert _grid_max(squared_norm(), ball([0.0], 1.0), ball([0.0], 1.0)) == pytest.approx(L)

    def test_offset_centres(self):
        L = loss_bound_on(absolute_norm(), ball([3.0], 1.0), ball([0.0], 1.0))
        assert L == 5.0
        assert _grid_max(absolute_norm(), ball([3.0], 1.0), ball([0.0], 1.0)) == pytest.approx(L)

    def test_region_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            loss_bound_on(absolute_norm(2), ball([0.0], 1.0), ball([0.0, 0.0], 1.0))

    @pytest.mark.parametrize("kind", ["squared_norm", "absolute_norm"])
    def test_soundness_sampled(self, kind):
        rng = np.random.default_rng(1)
        loss = make_loss(kind, 2)
        G, Y = ball([0.3, -1.0], 1.5), ball([2.0, 0.5], 0.7)
        L = loss_bound_on(loss, G, Y)

        def inside(b, n):
            d = rng.normal(size=(n, 2))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            return b.center + d * (b.radius * np.sqrt(rng.uniform(size=(n, 1))))

        gs, ys = inside(G, 10_000), inside(Y, 10_000)
        vals = np.array([loss(g, y) for g, y in zip(gs, ys)])
        assert np.all(np.abs(vals) <= L)


class TestSublevel:
    def test_absolute(self):
        assert sublevel_compact(absolute_norm(), ball([0.0], 1.0), 2.0) == ball([0.0], 3.0)

    def test_absolute_degenerate(self):
        assert sublevel_compact(absolute_norm(), ball([0.0], 0.0), 0.0) == ball([0.0], 0.0)

    def test_squared(self):
        assert sublevel_compact(squared_norm(), ball([0.0], 1.0), 4.0) == ball([0.0], 3.0)

    def test_negative_threshold_clamped(self):
        assert sublevel_compact(squared_norm(), ball([1.0], 1.0), -5.0) == ball([1.0], 1.0)

    @pytest.mark.parametrize("kind", ["squared_norm", "absolute_norm"])
    @pytest.mark.parametrize("eps", [0.01, 0.1, 1.0])
    def test_soundness_sampled(self, kind, eps):
        rng = np.random.default_rng(2)
        loss = make_loss(kind, 2)
        B = ball([1.0, -2.0], 1.5)
        M = 3.0
        C = sublevel_compact(loss, B, M)
        d = rng.normal(size=(1000, 2))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        gs = C.center + d * C.radius * (1 + eps)
        e = rng.normal(size=(1000, 2))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        ys = B.center + e * (B.radius * np.sqrt(rng.uniform(size=(1000, 1))))
        assert all(loss(g, y) > M for g, y in zip(gs, ys))


class TestCompactBall:
    def test_closed_membership(self):
        b = ball([0.0, 0.0], 5.0)
        assert b.contains([3.0, 4.0])
        assert not b.contains([3.0, 4.0001])

    def test_max_norm(self):
        box = CompactBall([0.0, 0.0], 2.0, max_norm=True)
        assert box.contains([2.0, -2.0])
        assert not box.contains([2.0, 2.1])

    def test_negative_radius(self):
        with pytest.raises(InvalidArgumentError):
            ball([0.0], -1.0)

    def test_hashable_and_equal(self):
        assert ball([1.0], 2.0) == ball(np.array([1.0]), 2)
        assert len({ball([1.0], 2.0), ball([1.0], 2.0)}) == 1


class TestHistory:
    def test_extend_definition(self):
        h = History.start([0.0])
        h2 = history_extend(h, [1.0], [2.0])
        assert h2.length == 1
        (x, y), = h2.pairs
        assert x.tolist() == [0.0] and y.tolist() == [1.0]
        assert h2.current_signal.tolist() == [2.0]
        assert h2.round == 2

    def test_extend_twice(self):
        h = History.start([0.0]).extend([1.0], [2.0]).extend([3.0], [4.0])
        assert len(h.pairs) == 2
        assert h.observation(1).tolist() == [3.0]
        assert h.observation(2).tolist() == [1.0]
        assert h.observation(3) is None
        assert h.signal(0).tolist() == [4.0]
        assert h.signal(2).tolist() == [0.0]

    def test_prepast_preserved(self):
        h = History.start([0.0])
        assert h.prepast and h.extend([1.0], [1.0]).prepast

    def test_value_semantics_and_purity(self):
        h = History.start([0.0]).extend([1.0], [2.0])
        a = h.extend([5.0], [6.0])
        b = h.extend([7.0], [8.0])
        assert h.length == 1 and h.current_signal.tolist() == [2.0]
        assert a.observation(1).tolist() == [5.0]
        assert b.observation(1).tolist() == [7.0]
        assert h.extend([5.0], [6.0]) == a

    def test_dimension_mismatch(self):
        h = History.start([0.0]).extend([1.0], [2.0])
        with pytest.raises(InvalidArgumentError):
            h.extend([1.0, 2.0], [0.0])
        with pytest.raises(InvalidArgumentError):
            h.extend([1.0], [0.0, 0.0])

    def test_from_pairs_matches_extension(self):
        h = History.start([0.0]).extend([1.0], [2.0]).extend([3.0], [4.0])
        assert History.from_pairs([([0.0], [1.0]), ([2.0], [3.0])], [4.0]) == h

    @settings(max_examples=50)
    @given(st.lists(st.tuples(coords, coords), max_size=12), coords)
    def test_branching_never_disturbs(self, pairs, last):
        hs = [History.start([0.0])]
        for y, x in pairs:
            hs.append(hs[-1].extend([y], [x]))
        snapshot = [h.pairs for h in hs]
        for h in hs:
            h.extend([last], [last])
        assert [h.pairs for h in hs] == snapshot


def test_transcript_iteration_and_slicing():
    t = Transcript()
    h = History.start([0.0])
    for k in range(3):
        t.append(h, [float(k)])
        h = h.extend([float(k)], [0.0])
    assert len(t) == 3
    assert [y.tolist() for _, y in t] == [[0.0], [1.0], [2.0]]
    assert t[1][1].tolist() == [1.0]
    assert len(t[1:]) == 2
