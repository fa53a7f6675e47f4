import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_assignment, raster_iou
from uqtrack.association import (
    AssociationResult,
    InvalidCostError,
    associate_base_byte,
    associate_base_sort,
    hungarian,
    iou,
    iou_matrix,
    nllai,
    snll,
    snll_matrix,
)
from uqtrack.core import BoxState, ConfigError, gaussian_logpdf

from conftest import det

box_st = st.tuples(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.1, 10), st.floats(0.1, 10))


def test_iou_basic_cases():
    b = BoxState(0, 0, 2, 2)
    assert iou(b, b) == 1.0
    assert iou(b, BoxState(10, 10, 2, 2)) == 0.0
    assert iou(b, BoxState(1, 0, 2, 2)) == pytest.approx(1 / 3)


def test_iou_against_raster_oracle():
    assert abs(iou(BoxState(0, 0, 2, 2), BoxState(1, 0, 2, 2)) - raster_iou((0, 0, 2, 2), (1, 0, 2, 2))) < 1e-2
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = (*rng.uniform(-1, 1, 2), *rng.uniform(0.5, 2, 2))
        b = (*rng.uniform(-1, 1, 2), *rng.uniform(0.5, 2, 2))
        assert abs(iou(BoxState(*a), BoxState(*b)) - raster_iou(a, b, 2e-3)) < 1e-2


@given(box_st, box_st)
def test_iou_symmetric_and_bounded(a, b):
    a, b = BoxState(*a), BoxState(*b)
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a), abs=1e-15)


def test_iou_matrix_shapes():
    assert iou_matrix([], [BoxState(0, 0, 1, 1)]).shape == (0, 1)
    m = iou_matrix([BoxState(0, 0, 1, 1)] * 2, [(0, 0, 1, 1)] * 3)
    np.testing.assert_array_equal(m, np.ones((2, 3)))


def _cost(pairs, cost):
    return sum(cost[r][c] for r, c in pairs)


def test_hungarian_small_cases():
    assert sorted(hungarian([[1, 2], [3, 1]])) == [(0, 0), (1, 1)]
    big = np.full((4, 4), 100.0)
    np.fill_diagonal(big, 0.0)
    assert hungarian(big) == [(i, i) for i in range(4)]
    pairs = hungarian([[4, 1, 3], [2, 0, 5]])
    assert sorted(pairs) == [(0, 1), (1, 0)]
    assert _cost(pairs, [[4, 1, 3], [2, 0, 5]]) == 3


def test_hungarian_empty_and_invalid():
    assert hungarian(np.zeros((0, 3))) == []
    assert hungarian(np.zeros((2, 0))) == []
    with pytest.raises(InvalidCostError):
        hungarian([[math.nan, 1.0]])
    with pytest.raises(InvalidCostError):
        hungarian([[math.inf, 1.0]])
    with pytest.raises(InvalidCostError):
        hungarian([1.0, 2.0])


def test_hungarian_ties_resolve_to_lexicographic_minimum():
    assert hungarian(np.ones((3, 3))) == [(0, 0), (1, 1), (2, 2)]
    assert hungarian(np.zeros((2, 4))) == [(0, 0), (1, 1)]
    assert hungarian(np.zeros((4, 2))) == [(0, 0), (1, 1)]


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_hungarian_matches_brute_force_on_integer_ties(r, c, data):
    cost = data.draw(arrays(np.float64, (r, c), elements=st.integers(0, 3).map(float)))
    best, pairs_ref = brute_force_assignment(cost)
    pairs = hungarian(cost)
    assert len(pairs) == min(r, c)
    assert _cost(pairs, cost) == pytest.approx(best)
    assert pairs == pairs_ref


def test_hungarian_scales_to_large_matrices():
    rng = np.random.default_rng(0)
    cost = rng.random((150, 200))
    pairs = hungarian(cost)
    assert len(pairs) == 150 and len({c for _, c in pairs}) == 150


def test_snll_values():
    d = det((0, 0, 2, 2))
    assert snll((0, 0, 2, 2), d) == pytest.approx(0.9189385, abs=1e-7)
    assert snll((0, 0, 2, 2), det((0, 0, 2, 2), sigma=(2,) * 4)) == pytest.approx(1.6120857, abs=1e-7)
    d = det((10, 0, 2, 2), sigma=(5, 5, 1, 1))
    hand = -np.mean([gaussian_logpdf(14, 10, 5), gaussian_logpdf(0, 0, 5), gaussian_logpdf(2, 2, 1),
                     gaussian_logpdf(2, 2, 1)])
    assert snll((14, 0, 2, 2), d) == pytest.approx(hand, abs=1e-12)
    assert snll((14, 0, 2, 2), d) == pytest.approx(1.8035, abs=1e-3)


def test_snll_matrix_agrees_with_scalar():
    rng = np.random.default_rng(1)
    dets = [det(rng.uniform(1, 5, 4), sigma=rng.uniform(0.1, 2, 4)) for _ in range(3)]
    preds = rng.uniform(1, 5, (4, 4))
    m = snll_matrix(dets, preds)
    for i, d in enumerate(dets):
        for j, p in enumerate(preds):
            assert m[i, j] == pytest.approx(snll(p, d), rel=1e-12)
    assert snll_matrix([], preds).shape == (0, 4)


def test_sort_association_gate_and_exact_match():
    res = associate_base_sort([det((0, 0, 2, 2))], [BoxState(0, 0, 2, 2)], 0.3)
    assert res.matched == [(0, 0)]
    # IoU of these boxes is 0.2
    far = associate_base_sort([det((0, 0, 2, 2))], [BoxState(4 / 3, 0, 2, 2)], 0.3)
    assert far.matched == [] and far.unmatched_detections == [0] and far.unmatched_tracklets == [0]
    with pytest.raises(ConfigError):
        associate_base_sort([], [], 1.0)


def test_sort_association_is_globally_optimal():
    # greedy would take (d0, t0) at IoU 0.74 and leave d1 below the gate
    dets = [det((0.0, 0, 2, 2)), det((-1.2, 0, 2, 2))]
    preds = [BoxState(-0.3, 0, 2, 2), BoxState(0.7, 0, 2, 2)]
    ious = iou_matrix(dets, preds)
    _, ref = brute_force_assignment(1 - ious)
    res = associate_base_sort(dets, preds, 0.3)
    assert sorted(res.matched) == sorted(p for p in ref if ious[p] >= 0.3)
    assert sorted(res.matched) == [(0, 1), (1, 0)]


def test_byte_all_high_equals_sort():
    dets = [det((0, 0, 2, 2)), det((5, 5, 2, 2)), det((20, 0, 2, 2))]
    preds = [BoxState(0.2, 0, 2, 2), BoxState(5, 5.1, 2, 2)]
    a = associate_base_sort(dets, preds, 0.3)
    b = associate_base_byte(dets, preds, 0.5, 0.1, 0.3)
    assert (sorted(a.matched), a.unmatched_detections, a.unmatched_tracklets) == \
        (b.matched, b.unmatched_detections, b.unmatched_tracklets)


def test_byte_second_stage_and_discard():
    dets = [det((0, 0, 2, 2), score=0.9), det((10, 0, 2, 2), score=0.3), det((30, 0, 2, 2), score=0.05),
            det((50, 0, 2, 2), score=0.2)]
    preds = [BoxState(0, 0, 2, 2), BoxState(10.2, 0, 2, 2), BoxState(30, 0, 2, 2)]
    res = associate_base_byte(dets, preds, 0.5, 0.1, 0.3)
    assert res.matched == [(0, 0), (1, 1)]
    # the below-floor detection is gone and the unmatched low-score one starts nothing
    assert res.unmatched_detections == []
    assert res.unmatched_tracklets == [2]
    res.check_partition(4, 3, discarded=[2, 3])


def test_nllai_recovers_low_quality_detection():
    dets = [det((10, 0, 2, 2), sigma=(5, 5, 1, 1))]
    preds = np.array([[14.0, 0, 2, 2]])
    base = associate_base_sort(dets, [BoxState(*preds[0])], 0.3)
    assert base.matched == []
    res = nllai(base.matched, base.unmatched_detections, base.unmatched_tracklets, dets, preds, 1000.0)
    assert res.matched == [(0, 0)] and res.unmatched_detections == [] and res.unmatched_tracklets == []
    strict = nllai(base.matched, [0], [0], dets, preds, 1.0)
    assert strict.matched == [] and strict.unmatched_detections == [0] and strict.unmatched_tracklets == [0]


def test_nllai_no_op_on_empty_lists():
    res = nllai([(0, 0)], [], [1], [det((0, 0, 2, 2))], np.zeros((2, 4)), 1000.0)
    assert res.matched == [(0, 0)] and res.unmatched_detections == [] and res.unmatched_tracklets == [1]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 6), st.integers(0, 6), st.floats(0.5, 50), st.data())
def test_nllai_partition_and_gate(n_d, n_t, tau, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    dets = [det(rng.uniform(1, 30, 4), sigma=rng.uniform(0.5, 3, 4)) for _ in range(n_d)]
    preds = rng.uniform(1, 30, (n_t, 4))
    res = nllai([], list(range(n_d)), list(range(n_t)), dets, preds, tau)
    res.check_partition(n_d, n_t)
    for d, t in res.matched:
        assert snll(preds[t], dets[d]) <= tau


def test_check_partition_catches_duplicates():
    with pytest.raises(AssertionError):
        AssociationResult([(0, 0)], [0], []).check_partition(1, 1)
