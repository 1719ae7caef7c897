import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewloc.metrics import (
    counting_errors,
    evaluate,
    match_points,
    point_error,
    prf1,
    read_points_csv,
    write_points_csv,
)
from fewloc.verify.oracles import max_matching_bruteforce


def test_point_error_is_euclidean():
    assert point_error((3, 4), (0, 0)) == 5.0


def test_match_examples():
    gt = [(1, 2), (10, 10), (30, 5)]
    m = match_points(gt, gt, 5)
    assert (m.tp, m.fp, m.fn) == (3, 0, 0)
    m = match_points([(3, 4)], [(0, 0)], 4)
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)
    assert match_points([(3, 4)], [(0, 0)], 10).tp == 1
    m = match_points([], [(0, 0)], 10)
    assert (m.tp, m.fp, m.fn) == (0, 0, 1)
    with pytest.raises(ValueError):
        match_points([(0, 0)], [(0, 0)], 0)


def test_match_is_one_to_one():
    m = match_points([(0, 0), (1, 0), (2, 0)], [(1, 0)], 10)
    assert (m.tp, m.fp, m.fn) == (1, 2, 0)
    assert m.pairs[0][:2] == (1, 0)


def test_gate_prefers_more_pairs_over_shorter_ones():
    # greedy nearest would pair p0-g1 (dist 1) and leave g0 unmatched
    pred = [(5, 0), (14, 0)]
    gt = [(0, 0), (6, 0)]
    assert match_points(pred, gt, 8).tp == 2


@settings(max_examples=150, deadline=None)
@given(
    pred=st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), max_size=6),
    gt=st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), max_size=6),
    sigma=st.sampled_from([4.0, 8.0, 10.0]),
)
def test_matching_equals_bruteforce(pred, gt, sigma):
    m = match_points(pred, gt, sigma)
    tp, total = max_matching_bruteforce(pred, gt, sigma)
    assert m.tp == tp
    assert sum(d for _, _, d in m.pairs) == pytest.approx(total, abs=1e-9)


def test_prf1_examples():
    assert prf1(0, 0, 0) == (0.0, 0.0, 0.0)
    p, r, f = prf1(1, 1, 0)
    assert (p, r) == (0.5, 1.0) and f == pytest.approx(2 / 3, abs=1e-15)
    p, r, f = prf1(59, 41, 30)
    assert p == pytest.approx(0.59, abs=1e-15)
    assert r == pytest.approx(59 / 89, abs=1e-15) and round(r, 3) == 0.663
    assert f == pytest.approx(2 * 59 / (2 * 59 + 41 + 30), abs=1e-15)


def test_counting_errors_examples():
    assert counting_errors([3, 2, 7], [3, 2, 7]) == (0.0, 0.0)
    mae, rmse = counting_errors([3, 2], [2, 4])
    assert mae == 1.5 and rmse == pytest.approx(math.sqrt(2.5), abs=1e-15)
    with pytest.raises(ValueError):
        counting_errors([], [])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=20))
def test_rmse_bounds_mae(pairs):
    y, yh = zip(*pairs)
    mae, rmse = counting_errors(y, yh)
    assert rmse >= mae - 1e-12


def test_evaluate_pools_over_images():
    preds = [[(0, 0), (20, 20)], [(5, 5)]]
    gts = [[(1, 0)], [(5, 6), (40, 40)]]
    rep = evaluate(preds, gts, (5, 10), ["a", "b"])
    b = rep.block(10)
    assert (b.tp, b.fp, b.fn) == (2, 1, 1)
    assert rep.n_images == 2
    assert rep.mae == 1.0
    text = rep.to_text()
    assert "[sigma = 5]" in text and "[sigma = 10]" in text
    assert rep.to_tsv().count("\n") == 3


def test_dropping_an_image_updates_counts():
    preds = [[(0, 0)], [(5, 5), (9, 9)], []]
    gts = [[(0, 0)], [(5, 5)], [(3, 3)]]
    full = evaluate(preds, gts, (10,))
    part = evaluate(preds[:2], gts[:2], (10,))
    assert (full.n_images, part.n_images) == (3, 2)
    assert full.mae == pytest.approx(2 / 3) and part.mae == pytest.approx(1 / 2)


def test_points_csv_roundtrip(tmp_path):
    write_points_csv(tmp_path / "p.csv", "img 1", [(1, 2), (3.5, 4)])
    assert read_points_csv(tmp_path / "p.csv") == {"img 1": [(1.0, 2.0), (3.5, 4.0)]}
