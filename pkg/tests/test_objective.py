import csv
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_edt, brute_signed_distance, dice_count, jaccard_count, two_pass_mean_std
from octaseg.config import LossWeights
from octaseg.errors import EmptySet
from octaseg.objective import (EPS, aggregate, binarize, boundary_loss, combine_faz, combine_rv,
                               combine_total, dice_loss, dice_metric, distance_field, faz_loss,
                               hausdorff_loss, jaccard_metric, rv_loss, signed_distance, total_loss,
                               tversky_loss, write_metrics_csv)

masks = arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.integers(0, 1))


def _pair(draw_shape, seed):
    rng = np.random.default_rng(seed)
    return (rng.random(draw_shape) < 0.4).astype(np.uint8), (rng.random(draw_shape) < 0.4).astype(np.uint8)


# ---------------------------------------------------------------- metrics

def test_dice_cases():
    y = np.zeros((4, 4), np.uint8)
    y[0, :4] = 1
    p = np.zeros_like(y)
    p[0, :2] = 1
    assert dice_metric(y, y) == 1.0
    assert dice_metric(y, np.roll(y, 2, axis=0)) == 0.0
    assert dice_metric(y, p) == pytest.approx(0.6667, abs=1e-4)
    assert dice_metric(y, p) == 2 * 2 / 6


def test_jaccard_cases():
    y = np.zeros((4, 4), np.uint8)
    y[0] = 1
    p = np.zeros_like(y)
    p[0, :2] = 1
    assert jaccard_metric(y, y) == 1.0
    assert jaccard_metric(y, p) == 0.5


def test_empty_convention():
    z = np.zeros((3, 3), np.uint8)
    o = np.ones((3, 3), np.uint8)
    assert dice_metric(z, z) == jaccard_metric(z, z) == 1.0
    assert dice_metric(z, o) == jaccard_metric(o, z) == 0.0


@settings(max_examples=200, deadline=None)
@given(data=st.data(), shape=st.tuples(st.integers(1, 12), st.integers(1, 12)))
def test_metric_properties(data, shape):
    el = st.integers(0, 1)
    y = data.draw(arrays(np.uint8, shape, elements=el))
    p = data.draw(arrays(np.uint8, shape, elements=el))
    d, j = dice_metric(y, p), jaccard_metric(y, p)
    assert d == dice_count(y, p) and j == jaccard_count(y, p)
    assert d == dice_metric(p, y) and j == jaccard_metric(p, y)
    assert j <= d
    assert abs(j - d / (2 - d)) <= 1e-12


def test_binarize_threshold():
    assert binarize(torch.tensor([0.49, 0.5, 0.51])).tolist() == [False, False, True]


def test_aggregate():
    assert aggregate([0.9, 0.9]) == (0.9, 0.0)
    mean, std = aggregate([0.8, 1.0])
    assert mean == pytest.approx(0.9, abs=1e-15) and std == pytest.approx(0.1, abs=1e-15)
    values = np.random.default_rng(0).random(30)
    assert np.allclose(aggregate(values), two_pass_mean_std(values), atol=1e-12, rtol=0)
    with pytest.raises(EmptySet):
        aggregate([])


def test_metrics_csv(tmp_path):
    rows = [{"id": "a", "rv_dice": 0.8, "rv_jaccard": 0.7, "faz_dice": 0.9, "faz_jaccard": 0.8},
            {"id": "b", "rv_dice": 1.0, "rv_jaccard": 0.9, "faz_dice": 0.9, "faz_jaccard": 0.8}]
    write_metrics_csv(tmp_path / "m.csv", rows)
    table = list(csv.reader(open(tmp_path / "m.csv")))
    assert table[0] == ["id", "rv_dice", "rv_jaccard", "faz_dice", "faz_jaccard"]
    assert [r[0] for r in table[1:]] == ["a", "b", "mean±std"]
    assert table[3][1] == "0.900000±0.100000"


# ---------------------------------------------------------------- losses

def test_dice_loss_cases():
    y = torch.tensor([[1.0, 1.0], [0.0, 0.0]], dtype=torch.float64)
    assert dice_loss(y, y) < 1e-6
    assert dice_loss(y, 1 - y) == pytest.approx(1.0, abs=1e-6)
    half = torch.full((2, 2), 0.5, dtype=torch.float64)
    expected = 1 - (2 * (0.5 * 2) + EPS) / (2 + 2 + EPS)
    assert dice_loss(y, half).item() == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.5, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(y=masks)
def test_dice_loss_self_bound(y):
    if y.any():
        t = torch.from_numpy(y).double()
        assert dice_loss(t, t) <= 1e-5


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_tversky_half_weights_is_dice(seed):
    rng = np.random.default_rng(seed)
    y = torch.from_numpy((rng.random((6, 6)) < 0.5).astype(np.float64))
    p = torch.from_numpy(rng.random((6, 6)))
    assert torch.allclose(tversky_loss(y, p, 0.5, 0.5), dice_loss(y, p), atol=1e-12)


def test_tversky_fixture():
    y = torch.tensor([[1, 1, 1], [0, 0, 0], [0, 0, 0]], dtype=torch.float64)
    p = torch.tensor([[1, 1, 0], [1, 1, 0], [0, 0, 0]], dtype=torch.float64)
    tp, fp, fn = 2, 2, 1
    expected = 1 - (tp + EPS) / (tp + 0.3 * fp + 0.7 * fn + EPS)
    assert tversky_loss(y, p).item() == pytest.approx(expected, abs=1e-12)
    assert tversky_loss(y, y).item() < 1e-6


def test_signed_distance_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = rng.random((7, 6)) < 0.3
        np.testing.assert_allclose(signed_distance(m), brute_signed_distance(m), atol=1e-12)
        np.testing.assert_allclose(distance_field(m), brute_edt(~m), atol=1e-12)
    assert not signed_distance(np.zeros((3, 3))).any()
    assert not signed_distance(np.ones((3, 3))).any()


def test_boundary_loss_1d():
    y = torch.tensor([0.0, 1.0, 1.0, 0.0])
    np.testing.assert_array_equal(signed_distance(y.numpy() > 0.5), [1, -1, -1, 1])
    assert boundary_loss(y, torch.tensor([0.0, 1.0, 0.0, 0.0])).item() == pytest.approx(-0.25)
    assert boundary_loss(y, torch.zeros(4)).item() == 0.0
    assert boundary_loss(y, y).item() < 0


def test_hausdorff_single_pixel_shift():
    y = torch.zeros(5, 5, dtype=torch.float64)
    y[2, 2] = 1
    p = torch.zeros(5, 5, dtype=torch.float64)
    p[2, 3] = 1
    dty = brute_edt(~(y.numpy() > 0.5))
    dtp = brute_edt(~(p.numpy() > 0.5))
    expected = float((((p - y).numpy()) ** 2 * (dty ** 2 + dtp ** 2)).mean())
    assert expected == pytest.approx(2 / 25)
    assert hausdorff_loss(y, p).item() == pytest.approx(expected, abs=1e-12)
    assert hausdorff_loss(y, y).item() == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_hausdorff_nonnegative(seed):
    rng = np.random.default_rng(seed)
    y = torch.from_numpy((rng.random((2, 1, 6, 6)) < 0.3).astype(np.float64))
    p = torch.from_numpy(rng.random((2, 1, 6, 6)))
    assert hausdorff_loss(y, p) >= 0


def test_batched_losses_are_means_of_samples():
    rng = np.random.default_rng(2)
    y = torch.from_numpy((rng.random((3, 1, 6, 6)) < 0.4).astype(np.float64))
    p = torch.from_numpy(rng.random((3, 1, 6, 6)))
    for fn in (dice_loss, tversky_loss, boundary_loss, hausdorff_loss):
        per = torch.stack([fn(y[i, 0], p[i, 0]) for i in range(3)])
        assert torch.allclose(fn(y, p), per.mean(), atol=1e-12)


def _probs(shape, seed):
    """Probabilities kept away from 0.5 so binarized distance maps are locally constant."""
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.05, 0.45, shape) + 0.5 * (rng.random(shape) < 0.5)
    return torch.from_numpy(v).requires_grad_()


@pytest.mark.parametrize("fn", [dice_loss, tversky_loss, boundary_loss, hausdorff_loss, rv_loss, faz_loss])
def test_loss_gradcheck(fn):
    y = torch.from_numpy((np.random.default_rng(5).random((1, 1, 8, 8)) < 0.4).astype(np.float64))
    p = _probs((1, 1, 8, 8), 6)
    assert torch.autograd.gradcheck(lambda q: fn(y, q), (p,), eps=1e-6, atol=1e-8, rtol=1e-5)


# ---------------------------------------------------------------- combinations

def test_rv_combination():
    assert combine_rv(0.1, 0.2, 0.3, 0.4) == pytest.approx(0.17, abs=1e-15)


def test_faz_combination():
    assert combine_faz(0.5, 0.1) == pytest.approx(0.42, abs=1e-15)


def test_total_combination():
    assert combine_total(1.0, 1.0, LossWeights.for_field("3M")) == pytest.approx(7.1, abs=1e-15)
    assert combine_total(1.0, 1.0, LossWeights.for_field("6M")) == pytest.approx(5.0, abs=1e-15)


def test_total_loss_composes_branch_losses():
    rng = np.random.default_rng(9)
    y1 = torch.from_numpy((rng.random((8, 8)) < 0.3).astype(np.float64))
    y2 = torch.from_numpy((rng.random((8, 8)) < 0.3).astype(np.float64))
    p1, p2 = torch.from_numpy(rng.random((8, 8))), torch.from_numpy(rng.random((8, 8)))
    w = LossWeights.for_field("3M")
    expected = rv_loss(y1, p1, w) + 6.1 * faz_loss(y2, p2, w)
    assert torch.allclose(total_loss((y1, p1), (y2, p2), w), expected, atol=1e-12)
    d, b, t, h = dice_loss(y1, p1), boundary_loss(y1, p1), tversky_loss(y1, p1), hausdorff_loss(y1, p1)
    assert torch.allclose(rv_loss(y1, p1, w), 0.6 * d + 0.2 * b + 0.1 * t + 0.1 * h, atol=1e-12)
