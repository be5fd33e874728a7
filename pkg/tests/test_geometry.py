import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpp.geometry import (
    ImageDims,
    NormBox,
    PixelBox,
    acc_at_iou,
    denormalize_box,
    iou,
    normalize_box,
    pad_placement,
)


def pixel_iou(a: NormBox, b: NormBox, n: int = 1000) -> float:
    """Count member cells of an n x n grid (cell centers) for both boxes."""
    c = (np.arange(n) + 0.5) / n

    def member(box):
        xs = (c >= box.x1) & (c < box.x2)
        ys = (c >= box.y1) & (c < box.y2)
        return ys[:, None] & xs[None, :]

    ma, mb = member(a), member(b)
    union = np.count_nonzero(ma | mb)
    return 0.0 if union == 0 else np.count_nonzero(ma & mb) / union


@st.composite
def norm_boxes(draw, min_side=0.0):
    x1 = draw(st.floats(0, 1 - min_side))
    y1 = draw(st.floats(0, 1 - min_side))
    x2 = draw(st.floats(x1 + min_side, 1))
    y2 = draw(st.floats(y1 + min_side, 1))
    return NormBox(x1, y1, x2, y2)


@st.composite
def pixel_boxes(draw):
    w = draw(st.integers(1, 4000))
    h = draw(st.integers(1, 4000))
    x1 = draw(st.floats(0, w))
    x2 = draw(st.floats(x1, w))
    y1 = draw(st.floats(0, h))
    y2 = draw(st.floats(y1, h))
    return PixelBox(x1, y1, x2, y2, ImageDims(w, h))


@pytest.mark.parametrize(
    "w,h,expect",
    [((640), 480, (640, 0, 80)), (336, 336, (336, 0, 0)), (480, 640, (640, 80, 0))],
)
def test_pad_placement(w, h, expect):
    p = pad_placement(ImageDims(w, h))
    assert (p.side, p.offset_x, p.offset_y) == expect


def test_pad_placement_odd_padding_floors():
    assert pad_placement(ImageDims(10, 7)).offset_y == 1


def test_dims_reject_nonpositive():
    with pytest.raises(ValueError):
        ImageDims(0, 5)


def test_normalize_examples():
    d = ImageDims(640, 480)
    assert normalize_box(PixelBox(0, 0, 640, 480, d)).as_tuple() == (0.0, 0.125, 1.0, 0.875)
    s = ImageDims(500, 500)
    assert normalize_box(PixelBox(0, 0, 500, 500, s)).as_tuple() == (0, 0, 1, 1)
    k = ImageDims(1000, 1000)
    assert normalize_box(PixelBox(245, 384, 283, 502, k)).as_tuple() == pytest.approx((0.245, 0.384, 0.283, 0.502))


def test_denormalize_examples():
    full = denormalize_box(NormBox(0, 0, 1, 1), ImageDims(640, 480))
    assert full.as_tuple() == (0, 0, 640, 480)
    mid = denormalize_box(NormBox(0.5, 0.5, 0.5, 0.5), ImageDims(100, 100))
    assert mid.as_tuple() == (50, 50, 50, 50)


def test_box_invariants_enforced():
    with pytest.raises(ValueError):
        NormBox(0.5, 0, 0.4, 1)
    with pytest.raises(ValueError):
        PixelBox(0, 0, 11, 5, ImageDims(10, 10))


def test_iou_examples():
    a = NormBox(0, 0, 0.5, 0.5)
    assert iou(a, a) == 1.0
    assert iou(NormBox(0, 0, 0.2, 0.2), NormBox(0.5, 0.5, 0.9, 0.9)) == 0.0
    assert iou(a, NormBox(0.25, 0.25, 0.75, 0.75)) == pytest.approx(1 / 7)
    assert pixel_iou(a, NormBox(0.25, 0.25, 0.75, 0.75)) == pytest.approx(1 / 7, abs=1e-3)


def test_iou_degenerate_is_zero():
    p = NormBox(0.3, 0.3, 0.3, 0.3)
    assert iou(p, p) == 0.0


def test_acc_examples():
    g = [NormBox(0, 0, 0.5, 0.5)] * 3
    assert acc_at_iou(g, g) == 1.0
    assert acc_at_iou([None] * 3, g) == 0.0
    preds = [g[0], g[0], NormBox(0.25, 0.25, 0.75, 0.75)]
    assert acc_at_iou(preds, g, 0.5) == pytest.approx(2 / 3)


def test_acc_tie_counts_as_hit():
    a = NormBox(0, 0, 1, 0.5)
    b = NormBox(0, 0, 1, 1)
    assert iou(a, b) == 0.5
    assert acc_at_iou([a], [b], 0.5) == 1.0


def test_acc_length_mismatch():
    with pytest.raises(ValueError):
        acc_at_iou([None], [])


@given(pixel_boxes())
def test_round_trip_within_half_pixel(b):
    back = denormalize_box(normalize_box(b), b.frame)
    assert max(abs(u - v) for u, v in zip(back.as_tuple(), b.as_tuple())) <= 0.5


@given(norm_boxes(), norm_boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(norm_boxes(min_side=1e-3))
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0)


@given(pixel_boxes(), st.floats(0, 1), st.floats(0, 1))
def test_normalize_monotone(b, gx, gy):
    w, h = b.frame.width, b.frame.height
    big = PixelBox(b.x1 * (1 - gx), b.y1 * (1 - gy), b.x2 + (w - b.x2) * gx, b.y2 + (h - b.y2) * gy, b.frame)
    n, m = normalize_box(b), normalize_box(big)
    assert m.x1 <= n.x1 and m.y1 <= n.y1 and m.x2 >= n.x2 and m.y2 >= n.y2


@given(st.lists(st.tuples(norm_boxes(), norm_boxes()), min_size=1, max_size=12), st.randoms())
def test_acc_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = acc_at_iou([p for p, _ in pairs], [g for _, g in pairs])
    b = acc_at_iou([p for p, _ in shuffled], [g for _, g in shuffled])
    assert a == b


def test_iou_matches_pixel_oracle_on_grid_boxes():
    rng = random.Random(3)
    for _ in range(50):
        xs = sorted(rng.sample(range(1001), 2))
        ys = sorted(rng.sample(range(1001), 2))
        us = sorted(rng.sample(range(1001), 2))
        vs = sorted(rng.sample(range(1001), 2))
        a = NormBox(xs[0] / 1000, ys[0] / 1000, xs[1] / 1000, ys[1] / 1000)
        b = NormBox(us[0] / 1000, vs[0] / 1000, us[1] / 1000, vs[1] / 1000)
        assert iou(a, b) == pytest.approx(pixel_iou(a, b), abs=1e-3)
