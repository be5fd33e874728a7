import hashlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpp.axis_render import (
    GLYPH_H,
    GLYPH_W,
    AxisSpec,
    AxisVariant,
    RenderError,
    label_texts,
    layout_axis,
    rasterize_label,
    render_axis,
)


def test_default_layout_has_eleven_labels_per_axis():
    lay = layout_axis(AxisSpec())
    expect = [f"{i / 10:.1f}" for i in range(11)]
    assert lay.labels_for("x") == expect
    assert lay.labels_for("y") == expect


def test_fine_unit_has_21_labels():
    lay = layout_axis(AxisSpec(unit_scale=0.05))
    assert len(lay.labels_for("x")) == 21
    assert len(lay.labels_for("y")) == 21
    assert lay.labels_for("x")[1] == "0.05"


def test_external_content_side():
    spec = AxisSpec(variant=AxisVariant.EXTERNAL_PADDED)
    assert spec.content_side == 276
    lay = layout_axis(spec)
    # ticks span the centered 276 px content square
    assert lay.tick_positions[0] == 30
    assert lay.tick_positions[-1] == 30 + 275


def test_cross_axis_draws_through_center():
    img = render_axis(AxisSpec(variant=AxisVariant.CROSS_AXIS)).data[..., 0]
    c = 336 // 2
    assert (img[c - 1:c + 1, :20] == 0).all()
    assert (img[:20, c - 1:c + 1] == 0).all()


def test_rasterize_label_sizes():
    assert rasterize_label("0.5", GLYPH_H).shape == (GLYPH_H, 3 * GLYPH_W + 2)
    # scale = max(1, round(font / 7)): font 10 stays at the base 7 px, font 14 doubles
    assert rasterize_label("0.05", 10).shape[0] == 7
    assert rasterize_label("0.05", 14).shape == (14, 2 * (4 * GLYPH_W + 3))
    assert np.array_equal(rasterize_label("1.0", 10), rasterize_label("1.0", 10))


def test_rasterize_label_rejects_unknown_char():
    with pytest.raises(ValueError):
        rasterize_label("0,5", 10)


def test_render_is_deterministic_and_bilevel():
    a = render_axis(AxisSpec()).data
    b = render_axis(AxisSpec()).data
    assert hashlib.sha256(a.tobytes()).digest() == hashlib.sha256(b.tobytes()).digest()
    assert set(np.unique(a)) == {0.0, 1.0}
    assert a.shape == (336, 336, 3)


def test_edge_ink_stays_in_border_band():
    spec = AxisSpec()
    img = render_axis(spec).data[..., 0]
    band_rows, band_cols = layout_axis(spec).ink_band
    interior = img[band_rows:, band_cols:]
    assert (interior == 1.0).all()
    assert (img[:, 0] == 0).all() and (img[0, :] == 0).all()


def test_collision_is_reported():
    with pytest.raises(RenderError, match="collide"):
        layout_axis(AxisSpec(unit_scale=0.02, font_size=21, canvas=64))


def test_spec_validation():
    with pytest.raises(ValueError):
        AxisSpec(unit_scale=0.3)
    with pytest.raises(ValueError):
        AxisSpec(font_size=4)


@given(st.sampled_from([0.5, 0.25, 0.2, 0.1, 0.05]))
def test_label_count_rule(unit):
    assert len(label_texts(unit)) == 1 + round(1 / unit)
