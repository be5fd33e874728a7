import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from vpp.axis_render import AxisSpec, render_axis
from vpp.global_vpp import (
    GlobalVPP,
    OverlayConfig,
    blend,
    init_global_vpp,
    make_mask,
    mask_for,
    overlay,
    preview_overlay,
)
from vpp.image_pipeline import PreprocessConfig, Raster, Space


def loop_overlay(x, prompt, bits, alpha):
    """Straight scalar loop over every pixel and channel."""
    h, w, c = x.shape
    out = np.empty_like(x)
    for i in range(h):
        for j in range(w):
            for k in range(c):
                out[i, j, k] = alpha * x[i, j, k] + (1.0 - alpha) * (prompt[i, j, k] * bits[i, j])
    return out


def rand_std(rng, side=16):
    return Raster(rng.normal(size=(side, side, 3)), Space.STANDARDIZED)


@pytest.mark.parametrize("side,w", [(336, 30), (64, 6), (16, 3)])
def test_mask_count(side, w):
    assert make_mask(side, w).ones == side**2 - (side - 2 * w) ** 2


def test_mask_paper_default_count():
    assert make_mask(336, 30).ones == 36720


def test_mask_extremes():
    assert make_mask(10, 0).ones == 0
    assert make_mask(10, 5).ones == 100
    assert make_mask(11, 6).ones == 121
    with pytest.raises(ValueError):
        make_mask(10, 6)


def test_no_mask_is_all_ones():
    assert mask_for(20, OverlayConfig(0.9, None)).ones == 400


def test_overlay_config_validation():
    with pytest.raises(ValueError):
        OverlayConfig(1.5, 30)
    with pytest.raises(ValueError):
        OverlayConfig(0.5, -1)


def test_init_examples():
    spec = AxisSpec()
    v = init_global_vpp(spec, PreprocessConfig.identity())
    assert np.array_equal(v.values.data, render_axis(spec).data)
    a = init_global_vpp(spec, PreprocessConfig())
    b = init_global_vpp(spec, PreprocessConfig())
    assert np.array_equal(a.values.data, b.values.data)
    assert a.trainable
    band = a.values.data[make_mask(336, 30).bits.astype(bool)]
    cfg = PreprocessConfig()
    lo = (0.0 - np.array(cfg.channel_mean)) / np.array(cfg.channel_std)
    hi = (1.0 - np.array(cfg.channel_mean)) / np.array(cfg.channel_std)
    assert np.isclose(band, lo).all(axis=1).any()
    assert np.isclose(band, hi).all(axis=1).any()


def test_overlay_examples():
    rng = np.random.default_rng(0)
    x = rand_std(rng)
    vpp = GlobalVPP(rand_std(rng))
    m = make_mask(16, 3)
    assert np.array_equal(overlay(x, vpp, m, 1.0).data, x.data)
    assert np.array_equal(overlay(x, vpp, make_mask(16, 8), 0.0).data, vpp.values.data)
    out = overlay(x, vpp, m, 0.95).data
    assert out[8, 8, 1] == pytest.approx(0.95 * x.data[8, 8, 1], abs=1e-15)


def test_overlay_contracts():
    rng = np.random.default_rng(0)
    vpp = GlobalVPP(rand_std(rng))
    with pytest.raises(ValueError):
        overlay(Raster(np.zeros((16, 16, 3))), vpp, make_mask(16, 3), 0.9)
    with pytest.raises(ValueError):
        overlay(rand_std(rng), vpp, make_mask(12, 3), 0.9)


def test_overlay_rescales_masked_prompt():
    # T_ipt: a 32 px prompt applied to a 16 px input
    rng = np.random.default_rng(1)
    x = rand_std(rng, 16)
    vpp = GlobalVPP(Raster(np.ones((32, 32, 3)), Space.STANDARDIZED))
    out = overlay(x, vpp, make_mask(32, 16), 0.5).data
    assert np.allclose(out, 0.5 * x.data + 0.5)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.25, 0.5, 0.95, 1.0]))
def test_overlay_matches_scalar_loop(seed, alpha):
    rng = np.random.default_rng(seed)
    x, p = rand_std(rng), rand_std(rng)
    m = make_mask(16, int(rng.integers(0, 9)))
    got = overlay(x, GlobalVPP(p), m, alpha).data
    assert np.abs(got - loop_overlay(x.data, p.data, m.bits, alpha)).max() <= 1e-6


@given(st.integers(0, 2**32 - 1))
def test_overlay_linear_in_alpha(seed):
    rng = np.random.default_rng(seed)
    x, p = rand_std(rng), rand_std(rng)
    m = make_mask(16, 4)
    A = x.data
    B = p.data * m.bits[..., None]
    for alpha in (0.0, 0.25, 0.5, 0.95, 1.0):
        assert np.allclose(overlay(x, GlobalVPP(p), m, alpha).data, alpha * A + (1 - alpha) * B, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(4, 11), st.integers(4, 11))
def test_interior_prompt_is_invisible(seed, i, j):
    rng = np.random.default_rng(seed)
    x, p = rand_std(rng), rand_std(rng)
    m = make_mask(16, 4)
    q = Raster(p.data.copy(), Space.STANDARDIZED)
    q.data[i, j] += rng.normal(size=3) * 10
    assert np.array_equal(overlay(x, GlobalVPP(p), m, 0.95).data, overlay(x, GlobalVPP(q), m, 0.95).data)


def test_masked_prompt_gradient_is_exactly_zero():
    side = 16
    x = torch.randn(side, side, 3, dtype=torch.float64)
    p = torch.randn(side, side, 3, dtype=torch.float64, requires_grad=True)
    bits = torch.tensor(make_mask(side, 4).bits)
    blend(x, p, bits, 0.95).pow(2).sum().backward()
    interior = bits == 0
    assert (p.grad[interior] == 0).all()
    assert (p.grad[~interior] != 0).any()


def test_preview_examples():
    cfg = PreprocessConfig(target_side=64)
    spec = AxisSpec()
    vpp = init_global_vpp(spec, cfg)
    img = Raster(np.random.default_rng(4).random((64, 64, 3)))
    same = preview_overlay(img, vpp, make_mask(64, 6), 1.0, cfg)
    assert np.allclose(same.data, img.data, atol=1e-12)
    white = preview_overlay(Raster(np.ones((64, 64, 3))), vpp, make_mask(64, 6), 0.95, cfg)
    interior = white.data[6:-6, 6:-6]
    # interior is pulled 5% toward the channel mean
    assert np.abs(interior - 1.0).max() == pytest.approx(0.05 * (1 - min(cfg.channel_mean)))
    assert white.data.min() >= 0.0 and white.data.max() <= 1.0
    # glyph pixels inside the band come out darker than the white interior
    assert white.data[:6].min() < interior.min()
