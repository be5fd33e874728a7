"""Learnable global position prompt: axis initialization, border mask, blend."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .axis_render import AxisSpec, AxisVariant, render_axis
from .image_pipeline import (
    PreprocessConfig,
    Raster,
    Space,
    destandardize,
    interpolate_to,
    preprocess,
)


@dataclass(frozen=True)
class OverlayConfig:
    alpha: float = 0.95
    # None removes the mask entirely (prompt visible everywhere)
    mask_width: int | None = 30

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.mask_width is not None and self.mask_width < 0:
            raise ValueError(f"mask_width must be >= 0, got {self.mask_width}")


@dataclass(frozen=True)
class BinaryMask:
    side: int
    width: int
    bits: np.ndarray  # side x side, float64 in {0, 1}

    @property
    def ones(self) -> int:
        return int(self.bits.sum())


@dataclass
class GlobalVPP:
    values: Raster
    trainable: bool = True


def make_mask(side: int, w: int) -> BinaryMask:
    """Ones in a border band of width ``w``, zeros inside."""
    if side < 1:
        raise ValueError(f"side must be positive, got {side}")
    if not 0 <= w <= math.ceil(side / 2):
        raise ValueError(f"mask width {w} outside [0, {math.ceil(side / 2)}] for side {side}")
    idx = np.arange(side)
    edge = np.minimum(idx, side - 1 - idx)
    dist = np.minimum(edge[:, None], edge[None, :])
    return BinaryMask(side, w, (dist < w).astype(np.float64))


def mask_for(side: int, cfg: OverlayConfig) -> BinaryMask:
    if cfg.mask_width is None:
        return BinaryMask(side, side, np.ones((side, side)))
    return make_mask(side, min(cfg.mask_width, math.ceil(side / 2)))


def init_global_vpp(spec: AxisSpec, cfg: PreprocessConfig, trainable: bool = True) -> GlobalVPP:
    """Prompt initialized as the preprocessed axis image."""
    return GlobalVPP(preprocess(render_axis(spec), cfg), trainable)


def content_side_for(spec: AxisSpec, target_side: int) -> int | None:
    """Inner content size the input image is shrunk to for the external layout."""
    if spec.variant is not AxisVariant.EXTERNAL_PADDED:
        return None
    return int(round(target_side * spec.content_side / spec.canvas))


def blend(x, prompt, mask, alpha: float):
    """``alpha * x + (1 - alpha) * (prompt * mask)`` on HxWxC arrays.

    Works on numpy arrays and torch tensors alike; ``mask`` is HxW and is
    broadcast over channels. Sizes must already match.
    """
    return alpha * x + (1.0 - alpha) * (prompt * mask[..., None])


def overlay(x_processed: Raster, vpp: GlobalVPP, mask: BinaryMask, alpha: float) -> Raster:
    if x_processed.space is not Space.STANDARDIZED:
        raise ValueError("overlay expects a Standardized input raster")
    if vpp.values.height != mask.side or vpp.values.width != mask.side:
        raise ValueError(
            f"mask side {mask.side} does not match prompt {vpp.values.height}x{vpp.values.width}"
        )
    if x_processed.height != x_processed.width:
        raise ValueError(f"processed input must be square, got {x_processed.height}x{x_processed.width}")
    masked = Raster(vpp.values.data * mask.bits[..., None], Space.STANDARDIZED)
    # mask first, then rescale to the processed input size
    scaled = interpolate_to(masked, x_processed.height)
    if scaled.channels != x_processed.channels:
        raise ValueError("channel count mismatch between input and prompt")
    return Raster(alpha * x_processed.data + (1.0 - alpha) * scaled.data, Space.STANDARDIZED)


def preview_overlay(
    image: Raster,
    vpp: GlobalVPP,
    mask: BinaryMask,
    alpha: float,
    cfg: PreprocessConfig,
) -> Raster:
    """Human-viewable overlay result: preprocess, blend, destandardize, clamp."""
    blended = overlay(preprocess(image, cfg), vpp, mask, alpha)
    out = destandardize(blended, cfg)
    return Raster(np.clip(out.data, 0.0, 1.0), Space.PIXEL01)
