"""Resize / pad / standardize transforms applied before the visual encoder.

``preprocess`` is the encoder-side transform (pad to square, bilinear resize,
per-channel standardization). ``interpolate_to`` rescales a square prompt to
the processed input size.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .geometry import ImageDims, pad_placement

# Published CLIP ViT-L/14 preprocessing constants.
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class Space(enum.Enum):
    PIXEL01 = "pixel01"
    STANDARDIZED = "standardized"


class PadFill(enum.Enum):
    MEAN = "mean"
    WHITE = "white"
    BLACK = "black"


@dataclass(frozen=True)
class Raster:
    """H x W x C float64 image tagged with the value space it lives in."""

    data: np.ndarray
    space: Space = Space.PIXEL01

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"raster must be HxWxC, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PreprocessConfig:
    target_side: int = 336
    channel_mean: tuple[float, float, float] = CLIP_MEAN
    channel_std: tuple[float, float, float] = CLIP_STD
    pad_fill: PadFill = PadFill.MEAN

    def __post_init__(self) -> None:
        if self.target_side < 16:
            raise ValueError(f"target_side must be >= 16, got {self.target_side}")
        if len(self.channel_mean) != 3 or len(self.channel_std) != 3:
            raise ValueError("channel_mean and channel_std need 3 entries")
        if min(self.channel_std) <= 0:
            raise ValueError(f"channel_std must be positive, got {self.channel_std}")

    @classmethod
    def identity(cls, target_side: int = 336) -> "PreprocessConfig":
        return cls(target_side, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, clamped at the edges
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(r: Raster, out_h: int, out_w: int) -> Raster:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    if (out_h, out_w) == (r.height, r.width):
        return Raster(r.data.copy(), r.space)
    y0, y1, fy = _axis_weights(r.height, out_h)
    x0, x1, fx = _axis_weights(r.width, out_w)
    d = r.data
    fx = fx[None, :, None]
    top = d[y0][:, x0] * (1 - fx) + d[y0][:, x1] * fx
    bot = d[y1][:, x0] * (1 - fx) + d[y1][:, x1] * fx
    fy = fy[:, None, None]
    return Raster(top * (1 - fy) + bot * fy, r.space)


def pad_longer_side(r: Raster, fill: Sequence[float]) -> Raster:
    if r.space is not Space.PIXEL01:
        raise ValueError("pad_longer_side expects a Pixel01 raster")
    p = pad_placement(ImageDims(r.width, r.height))
    if p.side == r.width == r.height:
        return Raster(r.data.copy(), r.space)
    out = np.empty((p.side, p.side, r.channels), dtype=np.float64)
    out[...] = np.asarray(fill, dtype=np.float64)
    out[p.offset_y:p.offset_y + r.height, p.offset_x:p.offset_x + r.width] = r.data
    return Raster(out, r.space)


def _mean_std(cfg: PreprocessConfig) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(cfg.channel_mean, dtype=np.float64), np.asarray(cfg.channel_std, dtype=np.float64)


def standardize(r: Raster, cfg: PreprocessConfig) -> Raster:
    if r.space is not Space.PIXEL01:
        raise ValueError("standardize expects a Pixel01 raster")
    mean, std = _mean_std(cfg)
    return Raster((r.data - mean) / std, Space.STANDARDIZED)


def destandardize(r: Raster, cfg: PreprocessConfig) -> Raster:
    if r.space is not Space.STANDARDIZED:
        raise ValueError("destandardize expects a Standardized raster")
    mean, std = _mean_std(cfg)
    return Raster(r.data * std + mean, Space.PIXEL01)


def fill_values(cfg: PreprocessConfig) -> tuple[float, float, float]:
    if cfg.pad_fill is PadFill.MEAN:
        return tuple(cfg.channel_mean)
    if cfg.pad_fill is PadFill.WHITE:
        return (1.0, 1.0, 1.0)
    return (0.0, 0.0, 0.0)


def preprocess(r: Raster, cfg: PreprocessConfig, content_side: int | None = None) -> Raster:
    """Pad to square, resize to ``cfg.target_side`` and standardize.

    ``content_side`` shrinks the image into a centered inner square of that size
    (the externally padded axis layout); the surrounding band gets the pad fill.
    """
    sq = pad_longer_side(r, fill_values(cfg))
    side = cfg.target_side
    if content_side is None or content_side == side:
        out = resize_bilinear(sq, side, side)
    else:
        if not 1 <= content_side <= side:
            raise ValueError(f"content_side {content_side} outside [1, {side}]")
        inner = resize_bilinear(sq, content_side, content_side)
        data = np.empty((side, side, r.channels), dtype=np.float64)
        data[...] = np.asarray(fill_values(cfg))
        o = (side - content_side) // 2
        data[o:o + content_side, o:o + content_side] = inner.data
        out = Raster(data, Space.PIXEL01)
    return standardize(out, cfg)


def interpolate_to(r: Raster, out_side: int) -> Raster:
    if r.height != r.width:
        raise ValueError(f"interpolate_to needs a square raster, got {r.height}x{r.width}")
    return resize_bilinear(r, out_side, out_side)


def to_uint8(r: Raster) -> np.ndarray:
    """Scale [0,1] values to 8-bit with round-half-up."""
    if r.space is not Space.PIXEL01:
        raise ValueError("only Pixel01 rasters can be exported")
    return np.floor(np.clip(r.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(r: Raster, path: str | Path) -> None:
    arr = to_uint8(r)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    Image.fromarray(arr).save(path, format="PNG")


def read_png(path: str | Path) -> Raster:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return Raster(arr, Space.PIXEL01)
