"""Box types, padded-square normalization and IoU scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError(f"dims must be integers, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"dims must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class PixelBox:
    x1: float
    y1: float
    x2: float
    y2: float
    frame: ImageDims

    def __post_init__(self) -> None:
        w, h = self.frame.width, self.frame.height
        if not (0 <= self.x1 <= self.x2 <= w and 0 <= self.y1 <= self.y2 <= h):
            raise ValueError(
                f"pixel box {self.as_tuple()} outside frame {w}x{h} or corners swapped"
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class NormBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (0 <= self.x1 <= self.x2 <= 1 and 0 <= self.y1 <= self.y2 <= 1):
            raise ValueError(f"normalized box {self.as_tuple()} outside [0,1] or corners swapped")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class PadPlacement:
    side: int
    offset_x: int
    offset_y: int


def pad_placement(dims: ImageDims) -> PadPlacement:
    """Center the image on the shorter axis of a max(w, h) square; odd paddings floor."""
    side = max(dims.width, dims.height)
    return PadPlacement(side, (side - dims.width) // 2, (side - dims.height) // 2)


def normalize_box(b: PixelBox) -> NormBox:
    p = pad_placement(b.frame)
    s = float(p.side)
    return NormBox(
        (b.x1 + p.offset_x) / s,
        (b.y1 + p.offset_y) / s,
        (b.x2 + p.offset_x) / s,
        (b.y2 + p.offset_y) / s,
    )


def _clamp(v: float, lo: float, hi: float) -> float:
    return min(max(v, lo), hi)


def denormalize_box(n: NormBox, dims: ImageDims) -> PixelBox:
    """Inverse of normalize_box; padded overhang is clamped back into the frame."""
    p = pad_placement(dims)
    w, h = float(dims.width), float(dims.height)
    return PixelBox(
        _clamp(n.x1 * p.side - p.offset_x, 0.0, w),
        _clamp(n.y1 * p.side - p.offset_y, 0.0, h),
        _clamp(n.x2 * p.side - p.offset_x, 0.0, w),
        _clamp(n.y2 * p.side - p.offset_y, 0.0, h),
        dims,
    )


def iou(a: NormBox, b: NormBox) -> float:
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def acc_at_iou(
    preds: Sequence[Optional[NormBox]], gts: Sequence[NormBox], threshold: float = 0.5
) -> float:
    """Fraction of pairs whose prediction exists and reaches ``threshold`` IoU.

    A prediction of ``None`` (unparseable response) counts as a miss. IoU exactly
    at the threshold counts as a hit.
    """
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(gts)} targets")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if not gts:
        return 0.0
    hits = sum(1 for p, g in zip(preds, gts) if p is not None and iou(p, g) >= threshold)
    return hits / len(gts)
