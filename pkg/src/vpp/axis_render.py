"""Deterministic rasterizer for the axis-like prompt initialization images.

Everything is drawn with a built-in 5x7 bitmap font and integer strokes, so a
given :class:`AxisSpec` always produces the same pixels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .image_pipeline import Raster, Space

GLYPH_W, GLYPH_H = 5, 7

_FONT = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    ".": ("00000", "00000", "00000", "00000", "00000", "01100", "01100"),
}
GLYPHS = {c: np.array([[b == "1" for b in row] for row in rows], dtype=bool) for c, rows in _FONT.items()}

# external layout keeps the 276/336 content proportion
EXTERNAL_CONTENT_RATIO = 276 / 336


class AxisVariant(enum.Enum):
    EDGE_INTERNAL = "edge"
    CROSS_AXIS = "cross"
    EXTERNAL_PADDED = "external"


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class AxisSpec:
    variant: AxisVariant = AxisVariant.EDGE_INTERNAL
    unit_scale: float = 0.1
    font_size: int = 10
    canvas: int = 336
    axis_thickness: int = 2
    tick_length: int = 6
    label_margin: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.unit_scale <= 0.5:
            raise ValueError(f"unit_scale must lie in (0, 0.5], got {self.unit_scale}")
        inv = 1.0 / self.unit_scale
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError(f"1/unit_scale must be integral, got {inv}")
        if self.font_size < 5:
            raise ValueError(f"font_size must be >= 5, got {self.font_size}")
        if self.canvas < 64:
            raise ValueError(f"canvas must be >= 64, got {self.canvas}")
        if self.axis_thickness < 1 or self.tick_length < 0 or self.label_margin < 0:
            raise ValueError("stroke geometry must be non-negative (thickness >= 1)")

    @property
    def n_units(self) -> int:
        return int(round(1.0 / self.unit_scale))

    @property
    def glyph_scale(self) -> int:
        return max(1, int(round(self.font_size / GLYPH_H)))

    @property
    def content_side(self) -> int:
        if self.variant is AxisVariant.EXTERNAL_PADDED:
            return int(round(self.canvas * EXTERNAL_CONTENT_RATIO))
        return self.canvas


def label_texts(unit_scale: float) -> list[str]:
    n = int(round(1.0 / unit_scale))
    decimals = 1
    while abs(unit_scale * 10**decimals - round(unit_scale * 10**decimals)) > 1e-9:
        decimals += 1
    return [f"{i / n:.{decimals}f}" for i in range(n + 1)]


def rasterize_label(text: str, font_size: int) -> np.ndarray:
    """Boolean ink strip for ``text``; glyphs separated by one base unit."""
    if not text:
        raise ValueError("label text must be non-empty")
    bad = [c for c in text if c not in GLYPHS]
    if bad:
        raise ValueError(f"unsupported label character {bad[0]!r} in {text!r}")
    s = max(1, int(round(font_size / GLYPH_H)))
    gap = np.zeros((GLYPH_H, 1), dtype=bool)
    parts = []
    for i, c in enumerate(text):
        if i:
            parts.append(gap)
        parts.append(GLYPHS[c])
    base = np.concatenate(parts, axis=1)
    return np.repeat(np.repeat(base, s, axis=0), s, axis=1)


@dataclass(frozen=True)
class _Label:
    text: str
    axis: str
    top: int
    left: int
    height: int
    width: int

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    def overlaps(self, other: "_Label", gap: int = 1) -> bool:
        return not (
            self.right + gap <= other.left
            or other.right + gap <= self.left
            or self.bottom + gap <= other.top
            or other.bottom + gap <= self.top
        )


def _positions(spec: AxisSpec) -> list[int]:
    off = (spec.canvas - spec.content_side) // 2
    return [off + int(math.floor(i / spec.n_units * (spec.content_side - 1) + 0.5)) for i in range(spec.n_units + 1)]


def _place_row(centers: list[int], extent: int, lo: int, hi: int, gap: int = 1) -> list[int]:
    """Starts along the axis: centered on ticks, clamped to [lo, hi - extent], pushed apart."""
    starts = [min(max(c - extent // 2, lo), hi - extent) for c in centers]
    for i in range(1, len(starts)):
        starts[i] = max(starts[i], starts[i - 1] + extent + gap)
    starts[-1] = min(starts[-1], hi - extent)
    for i in range(len(starts) - 2, -1, -1):
        starts[i] = min(starts[i], starts[i + 1] - extent - gap)
    for c, s in zip(centers, starts):
        if s < lo or s + extent > hi:
            raise RenderError(f"label at axis position {c}px does not fit in [{lo}, {hi})")
    return starts


def _layout_along(centers, texts, extent, spacing, lo, hi, gap=1):
    """Returns (row index, start) per label; alternates rows when labels would touch."""
    if extent + gap <= spacing:
        return [(0, s) for s in _place_row(centers, extent, lo, hi, gap)]
    if extent + gap > 2 * spacing:
        raise RenderError(
            f"labels {texts[0]!r} and {texts[1]!r} collide: {extent}px labels on {spacing:.2f}px spacing"
        )
    out = [None] * len(centers)
    for row in (0, 1):
        idx = list(range(row, len(centers), 2))
        for i, s in zip(idx, _place_row([centers[i] for i in idx], extent, lo, hi, gap)):
            out[i] = (row, s)
    return out


@dataclass(frozen=True)
class AxisLayout:
    """Where each stroke and label went; used by the renderer and by tests."""

    labels: tuple[_Label, ...]
    tick_positions: tuple[int, ...]
    ink_band: tuple[int, int]  # (top rows, left cols) containing all ink, edge layout only

    def labels_for(self, axis: str) -> list[str]:
        return [l.text for l in self.labels if l.axis == axis]


def layout_axis(spec: AxisSpec) -> AxisLayout:
    C, t, L, m = spec.canvas, spec.axis_thickness, spec.tick_length, spec.label_margin
    s = spec.glyph_scale
    texts = label_texts(spec.unit_scale)
    h = GLYPH_H * s
    widths = [rasterize_label(x, spec.font_size).shape[1] for x in texts]
    w = max(widths)
    pos = _positions(spec)
    spacing = (spec.content_side - 1) / spec.n_units
    gap = 2 * s + 1
    labels: list[_Label] = []
    band = (C, C)

    if spec.variant is AxisVariant.EDGE_INTERNAL:
        # x labels below the top axis, clear of the left axis ticks
        x_top = t + L + m
        x_rows = _layout_along(pos, texts, w, spacing, t + L + m, C, gap)
        for text, (row, left) in zip(texts, x_rows):
            labels.append(_Label(text, "x", x_top + row * (h + m), left, h, w))
        x_band = max(l.bottom for l in labels)
        # y labels right of the left axis, starting below the x label band
        y_left = t + L + m
        y_rows = _layout_along(pos, texts, h, spacing, x_band + m, C, gap)
        for text, (row, top) in zip(texts, y_rows):
            labels.append(_Label(text, "y", top, y_left + row * (w + m), h, w))
        band = (x_band, max(l.right for l in labels if l.axis == "y"))
    elif spec.variant is AxisVariant.CROSS_AXIS:
        c = C // 2
        below = c - t // 2 + t + L + m
        for text, (row, left) in zip(texts, _layout_along(pos, texts, w, spacing, 0, C, gap)):
            labels.append(_Label(text, "x", below + row * (h + m), left, h, w))
        for text, (row, top) in zip(texts, _layout_along(pos, texts, h, spacing, 0, C, gap)):
            labels.append(_Label(text, "y", top, below + row * (w + m), h, w))
    else:
        o = (C - spec.content_side) // 2
        x_top = o - t - L - m - h
        y_left = o - t - L - m - w
        if x_top < 0 or y_left < 0:
            raise RenderError(
                f"external labels need {t + L + m + max(h, w)}px of pad band, only {o}px available"
            )
        for text, (row, left) in zip(texts, _layout_along(pos, texts, w, spacing, 0, C, gap)):
            labels.append(_Label(text, "x", x_top - row * (h + m), left, h, w))
        for text, (row, top) in zip(texts, _layout_along(pos, texts, h, spacing, 0, C, gap)):
            labels.append(_Label(text, "y", top, y_left - row * (w + m), h, w))
        if min(l.top for l in labels) < 0 or min(l.left for l in labels) < 0:
            raise RenderError("staggered external labels run off the canvas")

    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            if a.overlaps(b):
                raise RenderError(
                    f"label {a.text!r} ({a.axis}-axis) collides with {b.text!r} ({b.axis}-axis)"
                )
    return AxisLayout(tuple(labels), tuple(pos), band)


def _stroke(span_center: int, thickness: int, limit: int) -> slice:
    a = min(max(span_center - thickness // 2, 0), limit - thickness)
    return slice(a, a + thickness)


def render_axis(spec: AxisSpec) -> Raster:
    """White 3-channel canvas with black axes, ticks and coordinate labels."""
    lay = layout_axis(spec)
    C, t, L = spec.canvas, spec.axis_thickness, spec.tick_length
    ink = np.zeros((C, C), dtype=bool)

    if spec.variant is AxisVariant.EDGE_INTERNAL:
        ink[:t, :] = True
        ink[:, :t] = True
        for p in lay.tick_positions:
            ink[t:t + L, _stroke(p, t, C)] = True
            ink[_stroke(p, t, C), t:t + L] = True
    elif spec.variant is AxisVariant.CROSS_AXIS:
        mid = _stroke(C // 2, t, C)
        ink[mid, :] = True
        ink[:, mid] = True
        end = mid.stop
        for p in lay.tick_positions:
            ink[end:end + L, _stroke(p, t, C)] = True
            ink[_stroke(p, t, C), end:end + L] = True
    else:
        o = (C - spec.content_side) // 2
        lo, hi = lay.tick_positions[0], lay.tick_positions[-1] + 1
        ink[o - t:o, lo:hi] = True
        ink[lo:hi, o - t:o] = True
        for p in lay.tick_positions:
            ink[o - t - L:o - t, _stroke(p, t, C)] = True
            ink[_stroke(p, t, C), o - t - L:o - t] = True

    for lab in lay.labels:
        strip = rasterize_label(lab.text, spec.font_size)
        # labels clear whatever stroke runs underneath them (only happens on cross axes)
        ink[lab.top:lab.bottom, lab.left:lab.right] = False
        off = (lab.width - strip.shape[1]) // 2
        ink[lab.top:lab.bottom, lab.left + off:lab.left + off + strip.shape[1]] |= strip

    data = np.where(ink, 0.0, 1.0)[:, :, None].repeat(3, axis=2)
    return Raster(data, Space.PIXEL01)
