"""Pull a box out of free-form model text."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..geometry import NormBox

_NUM = r"\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*"
BOX_TUPLE_RE = re.compile(r"\[" + ",".join([_NUM] * 4) + r"\]")


@dataclass(frozen=True)
class ParseResult:
    box: NormBox | None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.box is not None


def parse_box_verbose(response: str, strict: bool = False) -> ParseResult:
    """First bracketed 4-tuple of decimals; lenient mode clamps and reorders corners."""
    if not isinstance(response, str):
        return ParseResult(None, f"response is {type(response).__name__}, not text")
    m = BOX_TUPLE_RE.search(response)
    if m is None:
        return ParseResult(None, "no bracketed 4-tuple of decimals")
    try:
        x1, y1, x2, y2 = (float(g) for g in m.groups())
    except ValueError as e:  # pragma: no cover - the pattern only admits numbers
        return ParseResult(None, f"unreadable number ({e})")
    vals = (x1, y1, x2, y2)
    if any(v != v or v in (float("inf"), float("-inf")) for v in vals):
        return ParseResult(None, "non-finite coordinate")
    if strict:
        if any(not 0.0 <= v <= 1.0 for v in vals):
            return ParseResult(None, f"coordinate outside [0, 1] in {m.group(0)}")
        if x1 > x2 or y1 > y2:
            return ParseResult(None, f"corners out of order in {m.group(0)}")
        return ParseResult(NormBox(x1, y1, x2, y2))
    x1, y1, x2, y2 = (min(max(v, 0.0), 1.0) for v in vals)
    return ParseResult(NormBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)))


def parse_box(response: str, strict: bool = False) -> NormBox | None:
    return parse_box_verbose(response, strict).box


def box_text(box: NormBox) -> str:
    """Lossless serialization that ``parse_box`` reads back exactly."""
    return "[" + ", ".join(repr(float(v)) for v in box.as_tuple()) + "]"
