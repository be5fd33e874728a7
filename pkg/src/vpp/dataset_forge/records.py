"""Unified grounding records and converters from the four source formats."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from ..geometry import ImageDims, NormBox, pad_placement

INSTRUCTION = (
    "Each image is accompanied by axes. If the question pertains to the bounding box "
    "coordinates, refer to the axes for the response."
)

GROUNDING_TEMPLATES = (
    "Please provide the bounding box coordinate of the region this sentence describes: {}.",
)
REGION_CAPTION_TEMPLATE = "Please provide a short description for this region: {}."

IMAGE_TOKEN = "<image>"

_NUM = r"-?\d+(?:\.\d+)?"
BOX_RE = re.compile(rf"\[\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\]")
CANONICAL_BOX_RE = re.compile(r"\[(?:[01]\.\d\d), (?:[01]\.\d\d), (?:[01]\.\d\d), (?:[01]\.\d\d)\]")
# chatterbox-style inline tokens: <phrase:[x1, y1, x2, y2]>
CB_TOKEN_RE = re.compile(r"<\s*([^<>:]+?)\s*:\s*(\[[^\]]*\])\s*>")


class SourceKind(enum.Enum):
    LLAVA665K = "llava665k"
    CB_GRD = "cb-grd"
    CB_REF = "cb-ref"
    GENIXER = "genixer"


class Task(enum.Enum):
    GROUNDING = "grounding"
    REGION_CAPTION = "region_caption"


class InstructionMode(enum.Enum):
    NONE = "none"
    SYSTEM = "system"
    SAMPLE_LEVEL = "sample"


class ForgeError(ValueError):
    """A record could not be converted; the message names the record."""


class SchemaError(ForgeError):
    pass


class BoxRangeError(ForgeError):
    pass


@dataclass(frozen=True)
class Turn:
    role: str  # "human" or "assistant"
    text: str


@dataclass(frozen=True)
class Sample:
    image: str
    dims: ImageDims
    turns: tuple[Turn, ...]
    boxes: tuple[tuple[NormBox, str], ...] = ()
    task: Task = Task.GROUNDING
    instruction_mode: InstructionMode = InstructionMode.NONE

    @property
    def query(self) -> str:
        return next(t.text for t in self.turns if t.role == "human")

    @property
    def answer(self) -> str:
        return self.turns[-1].text if self.turns and self.turns[-1].role == "assistant" else ""

    @property
    def target_box(self) -> NormBox:
        return self.boxes[0][0]


def round2(v: Fraction | float) -> float:
    """Round half-up to two decimals, exact on rational input."""
    d = Decimal(v.numerator) / Decimal(v.denominator) if isinstance(v, Fraction) else Decimal(v)
    return float(d.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def format_box(box: NormBox) -> str:
    return "[" + ", ".join(f"{round2(v):.2f}" for v in box.as_tuple()) + "]"


def quantize_box(box: NormBox) -> NormBox:
    return NormBox(*(round2(v) for v in box.as_tuple()))


def normalize_pixels(xyxy: Iterable[float], dims: ImageDims, where: str = "") -> NormBox:
    """Absolute pixel corners -> two-decimal padded-square box, rounded exactly."""
    vals = [Fraction(v) if isinstance(v, int) else Fraction(str(v)) for v in xyxy]
    if len(vals) != 4:
        raise SchemaError(f"{where}box needs 4 coordinates, got {len(vals)}")
    x1, y1, x2, y2 = vals
    if not (0 <= x1 <= x2 <= dims.width and 0 <= y1 <= y2 <= dims.height):
        raise BoxRangeError(
            f"{where}box {[float(v) for v in vals]} outside {dims.width}x{dims.height} frame"
        )
    p = pad_placement(dims)
    offs = (p.offset_x, p.offset_y, p.offset_x, p.offset_y)
    return NormBox(*(round2((v + o) / p.side) for v, o in zip(vals, offs)))


def _parse_norm_box(text: str, where: str) -> NormBox:
    m = BOX_RE.search(text)
    if m is None:
        raise SchemaError(f"{where}no bracketed box in {text!r}")
    vals = [float(g) for g in m.groups()]
    try:
        return quantize_box(NormBox(*vals))
    except ValueError as e:
        raise BoxRangeError(f"{where}box {vals} is not a valid normalized box") from e


def _conversation(record: Any, where: str) -> list[dict]:
    conv = record.get("conversations") if isinstance(record, Mapping) else record
    if not isinstance(conv, list) or not conv:
        raise SchemaError(f"{where}expected a non-empty conversation list")
    for turn in conv:
        if not isinstance(turn, Mapping) or "from" not in turn or "value" not in turn:
            raise SchemaError(f"{where}conversation turn lacks 'from'/'value': {turn!r}")
    return conv


def _role(name: str) -> str:
    return "human" if name == "human" else "assistant"


def _image_id(record: Any, default: str) -> str:
    if isinstance(record, Mapping):
        return str(record.get("image", record.get("id", default)))
    return default


def ingest(kind: SourceKind, record: Any, dims: ImageDims, where: str = "") -> Sample:
    """Convert one native record into a unified Sample.

    ``where`` prefixes error messages (e.g. ``"cb.jsonl:12: "``).
    """
    image = _image_id(record, "")
    if kind is SourceKind.LLAVA665K:
        conv = _conversation(record, where)
        turns = tuple(Turn(_role(t["from"]), str(t["value"])) for t in conv)
        human = " ".join(t.text for t in turns if t.role == "human")
        reply = " ".join(t.text for t in turns if t.role == "assistant")
        if BOX_RE.search(reply):
            box = _parse_norm_box(reply, where)
            phrase = human.split(":")[-1].strip().rstrip(".") if ":" in human else ""
            return Sample(image, dims, turns, ((box, phrase),), Task.GROUNDING)
        box = _parse_norm_box(human, where)
        return Sample(image, dims, turns, ((box, ""),), Task.REGION_CAPTION)

    if kind in (SourceKind.CB_GRD, SourceKind.CB_REF):
        conv = _conversation(record, where)
        text = " ".join(str(t["value"]) for t in conv)
        m = CB_TOKEN_RE.search(text)
        if m is None:
            raise SchemaError(f"{where}no <phrase:[x1, y1, x2, y2]> token found")
        phrase = m.group(1).strip()
        coords = [float(v) for v in re.findall(_NUM, m.group(2))]
        box = normalize_pixels(coords, dims, where)
        if kind is SourceKind.CB_GRD:
            q = GROUNDING_TEMPLATES[0].format(phrase)
            turns = (Turn("human", q), Turn("assistant", format_box(box)))
            return Sample(image, dims, turns, ((box, phrase),), Task.GROUNDING)
        answer = next((str(t["value"]) for t in conv if t["from"] != "human"), "")
        answer = CB_TOKEN_RE.sub("", answer).strip()
        if not answer:
            raise SchemaError(f"{where}region caption record has no answer text")
        q = REGION_CAPTION_TEMPLATE.format(format_box(box))
        turns = (Turn("human", q), Turn("assistant", answer))
        return Sample(image, dims, turns, ((box, ""),), Task.REGION_CAPTION)

    if kind is SourceKind.GENIXER:
        if not isinstance(record, Mapping) or "bbox" not in record or "expression" not in record:
            raise SchemaError(f"{where}Genixer record needs 'bbox' and 'expression'")
        bbox = record["bbox"]
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise SchemaError(f"{where}'bbox' must be a 4-element list, got {bbox!r}")
        phrase = str(record["expression"]).strip()
        box = normalize_pixels([float(v) if not isinstance(v, int) else v for v in bbox], dims, where)
        turns = (Turn("human", GROUNDING_TEMPLATES[0].format(phrase)), Turn("assistant", format_box(box)))
        return Sample(image, dims, turns, ((box, phrase),), Task.GROUNDING)

    raise SchemaError(f"{where}unknown source kind {kind!r}")


def _split_image_token(text: str) -> tuple[str, str]:
    if text.startswith(IMAGE_TOKEN):
        rest = text[len(IMAGE_TOKEN):]
        return IMAGE_TOKEN + "\n", rest.lstrip("\n")
    return "", text


def _strip_instruction(text: str) -> str:
    if text.startswith(INSTRUCTION):
        return text[len(INSTRUCTION):].lstrip(" \n")
    return text


def inject_instruction(s: Sample, mode: InstructionMode) -> Sample:
    """Apply an instruction level; idempotent for each mode."""
    turns = list(s.turns)
    i = next(k for k, t in enumerate(turns) if t.role == "human")
    # the instruction goes after a leading <image> token, before the question
    head, body = _split_image_token(turns[i].text)
    body = _strip_instruction(body)
    if mode is InstructionMode.SAMPLE_LEVEL:
        body = f"{INSTRUCTION} {body}"
    turns[i] = Turn("human", head + body)
    return replace(s, turns=tuple(turns), instruction_mode=mode)


def prompt_text(s: Sample) -> str:
    """Text the model reads before answering (system instruction included)."""
    q = s.query
    if s.instruction_mode is InstructionMode.SYSTEM:
        return f"{INSTRUCTION} {q}"
    return q


def to_record(s: Sample) -> dict:
    return {
        "image": s.image,
        "dims": [s.dims.width, s.dims.height],
        "conversations": [
            {"from": "human" if t.role == "human" else "gpt", "value": t.text} for t in s.turns
        ],
        "task": s.task.value,
        "instruction": s.instruction_mode.value,
    }


def from_record(rec: Mapping, where: str = "") -> Sample:
    """Re-read a unified record (the Llava665K-style output of ``to_record``)."""
    try:
        dims = ImageDims(*rec["dims"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{where}bad or missing 'dims': {e}") from e
    s = ingest(SourceKind.LLAVA665K, rec, dims, where)
    mode = InstructionMode(rec.get("instruction", "none"))
    task = Task(rec.get("task", s.task.value))
    return replace(s, task=task, instruction_mode=mode)


def read_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as e:
                    raise SchemaError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e


def load_dims_table(path: str | Path) -> dict[str, ImageDims]:
    """Sidecar of original image sizes: JSONL rows {"image", "width", "height"}."""
    out = {}
    for lineno, rec in read_jsonl(path):
        try:
            out[str(rec["image"])] = ImageDims(int(rec["width"]), int(rec["height"]))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{path}:{lineno}: bad dims row ({e})") from e
    return out


def ingest_file(
    kind: SourceKind,
    path: str | Path,
    dims_table: Mapping[str, ImageDims] | None = None,
    mode: InstructionMode = InstructionMode.SAMPLE_LEVEL,
) -> list[Sample]:
    samples = []
    for lineno, rec in read_jsonl(path):
        where = f"{path}:{lineno}: "
        image = _image_id(rec, "")
        if dims_table is not None and image in dims_table:
            dims = dims_table[image]
        elif isinstance(rec, Mapping) and "dims" in rec:
            dims = ImageDims(*rec["dims"])
        elif kind is SourceKind.LLAVA665K:
            # already normalized; size is informational only
            dims = ImageDims(1, 1)
        else:
            raise SchemaError(f"{where}no dims for image {image!r} (supply a dims sidecar)")
        samples.append(inject_instruction(ingest(kind, rec, dims, where), mode))
    return samples


def write_jsonl(samples: Iterable[Sample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(to_record(s), ensure_ascii=False) + "\n")


def load_unified(path: str | Path) -> list[Sample]:
    return [from_record(rec, f"{path}:{n}: ") for n, rec in read_jsonl(path)]


def validate(samples: Iterable[Sample]) -> list[str]:
    """Human-readable violations; empty when every sample is well formed."""
    problems = []
    for i, s in enumerate(samples):
        tag = f"sample {i} ({s.image or 'no image'})"
        if not s.turns or s.turns[0].role != "human":
            problems.append(f"{tag}: conversation must start with a human turn")
        for box, _ in s.boxes:
            vals = box.as_tuple()
            if not all(0.0 <= v <= 1.0 for v in vals) or vals[0] > vals[2] or vals[1] > vals[3]:
                problems.append(f"{tag}: box {vals} out of range")
            elif any(round2(v) != v for v in vals):
                problems.append(f"{tag}: box {vals} not on the two-decimal grid")
        for t in s.turns:
            for m in BOX_RE.finditer(t.text):
                if not CANONICAL_BOX_RE.fullmatch(m.group(0)):
                    problems.append(f"{tag}: box string {m.group(0)!r} is not two-decimal 'x, y' format")
                elif any(not 0.0 <= float(g) <= 1.0 for g in m.groups()):
                    problems.append(f"{tag}: box string {m.group(0)!r} out of range")
        if s.task is Task.GROUNDING:
            last = s.turns[-1] if s.turns else None
            if last is None or last.role != "assistant":
                problems.append(f"{tag}: grounding sample must end with an assistant turn")
            elif len(BOX_RE.findall(last.text)) != 1:
                problems.append(f"{tag}: grounding answer must contain exactly one box")
    return problems
