"""Seeded synthetic grounding scenes: colored shapes plus unambiguous expressions."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..geometry import ImageDims, NormBox
from ..image_pipeline import Raster, Space, read_png, write_png
from .records import (
    GROUNDING_TEMPLATES,
    InstructionMode,
    Sample,
    SchemaError,
    Task,
    Turn,
    format_box,
    from_record,
    inject_instruction,
    read_jsonl,
    to_record,
)

PALETTE = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.2),
    "blue": (0.15, 0.25, 0.95),
    "yellow": (0.95, 0.9, 0.1),
    "purple": (0.6, 0.2, 0.8),
    "cyan": (0.1, 0.85, 0.9),
}
SHAPES = ("rectangle", "ellipse")
SUPERLATIVES = ("leftmost", "rightmost", "topmost", "bottommost")
MAX_RETRIES = 200


@dataclass(frozen=True)
class SynthSceneSpec:
    seed: int = 0
    min_objects: int = 2
    max_objects: int = 3
    shapes: tuple[str, ...] = SHAPES
    palette: tuple[str, ...] = tuple(PALETTE)
    canvas: int = 64
    min_side: float = 0.2
    max_side: float = 0.45
    instruction_mode: InstructionMode = InstructionMode.SAMPLE_LEVEL

    def __post_init__(self) -> None:
        if not 2 <= self.min_objects <= self.max_objects <= 5:
            raise ValueError(f"object count range must sit in [2, 5], got {self.min_objects}-{self.max_objects}")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ValueError(f"shapes must be a non-empty subset of {SHAPES}")
        if not self.palette or any(c not in PALETTE for c in self.palette):
            raise ValueError(f"palette must be a non-empty subset of {tuple(PALETTE)}")
        if not 0.08 <= self.min_side <= self.max_side <= 1.0:
            raise ValueError("object sides must satisfy 0.08 <= min_side <= max_side <= 1")
        if self.canvas < 16:
            raise ValueError(f"canvas must be >= 16, got {self.canvas}")


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    box: NormBox


@dataclass(frozen=True)
class SynthItem:
    image: Raster
    sample: Sample
    objects: tuple[SceneObject, ...]
    target: int
    split: str


@dataclass(frozen=True)
class SynthCorpus:
    spec: SynthSceneSpec
    items: tuple[SynthItem, ...]

    def split(self, name: str) -> list[SynthItem]:
        return [it for it in self.items if it.split == name]

    @property
    def dataset_id(self) -> str:
        s = self.spec
        return (
            f"synth-seed{s.seed}-n{len(self.items)}-c{s.canvas}-o{s.min_objects}{s.max_objects}"
            f"-{s.instruction_mode.value}"
        )


def _pixel_mask(obj: SceneObject, canvas: int) -> np.ndarray:
    c = (np.arange(canvas) + 0.5) / canvas
    b = obj.box
    if obj.shape == "rectangle":
        return ((c[:, None] >= b.y1) & (c[:, None] <= b.y2)) & ((c[None, :] >= b.x1) & (c[None, :] <= b.x2))
    cx, cy = (b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2
    rx, ry = (b.x2 - b.x1) / 2, (b.y2 - b.y1) / 2
    return ((c[None, :] - cx) / rx) ** 2 + ((c[:, None] - cy) / ry) ** 2 <= 1.0


def render_scene(objects: tuple[SceneObject, ...], canvas: int) -> Raster:
    data = np.zeros((canvas, canvas, 3))
    for obj in objects:
        data[_pixel_mask(obj, canvas)] = PALETTE[obj.color]
    return Raster(data, Space.PIXEL01)


def object_pixels(obj: SceneObject, canvas: int) -> np.ndarray:
    return _pixel_mask(obj, canvas)


def _random_box(rng: np.random.Generator, spec: SynthSceneSpec) -> NormBox:
    lo, hi = int(round(spec.min_side * 100)), int(round(spec.max_side * 100))
    w, h = rng.integers(lo, hi + 1, size=2)
    x1 = int(rng.integers(0, 100 - w + 1))
    y1 = int(rng.integers(0, 100 - h + 1))
    return NormBox(x1 / 100, y1 / 100, (x1 + w) / 100, (y1 + h) / 100)


def _separated(a: NormBox, b: NormBox, gap: float = 0.02) -> bool:
    return a.x2 + gap <= b.x1 or b.x2 + gap <= a.x1 or a.y2 + gap <= b.y1 or b.y2 + gap <= a.y1


def _center(b: NormBox, axis: int) -> float:
    return (b.x1 + b.x2) / 2 if axis == 0 else (b.y1 + b.y2) / 2


def describe(objects: tuple[SceneObject, ...], target: int, rng: np.random.Generator) -> str | None:
    """An expression matching only ``objects[target]``, or None if none exists."""
    t = objects[target]
    options = []
    if sum(1 for o in objects if (o.color, o.shape) == (t.color, t.shape)) == 1:
        options.append(f"the {t.color} {t.shape}")
    same = [o for o in objects if o.shape == t.shape]
    if len(same) >= 2:
        for word, axis, sign in (("leftmost", 0, 1), ("rightmost", 0, -1), ("topmost", 1, 1), ("bottommost", 1, -1)):
            ranked = sorted(same, key=lambda o: sign * _center(o.box, axis))
            if ranked[0] is t and abs(_center(ranked[0].box, axis) - _center(ranked[1].box, axis)) >= 0.1:
                options.append(f"the {word} {t.shape}")
    if not options:
        return None
    return options[int(rng.integers(len(options)))]


def synth_scene(spec: SynthSceneSpec, index: int) -> tuple[tuple[SceneObject, ...], int, str]:
    rng = np.random.default_rng([spec.seed, index])
    for _ in range(MAX_RETRIES):
        n = int(rng.integers(spec.min_objects, spec.max_objects + 1))
        objs: list[SceneObject] = []
        for _ in range(MAX_RETRIES):
            box = _random_box(rng, spec)
            if all(_separated(box, o.box) for o in objs):
                color = spec.palette[int(rng.integers(len(spec.palette)))]
                shape = spec.shapes[int(rng.integers(len(spec.shapes)))]
                objs.append(SceneObject(shape, color, box))
                if len(objs) == n:
                    break
        if len(objs) < n:
            continue
        target = int(rng.integers(n))
        expr = describe(tuple(objs), target, rng)
        if expr is not None:
            return tuple(objs), target, expr
    raise RuntimeError(f"could not build an unambiguous scene for seed {spec.seed}, index {index}")


def synth_corpus(spec: SynthSceneSpec, n_samples: int) -> SynthCorpus:
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    order = np.random.default_rng([spec.seed, 0x5EED]).permutation(n_samples)
    position = np.empty(n_samples, dtype=np.int64)
    position[order] = np.arange(n_samples)
    dims = ImageDims(spec.canvas, spec.canvas)
    items = []
    for i in range(n_samples):
        objs, target, expr = synth_scene(spec, i)
        box = objs[target].box
        sample = Sample(
            image=f"synth/{spec.seed}/{i:06d}.png",
            dims=dims,
            turns=(
                Turn("human", GROUNDING_TEMPLATES[0].format(expr)),
                Turn("assistant", format_box(box)),
            ),
            boxes=((box, expr),),
            task=Task.GROUNDING,
        )
        sample = inject_instruction(sample, spec.instruction_mode)
        split = "train" if position[i] % 2 == 0 else "test"
        items.append(SynthItem(render_scene(objs, spec.canvas), sample, objs, target, split))
    return SynthCorpus(spec, tuple(items))



def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> Path:
    """PNG per scene plus ``index.jsonl`` of unified records with split and objects."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    index = out / "index.jsonl"
    with open(index, "w", encoding="utf-8") as fh:
        for i, it in enumerate(corpus.items):
            name = f"images/{i:06d}.png"
            write_png(it.image, out / name)
            rec = to_record(replace(it.sample, image=name))
            rec["split"] = it.split
            rec["target"] = it.target
            rec["objects"] = [
                {"shape": o.shape, "color": o.color, "box": list(o.box.as_tuple())} for o in it.objects
            ]
            fh.write(json.dumps(rec) + "\n")
    return index


def load_corpus_dir(root: str | Path, split: str | None = None) -> list[tuple[Raster, Sample, str]]:
    root = Path(root)
    index = root / "index.jsonl"
    if not index.exists():
        raise SchemaError(f"{index}: corpus index not found")
    out = []
    for lineno, rec in read_jsonl(index):
        where = f"{index}:{lineno}: "
        if split is not None and rec.get("split") != split:
            continue
        img_path = root / rec["image"]
        if not img_path.exists():
            raise SchemaError(f"{where}missing image {img_path}")
        out.append((read_png(img_path), from_record(rec, where), rec.get("split", "")))
    return out
