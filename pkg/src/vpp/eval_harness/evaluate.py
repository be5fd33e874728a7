"""Acc@IoU scoring of model responses, with a reproducibility fingerprint."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from ..geometry import NormBox, acc_at_iou
from ..mini_mllm.checkpoint import config_to_dict
from ..mini_mllm.model import ModelConfig, VPPModel
from ..mini_mllm.train import Example, predict
from .parse import parse_box


@dataclass(frozen=True)
class SplitRow:
    split: str
    n: int
    accuracy: float
    parse_failures: int

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError(f"split {self.split!r} is empty")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[SplitRow, ...]
    fingerprint: str
    threshold: float = 0.5

    def row(self, split: str) -> SplitRow:
        return next(r for r in self.rows if r.split == split)


def fingerprint(cfg: ModelConfig, dataset_id: str, extra: Mapping | None = None) -> str:
    payload = {"model": config_to_dict(cfg), "dataset": dataset_id, "extra": dict(extra or {})}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def score(
    responses: Sequence[str],
    truths: Sequence[NormBox],
    split: str = "test",
    threshold: float = 0.5,
    strict: bool = False,
) -> SplitRow:
    if len(responses) != len(truths):
        raise ValueError(f"{len(responses)} responses for {len(truths)} ground-truth boxes")
    boxes = [parse_box(r, strict) for r in responses]
    # unparseable answers stay in the denominator as misses
    acc = acc_at_iou(boxes, truths, threshold)
    return SplitRow(split, len(truths), acc, sum(b is None for b in boxes))


def evaluate(
    predictor: Callable[[Sequence[Example]], list[str]],
    splits: Mapping[str, Sequence[Example]],
    fingerprint_hex: str,
    threshold: float = 0.5,
    strict: bool = False,
) -> EvalReport:
    rows = []
    for name, examples in splits.items():
        if not examples:
            raise ValueError(f"split {name!r} is empty")
        responses = predictor(examples)
        rows.append(score(responses, [e.sample.target_box for e in examples], name, threshold, strict))
    return EvalReport(tuple(rows), fingerprint_hex, threshold)


def evaluate_model(
    model: VPPModel,
    splits: Mapping[str, Sequence[Example]],
    dataset_id: str,
    threshold: float = 0.5,
    strict: bool = False,
) -> EvalReport:
    return evaluate(
        lambda ex: predict(model, ex),
        splits,
        fingerprint(model.cfg, dataset_id),
        threshold,
        strict,
    )
