"""Seeded single-writer training loop with per-group rates and freezing."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from ..dataset_forge import Sample, prompt_text
from ..image_pipeline import Raster, preprocess
from .model import GROUPS, ModelConfig, VPPModel, images_tensor
from .vocab import Vocab

# desk-scale rates: the from-scratch toy needs larger steps than fine-tuning,
# the prompt keeps its 10x ratio over the backbone
DEFAULT_LR = {
    "global_vpp": 1e-2,
    "encoder": 1e-3,
    "local_vpp": 1e-3,
    "projector_g": 1e-3,
    "projector_l": 1e-3,
    "decoder": 1e-3,
}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Schedule:
    epochs: int = 5
    batch_size: int = 8
    lr: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LR))
    frozen: frozenset[str] = frozenset()
    warmup_steps: int = 20
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        unknown = (set(self.lr) | set(self.frozen)) - set(GROUPS)
        if unknown:
            raise ValueError(f"unknown parameter groups: {sorted(unknown)}")


@dataclass(frozen=True)
class Example:
    image: np.ndarray  # standardized HxWx3 at the model's image_side
    prompt: tuple[int, ...]  # BOS + query tokens
    answer: tuple[int, ...]  # answer tokens + EOS
    sample: Sample


@dataclass
class TrainResult:
    model: VPPModel
    history: list[float]
    steps: int


def set_threads() -> None:
    """Honor VPP_THREADS (0 = torch default); training defaults to one thread."""
    n = int(os.environ.get("VPP_THREADS", "1"))
    if n > 0:
        torch.set_num_threads(n)


def build_vocab(samples: Sequence[Sample]) -> Vocab:
    texts = []
    for s in samples:
        texts.append(prompt_text(s))
        texts.extend(t.text for t in s.turns)
    return Vocab.build(texts)


def make_examples(
    pairs: Sequence[tuple[Raster, Sample]], cfg: ModelConfig, vocab: Vocab
) -> list[Example]:
    pre = cfg.preprocess
    content = cfg.content_side
    out = []
    for raster, s in pairs:
        img = preprocess(raster, pre, content_side=content).data
        prompt = vocab.frame(prompt_text(s))[:-1]
        answer = vocab.tokenize(s.answer) + [vocab.eos_id]
        out.append(Example(img, tuple(prompt), tuple(answer), s))
    return out


def cosine_factor(step: int, total: int, warmup: int) -> float:
    if warmup and step < warmup:
        return (step + 1) / warmup
    span = max(total - warmup, 1)
    return 0.5 * (1.0 + math.cos(math.pi * min(step - warmup, span) / span))


def make_optimizer(model: VPPModel, schedule: Schedule) -> torch.optim.Optimizer:
    param_groups = []
    for group, params in model.named_groups().items():
        trainable = group not in schedule.frozen
        for _, p in params:
            p.requires_grad_(trainable)
        if trainable and params:
            param_groups.append(
                {
                    "params": [p for _, p in params],
                    "lr": schedule.lr.get(group, DEFAULT_LR[group]),
                    "name": group,
                    # the prompt is an image, not a weight matrix
                    "weight_decay": 0.0 if group == "global_vpp" else schedule.weight_decay,
                }
            )
    if not param_groups:
        return None
    for g in param_groups:
        g["base_lr"] = g["lr"]
    return torch.optim.AdamW(param_groups)


def clip_grad_norm(params: Sequence[torch.nn.Parameter], max_norm: float) -> float:
    """Global-norm clipping with a fixed-order scalar accumulation.

    Summing per-parameter squares one at a time means an all-zero gradient
    adds an exact 0.0, so a prompt that receives no signal cannot perturb
    the clip factor through a different reduction order.
    """
    total = 0.0
    grads = [p.grad for p in params if p.grad is not None]
    for g in grads:
        total += float(g.pow(2).sum())
    norm = math.sqrt(total)
    coef = max_norm / (norm + 1e-6)
    if coef < 1.0:
        for g in grads:
            g.mul_(coef)
    return norm


def first_nonfinite_group(model: VPPModel) -> str | None:
    for group, params in model.named_groups().items():
        for _, p in params:
            if not torch.isfinite(p).all() or (p.grad is not None and not torch.isfinite(p.grad).all()):
                return group
    return None


def train(
    examples: Sequence[Example],
    cfg: ModelConfig,
    vocab: Vocab,
    schedule: Schedule = Schedule(),
    on_epoch: Callable[[int, float], None] | None = None,
    model: VPPModel | None = None,
) -> TrainResult:
    """Minimize the answer NLL; returns the model and per-epoch mean losses."""
    if not examples:
        raise ValueError("training corpus is empty")
    set_threads()
    torch.manual_seed(schedule.seed)
    model = model if model is not None else VPPModel(cfg, vocab)
    model.train()
    opt = make_optimizer(model, schedule)
    rng = np.random.default_rng([schedule.seed, 0xB47C])
    n = len(examples)
    per_epoch = math.ceil(n / schedule.batch_size)
    total = per_epoch * schedule.epochs
    history: list[float] = []
    step = 0
    for epoch in range(schedule.epochs):
        order = rng.permutation(n)
        weighted, count = 0.0, 0
        for b in range(per_epoch):
            batch = [examples[i] for i in order[b * schedule.batch_size:(b + 1) * schedule.batch_size]]
            out = model.batch_loss(
                images_tensor([e.image for e in batch]),
                [e.prompt for e in batch],
                [e.answer for e in batch],
            )
            if not torch.isfinite(out.loss):
                bad = first_nonfinite_group(model) or "decoder"
                raise TrainingError(f"non-finite loss at epoch {epoch} step {step}; first bad group: {bad}")
            if opt is not None:
                opt.zero_grad(set_to_none=True)
                out.loss.backward()
                bad = first_nonfinite_group(model)
                if bad is not None:
                    raise TrainingError(f"non-finite gradient at epoch {epoch} step {step}; first bad group: {bad}")
                trainable = [p for p in model.parameters() if p.requires_grad]
                if schedule.grad_clip > 0:
                    clip_grad_norm(trainable, schedule.grad_clip)
                factor = cosine_factor(step, total, schedule.warmup_steps)
                for g in opt.param_groups:
                    g["lr"] = g["base_lr"] * factor
                opt.step()
            weighted += out.loss.item() * len(batch)
            count += len(batch)
            step += 1
        history.append(weighted / count)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    model.eval()
    return TrainResult(model, history, step)


def predict(model: VPPModel, examples: Sequence[Example], batch_size: int = 32, max_len: int = 16) -> list[str]:
    out: list[str] = []
    for b in range(0, len(examples), batch_size):
        chunk = examples[b:b + batch_size]
        out.extend(model.generate(images_tensor([e.image for e in chunk]), [e.prompt for e in chunk], max_len))
    return out

