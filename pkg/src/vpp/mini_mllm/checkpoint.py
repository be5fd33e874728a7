"""Checkpoint I/O: parameter arrays in an ``.npz``, config and vocab as JSON inside it."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..axis_render import AxisSpec, AxisVariant
from ..global_vpp import OverlayConfig
from .model import ModelConfig, Fusion, VPPModel
from .vocab import Vocab

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def config_to_dict(cfg: ModelConfig) -> dict:
    return {
        "image_side": cfg.image_side,
        "patch": cfg.patch,
        "dim": cfg.dim,
        "encoder_layers": cfg.encoder_layers,
        "decoder_layers": cfg.decoder_layers,
        "heads": cfg.heads,
        "k_queries": cfg.k_queries,
        "fusion": cfg.fusion.value,
        "alpha": cfg.overlay.alpha,
        "mask_width": cfg.overlay.mask_width,
        "axis_variant": cfg.axis.variant.value,
        "unit_scale": cfg.axis.unit_scale,
        "font_size": cfg.axis.font_size,
        "use_global": cfg.use_global,
        "use_local": cfg.use_local,
        "mlp_ratio": cfg.mlp_ratio,
        "max_len": cfg.max_len,
        "channel_mean": list(cfg.channel_mean),
        "channel_std": list(cfg.channel_std),
        "seed": cfg.seed,
    }


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    overlay = OverlayConfig(d.pop("alpha"), d.pop("mask_width"))
    axis = AxisSpec(AxisVariant(d.pop("axis_variant")), d.pop("unit_scale"), d.pop("font_size"))
    fusion = Fusion(d.pop("fusion"))
    d["channel_mean"] = tuple(d["channel_mean"])
    d["channel_std"] = tuple(d["channel_std"])
    return ModelConfig(fusion=fusion, overlay=overlay, axis=axis, **d)


def save_checkpoint(path: str | Path, model: VPPModel, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": config_to_dict(model.cfg),
        "vocab": list(model.vocab.tokens),
        "extra": extra or {},
    }
    arrays = {name: p.detach().numpy() for name, p in model.named_parameters()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[VPPModel, dict]:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"{path}: not a readable checkpoint ({e})") from e
    with data:
        if "__meta__" not in data:
            raise CheckpointError(f"{path}: missing metadata block")
        meta = json.loads(data["__meta__"].tobytes().decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
        vocab = Vocab(t for t in meta["vocab"])
        if list(vocab.tokens) != meta["vocab"]:
            raise CheckpointError(f"{path}: vocabulary does not round-trip")
        model = VPPModel(config_from_dict(meta["config"]), vocab)
        with torch.no_grad():
            for name, p in model.named_parameters():
                if name not in data:
                    raise CheckpointError(f"{path}: missing parameter {name}")
                arr = data[name]
                if arr.shape != tuple(p.shape):
                    raise CheckpointError(f"{path}: parameter {name} has shape {arr.shape}, expected {tuple(p.shape)}")
                p.copy_(torch.from_numpy(arr))
    model.eval()
    return model, meta.get("extra", {})


def write_loss_csv(path: str | Path, history: Sequence[float]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(history):
            w.writerow([i, repr(float(v))])
    return path


def read_loss_csv(path: str | Path) -> list[float]:
    with open(path, newline="") as fh:
        return [float(row["loss"]) for row in csv.DictReader(fh)]
