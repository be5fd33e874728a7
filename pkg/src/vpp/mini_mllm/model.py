"""Tiny grounding model: patch encoder, global/local prompts, causal decoder.

The layout follows the full-size architecture at desk scale. An overlaid
input image goes through a ViT-style encoder and a 2-layer projector; a
query-based detector stand-in reads the same overlaid image; both feature
sets are fused and prefixed to the text for an autoregressive decoder.
Everything runs in float64 so finite-difference checks stay tight.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..axis_render import AxisSpec
from ..global_vpp import OverlayConfig, blend, content_side_for, init_global_vpp, mask_for
from ..image_pipeline import CLIP_MEAN, CLIP_STD, PreprocessConfig
from .vocab import Vocab

DTYPE = torch.float64
GROUPS = ("global_vpp", "encoder", "local_vpp", "projector_g", "projector_l", "decoder")


class Fusion(enum.Enum):
    CONCAT = "concat"
    CROSS_ATTN_LP_Q = "ca-lpq"  # local rows query the global rows
    CROSS_ATTN_GP_Q = "ca-gpq"  # global rows query the local rows


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    image_side: int = 64
    patch: int = 8
    dim: int = 64
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 4
    k_queries: int = 8
    fusion: Fusion = Fusion.CONCAT
    # w=30 at 336 px scales to ~6 px at 64 px
    overlay: OverlayConfig = field(default_factory=lambda: OverlayConfig(alpha=0.95, mask_width=6))
    axis: AxisSpec = field(default_factory=AxisSpec)
    use_global: bool = True
    use_local: bool = True
    mlp_ratio: int = 4
    max_len: int = 256
    channel_mean: tuple[float, float, float] = CLIP_MEAN
    channel_std: tuple[float, float, float] = CLIP_STD
    seed: int = 0

    def __post_init__(self) -> None:
        if self.image_side % self.patch:
            raise ContractError(f"image_side {self.image_side} not divisible by patch {self.patch}")
        if self.dim % self.heads:
            raise ContractError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.k_queries < 1:
            raise ContractError("k_queries must be >= 1")

    @property
    def grid(self) -> int:
        return self.image_side // self.patch

    @property
    def n_patches(self) -> int:
        return self.grid**2

    @property
    def preprocess(self) -> PreprocessConfig:
        return PreprocessConfig(self.image_side, self.channel_mean, self.channel_std)

    @property
    def content_side(self) -> int | None:
        return content_side_for(self.axis, self.image_side)

    @property
    def visual_rows(self) -> int:
        if not self.use_local:
            return self.n_patches
        return {
            Fusion.CONCAT: self.n_patches + self.k_queries,
            Fusion.CROSS_ATTN_LP_Q: self.k_queries,
            Fusion.CROSS_ATTN_GP_Q: self.n_patches,
        }[self.fusion]


def group_generator(seed: int, group: str) -> torch.Generator:
    digest = hashlib.sha256(f"{seed}/{group}".encode()).digest()
    return torch.Generator().manual_seed(int.from_bytes(digest[:8], "little") & (2**63 - 1))


def axis_code(values: torch.Tensor, channels: int) -> torch.Tensor:
    """Sine/cosine code of scalars in [0, 1]; nearby values get nearby codes."""
    n = channels // 2
    # geometric ladder from one half-turn to ~20 turns across [0, 1]
    freq = math.pi * 40.0 ** (torch.arange(n, dtype=DTYPE) / max(n - 1, 1))
    ang = values.to(DTYPE)[:, None] * freq[None, :]
    return torch.cat([ang.sin(), ang.cos()], dim=1)


def position_code(grid: int, dim: int) -> torch.Tensor:
    """Patch-center code, x in the first half of the channels and y in the second."""
    half = dim // 2
    c = axis_code((torch.arange(grid, dtype=DTYPE) + 0.5) / grid, half)
    x = c[None, :, :].expand(grid, grid, -1)
    y = c[:, None, :].expand(grid, grid, -1)
    return F.pad(torch.cat([x, y], dim=2).reshape(grid * grid, -1), (0, dim - 2 * c.shape[1]))


def coordinate_code(n: int, dim: int) -> torch.Tensor:
    """Code for the n coordinate tokens, written into both halves so x and y readouts can match it."""
    c = axis_code(torch.linspace(0.0, 1.0, n, dtype=DTYPE), dim // 2)
    return F.pad(torch.cat([c, c], dim=1), (0, dim - 2 * c.shape[1]))


def identity_mlp_(mlp: "MLP", noise: torch.Tensor | None = None) -> None:
    """Set a 2d-hidden GELU MLP to the exact identity: gelu(x) - gelu(-x) = x."""
    d = mlp[0].in_features
    eye = torch.eye(d, dtype=DTYPE)
    mlp[0].weight.copy_(torch.cat([eye, -eye], dim=0))
    mlp[2].weight.copy_(torch.cat([eye, -eye], dim=1))
    mlp[0].bias.zero_()
    mlp[2].bias.zero_()
    if noise is not None:
        mlp[2].weight.add_(noise)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim, dtype=DTYPE)
        self.kv = nn.Linear(dim, 2 * dim, dtype=DTYPE)
        self.out = nn.Linear(dim, dim, dtype=DTYPE)

    def forward(self, x, mem=None, bias=None):
        mem = x if mem is None else mem
        b, tq, d = x.shape
        tk = mem.shape[1]
        h = self.heads
        q = self.q(x).view(b, tq, h, d // h).transpose(1, 2)
        k, v = self.kv(mem).split(d, dim=-1)
        k = k.reshape(b, tk, h, d // h).transpose(1, 2)
        v = v.reshape(b, tk, h, d // h).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(d // h)
        if bias is not None:
            att = att + bias
        y = att.softmax(dim=-1) @ v
        return self.out(y.transpose(1, 2).reshape(b, tq, d))


class MLP(nn.Sequential):
    def __init__(self, d_in: int, d_hidden: int, d_out: int):
        super().__init__(
            nn.Linear(d_in, d_hidden, dtype=DTYPE),
            nn.GELU(),
            nn.Linear(d_hidden, d_out, dtype=DTYPE),
        )


class Block(nn.Module):
    """Pre-norm transformer block; optional cross-attention memory."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, cross: bool = False):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim, dtype=DTYPE)
        self.attn = Attention(dim, heads)
        self.ln_mem = nn.LayerNorm(dim, dtype=DTYPE) if cross else None
        self.ln2 = nn.LayerNorm(dim, dtype=DTYPE)
        self.mlp = MLP(dim, mlp_ratio * dim, dim)

    def forward(self, x, mem=None, bias=None):
        if self.ln_mem is not None:
            x = x + self.attn(self.ln1(x), self.ln_mem(mem))
        else:
            x = x + self.attn(self.ln1(x), bias=bias)
        return x + self.mlp(self.ln2(x))


class Encoder(nn.Module):
    """Patch embedding + learned row/column position embeddings + self-attention."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.patch = cfg.patch
        self.embed = nn.Linear(3 * cfg.patch**2, cfg.dim, dtype=DTYPE)
        self.row_pos = nn.Parameter(torch.zeros(cfg.grid, cfg.dim, dtype=DTYPE))
        self.col_pos = nn.Parameter(torch.zeros(cfg.grid, cfg.dim, dtype=DTYPE))
        self.blocks = nn.ModuleList(Block(cfg.dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.encoder_layers))
        self.ln = nn.LayerNorm(cfg.dim, dtype=DTYPE)

    def positions(self) -> torch.Tensor:
        g = self.row_pos.shape[0]
        return (self.row_pos[:, None, :] + self.col_pos[None, :, :]).reshape(g * g, -1)

    def forward(self, patches):
        x = self.embed(patches) + self.positions()
        for blk in self.blocks:
            x = blk(x)
        return self.ln(x)


class QueryDetector(nn.Module):
    """Detector stand-in: patch trunk, fixed position code, k learned queries cross-attending."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.trunk = MLP(3 * cfg.patch**2, cfg.dim, cfg.dim)
        self.register_buffer("pos", position_code(cfg.grid, cfg.dim), persistent=False)
        self.queries = nn.Parameter(torch.zeros(cfg.k_queries, cfg.dim, dtype=DTYPE))
        self.blocks = nn.ModuleList(
            Block(cfg.dim, cfg.heads, cfg.mlp_ratio, cross=True) for _ in range(cfg.decoder_layers)
        )
        self.ln = nn.LayerNorm(cfg.dim, dtype=DTYPE)

    def forward(self, patches, queries=None):
        mem = self.trunk(patches) + self.pos
        q = self.queries if queries is None else queries
        q = q.unsqueeze(0).expand(patches.shape[0], -1, -1)
        for blk in self.blocks:
            q = blk(q, mem)
        return self.ln(q)


class CrossFusion(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.ln_q = nn.LayerNorm(dim, dtype=DTYPE)
        self.ln_kv = nn.LayerNorm(dim, dtype=DTYPE)
        self.attn = Attention(dim, heads)

    def forward(self, query, kv):
        return query + self.attn(self.ln_q(query), self.ln_kv(kv))


def causal_bias(t: int) -> torch.Tensor:
    idx = torch.arange(t)
    return torch.zeros(t, t, dtype=DTYPE).masked_fill(idx[None, :] > idx[:, None], float("-inf"))


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int, coord_start: int):
        super().__init__()
        self.tok = nn.Embedding(vocab_size, cfg.dim, dtype=DTYPE)
        self.pos = nn.Parameter(torch.zeros(cfg.max_len, cfg.dim, dtype=DTYPE))
        self.blocks = nn.ModuleList(Block(cfg.dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.decoder_layers))
        self.ln = nn.LayerNorm(cfg.dim, dtype=DTYPE)
        self.head = nn.Linear(cfg.dim, vocab_size, bias=False, dtype=DTYPE)
        self.coord_start = coord_start

    def forward(self, visual, ids):
        x = torch.cat([visual, self.tok(ids)], dim=1)
        if x.shape[1] > self.pos.shape[0]:
            raise ContractError(f"sequence length {x.shape[1]} exceeds decoder max_len {self.pos.shape[0]}")
        x = x + self.pos[: x.shape[1]]
        bias = causal_bias(x.shape[1])
        for blk in self.blocks:
            x = blk(x, bias=bias)
        return self.head(self.ln(x))


@dataclass
class LossOutput:
    loss: torch.Tensor
    per_sample: torch.Tensor
    empty_answers: int


def answer_nll(logits, targets, mask):
    """Per-sample mean NLL over masked positions; empty answers score 0."""
    logp = logits.log_softmax(dim=-1)
    nll = -logp.gather(-1, targets.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    nll = nll * mask
    counts = mask.sum(dim=1)
    per = nll.sum(dim=1) / counts.clamp(min=1)
    return per, int((counts == 0).sum())


class VPPModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocab):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab
        vpp = init_global_vpp(cfg.axis, cfg.preprocess)
        self.global_vpp = nn.Parameter(torch.tensor(vpp.values.data, dtype=DTYPE))
        mask = mask_for(cfg.image_side, cfg.overlay)
        self.register_buffer("vpp_mask", torch.tensor(mask.bits, dtype=DTYPE), persistent=False)
        self.encoder = Encoder(cfg)
        self.projector_g = MLP(cfg.dim, 2 * cfg.dim, cfg.dim)
        self.local_vpp = QueryDetector(cfg)
        self.projector_l = nn.ModuleDict({"mlp": MLP(cfg.dim, 2 * cfg.dim, cfg.dim)})
        if cfg.fusion is not Fusion.CONCAT:
            self.projector_l["fusion"] = CrossFusion(cfg.dim, cfg.heads)
        self.decoder = Decoder(cfg, len(vocab), vocab.coord_start)
        self.reset_parameters()

    # parameter groups -------------------------------------------------

    def group_of(self, name: str) -> str:
        head = name.split(".")[0]
        if head not in GROUPS:
            raise KeyError(f"parameter {name} belongs to no group")
        return head

    def named_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        out: dict[str, list] = {g: [] for g in GROUPS}
        for name, p in self.named_parameters():
            out[self.group_of(name)].append((name, p))
        return out

    def reset_parameters(self) -> None:
        """Group-wise seeded init, so each group's values do not depend on the others."""
        cfg = self.cfg
        with torch.no_grad():
            for group, params in self.named_groups().items():
                if group == "global_vpp":
                    continue
                gen = group_generator(cfg.seed, group)
                for name, p in params:
                    owner = self.get_submodule(name.rsplit(".", 1)[0])
                    if isinstance(owner, nn.LayerNorm):
                        p.fill_(1.0 if name.endswith("weight") else 0.0)
                    elif name.endswith("queries"):
                        p.copy_(torch.randn(p.shape, generator=gen, dtype=DTYPE))
                    elif name.endswith("bias"):
                        p.zero_()
                    elif name.endswith((".q.weight", ".kv.weight")):
                        # unit-scale scores so attention is not stuck at uniform
                        p.copy_(torch.randn(p.shape, generator=gen, dtype=DTYPE) / math.sqrt(p.shape[1]))
                    elif name.startswith(("encoder.embed.", "local_vpp.trunk.", "decoder.tok.")):
                        # input-side maps keep unit scale so visual rows are not drowned
                        std = 1.0 / math.sqrt(p.shape[-1]) if p.dim() == 2 and "tok" not in name else 1.0
                        p.copy_(std * torch.randn(p.shape, generator=gen, dtype=DTYPE))
                    else:
                        p.copy_(0.02 * torch.randn(p.shape, generator=gen, dtype=DTYPE))
                if group == "projector_g":
                    identity_mlp_(self.projector_g, 0.01 * torch.randn(self.projector_g[2].weight.shape, generator=gen, dtype=DTYPE))
                if group == "projector_l":
                    mlp = self.projector_l["mlp"]
                    identity_mlp_(mlp, 0.01 * torch.randn(mlp[2].weight.shape, generator=gen, dtype=DTYPE))
            # position tables start from the shared coordinate code and stay learnable
            code = position_code(cfg.grid, cfg.dim).reshape(cfg.grid, cfg.grid, cfg.dim)
            half = cfg.dim // 2
            self.encoder.col_pos.copy_(F.pad(code[0, :, :half], (0, cfg.dim - half)))
            self.encoder.row_pos.copy_(F.pad(code[:, 0, half:], (half, 0)))
            # sequence positions at token scale so attention can address them
            n = cfg.max_len
            self.decoder.pos.copy_(axis_code(torch.arange(n, dtype=DTYPE) / n, cfg.dim))
            ids = self.vocab.coord_ids
            coords = coordinate_code(len(ids), cfg.dim)
            self.decoder.tok.weight[ids.start:ids.stop] = coords
            self.decoder.head.weight[ids.start:ids.stop] = 0.02 * coords

    # forward pieces -----------------------------------------------------

    def patchify(self, images):
        b, h, w, c = images.shape
        if h != self.cfg.image_side or w != self.cfg.image_side or c != 3:
            raise ContractError(
                f"expected images of {self.cfg.image_side}x{self.cfg.image_side}x3, got {h}x{w}x{c}"
            )
        p, g = self.cfg.patch, self.cfg.grid
        x = images.reshape(b, g, p, g, p, c).permute(0, 1, 3, 2, 4, 5)
        return x.reshape(b, g * g, p * p * c)

    def overlay(self, images):
        if not self.cfg.use_global:
            return images
        return blend(images, self.global_vpp, self.vpp_mask, self.cfg.overlay.alpha)

    def encode_image(self, x_gp):
        return self.encoder(self.patchify(x_gp))

    def project(self, f, group: str):
        mlp = self.projector_g if group == "projector_g" else self.projector_l["mlp"]
        if f.shape[-1] != mlp[0].in_features:
            raise ContractError(f"feature width {f.shape[-1]} != projector input {mlp[0].in_features}")
        return mlp(f)

    def local_prompt(self, x_gp, queries=None):
        return self.local_vpp(self.patchify(x_gp), queries)

    def fuse(self, f_gp, f_lp):
        if f_gp.shape[-1] != f_lp.shape[-1]:
            raise ContractError(f"cannot fuse widths {f_gp.shape[-1]} and {f_lp.shape[-1]}")
        mode = self.cfg.fusion
        if mode is Fusion.CONCAT:
            return torch.cat([f_gp, f_lp], dim=1)
        if mode is Fusion.CROSS_ATTN_LP_Q:
            return self.projector_l["fusion"](f_lp, f_gp)
        return self.projector_l["fusion"](f_gp, f_lp)

    def visual_features(self, images):
        """Images (B,H,W,3 standardized) -> fused visual rows F'."""
        x_gp = self.overlay(images)
        f_gp = self.project(self.encode_image(x_gp), "projector_g")
        if not self.cfg.use_local:
            return f_gp
        f_lp = self.project(self.local_prompt(x_gp), "projector_l")
        return self.fuse(f_gp, f_lp)

    # language side --------------------------------------------------------

    def _pack(self, prompts: Sequence[Sequence[int]], answers: Sequence[Sequence[int]]):
        lens = [len(p) + len(a) for p, a in zip(prompts, answers)]
        t = max(lens)
        ids = torch.full((len(prompts), t), self.vocab.pad_id, dtype=torch.long)
        targets = torch.full_like(ids, -1)
        mask = torch.zeros(len(prompts), t, dtype=DTYPE)
        for i, (p, a) in enumerate(zip(prompts, answers)):
            seq = list(p) + list(a)
            ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
            # position j predicts token j+1
            for j in range(len(p) - 1, len(seq) - 1):
                targets[i, j] = seq[j + 1]
                mask[i, j] = 1.0
        return ids, targets, mask

    def loss(self, visual, prompts, answers) -> LossOutput:
        """Mean over samples of the per-sample mean answer NLL.

        ``prompts`` are BOS-framed query ids; ``answers`` include the closing EOS.
        """
        ids, targets, mask = self._pack(prompts, answers)
        if visual.shape[1] + ids.shape[1] > self.cfg.max_len:
            raise ContractError(
                f"sequence of {visual.shape[1] + ids.shape[1]} exceeds max_len {self.cfg.max_len}"
            )
        logits = self.decoder(visual, ids)[:, visual.shape[1]:]
        per, empty = answer_nll(logits, targets, mask)
        return LossOutput(per.mean(), per, empty)

    def batch_loss(self, images, prompts, answers) -> LossOutput:
        return self.loss(self.visual_features(images), prompts, answers)

    @torch.no_grad()
    def generate(self, images, prompts: Sequence[Sequence[int]], max_len: int = 16) -> list[str]:
        """Greedy decoding; prompts of equal length are decoded together."""
        if max_len <= 0:
            return ["" for _ in prompts]
        visual = self.visual_features(images)
        out: list[list[int]] = [[] for _ in prompts]
        by_len: dict[int, list[int]] = {}
        for i, p in enumerate(prompts):
            by_len.setdefault(len(p), []).append(i)
        for _, idx in sorted(by_len.items()):
            seq = torch.tensor([list(prompts[i]) for i in idx], dtype=torch.long)
            vis = visual[idx]
            done = torch.zeros(len(idx), dtype=torch.bool)
            for _ in range(max_len):
                if visual.shape[1] + seq.shape[1] > self.cfg.max_len:
                    break
                nxt = self.decoder(vis, seq)[:, -1].argmax(dim=-1)
                for r, i in enumerate(idx):
                    if not done[r]:
                        if int(nxt[r]) == self.vocab.eos_id:
                            done[r] = True
                        else:
                            out[i].append(int(nxt[r]))
                if bool(done.all()):
                    break
                seq = torch.cat([seq, nxt[:, None]], dim=1)
        return [self.vocab.detokenize(o) for o in out]


def images_tensor(arrays: Sequence[np.ndarray]) -> torch.Tensor:
    return torch.tensor(np.stack(arrays), dtype=DTYPE)
