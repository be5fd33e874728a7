"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .model import GROUPS, VPPModel

FD_STEP = 1e-3
ABS_FLOOR = 1e-9


@dataclass(frozen=True)
class CoordCheck:
    group: str
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    masked_out: bool = False

    @property
    def rel_error(self) -> float:
        a, n = self.analytic, self.numeric
        denom = max(abs(a), abs(n))
        return 0.0 if denom == 0.0 else abs(a - n) / denom

    def below_floor(self, abs_floor: float = ABS_FLOOR) -> bool:
        # coordinates where both gradients vanish carry no relative information
        return max(abs(self.analytic), abs(self.numeric)) <= abs_floor

    def ok(self, tol: float, abs_floor: float = ABS_FLOOR) -> bool:
        return self.below_floor(abs_floor) or self.rel_error <= tol


@dataclass
class GradCheckReport:
    checks: list[CoordCheck] = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def n(self) -> int:
        return len(self.checks)

    @property
    def max_rel_error(self) -> float:
        """Worst relative error over coordinates above the absolute floor."""
        return max((c.rel_error for c in self.checks if not c.below_floor()), default=0.0)

    @property
    def n_below_floor(self) -> int:
        return sum(c.below_floor() for c in self.checks)

    @property
    def pass_fraction(self) -> float:
        if not self.checks:
            return 0.0
        return sum(c.ok(self.tolerance) for c in self.checks) / len(self.checks)

    @property
    def groups_covered(self) -> set[str]:
        return {c.group for c in self.checks}

    @property
    def masked(self) -> list[CoordCheck]:
        return [c for c in self.checks if c.masked_out]

    def summary(self) -> str:
        return (
            f"{self.n} coords, {self.pass_fraction:.2%} within {self.tolerance:g} rel, "
            f"max rel error {self.max_rel_error:.3e} ({self.n_below_floor} below the {ABS_FLOOR:g} floor), "
            f"groups {sorted(self.groups_covered)}"
        )


def check_gradients(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[tuple[str, str, torch.nn.Parameter]],
    coords: Sequence[tuple[int, tuple[int, ...]]],
    step: float | Sequence[float] = FD_STEP,
    masked: Callable[[int, tuple[int, ...]], bool] | None = None,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare autograd against central differences at chosen coordinates.

    ``params`` holds (group, name, tensor); ``coords`` picks (param index, element index).
    ``step`` is one value or one per entry of ``params``.
    """
    steps = [float(step)] * len(params) if isinstance(step, (int, float)) else list(step)
    for _, _, p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [p for _, _, p in params], allow_unused=True)
    report = GradCheckReport(tolerance=tolerance)
    with torch.no_grad():
        for pi, idx in coords:
            group, name, p = params[pi]
            g = grads[pi]
            analytic = 0.0 if g is None else float(g[idx])
            h = steps[pi]
            orig = float(p[idx])
            p[idx] = orig + h
            up = float(loss_fn())
            p[idx] = orig - h
            down = float(loss_fn())
            p[idx] = orig
            numeric = (up - down) / (2 * h)
            report.checks.append(
                CoordCheck(group, name, idx, analytic, numeric, bool(masked and masked(pi, idx)))
            )
    return report


def grad_check(
    model: VPPModel,
    images: torch.Tensor,
    prompts: Sequence[Sequence[int]],
    answers: Sequence[Sequence[int]],
    n_coords: int = 240,
    n_masked: int = 8,
    seed: int = 0,
    step: float = FD_STEP,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Sample coordinates across every group, plus masked-out prompt pixels."""
    rng = np.random.default_rng(seed)
    named = model.named_groups()
    params = [(g, n, p) for g in GROUPS for n, p in named[g]]
    by_group: dict[str, list[int]] = {}
    for i, (g, _, _) in enumerate(params):
        by_group.setdefault(g, []).append(i)

    mask = model.vpp_mask.numpy()
    vpp_index = next(i for i, (g, _, _) in enumerate(params) if g == "global_vpp")
    inside = np.argwhere(mask > 0)
    outside = np.argwhere(mask == 0)

    coords: list[tuple[int, tuple[int, ...]]] = []
    active = [g for g in GROUPS if by_group.get(g)]
    per_group = max(1, n_coords // len(active))
    for g in active:
        for _ in range(per_group):
            if g == "global_vpp":
                r, c = inside[rng.integers(len(inside))]
                coords.append((vpp_index, (int(r), int(c), int(rng.integers(3)))))
                continue
            # weight by size so big matrices are not under-sampled
            sizes = np.array([params[i][2].numel() for i in by_group[g]], dtype=float)
            pi = by_group[g][rng.choice(len(sizes), p=sizes / sizes.sum())]
            shape = params[pi][2].shape
            coords.append((pi, tuple(int(rng.integers(s)) for s in shape)))
    for _ in range(n_masked if len(outside) else 0):
        r, c = outside[rng.integers(len(outside))]
        coords.append((vpp_index, (int(r), int(c), int(rng.integers(3)))))

    def loss_fn():
        return model.batch_loss(images, prompts, answers).loss

    def is_masked(pi: int, idx: tuple[int, ...]) -> bool:
        return pi == vpp_index and mask[idx[0], idx[1]] == 0

    # the prompt reaches the network scaled by (1 - alpha); widen its step to match
    blend = 1.0 - model.cfg.overlay.alpha
    steps = [step / blend if i == vpp_index and blend > 0 else step for i in range(len(params))]
    return check_gradients(loss_fn, params, coords, steps, is_masked, tolerance)
