"""One-knob ablation sweeps over the toy model, with a per-cell result cache."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from ..axis_render import AxisVariant
from ..dataset_forge import InstructionMode, SynthSceneSpec, synth_corpus
from ..global_vpp import OverlayConfig
from ..mini_mllm.checkpoint import config_to_dict
from ..mini_mllm.model import Fusion, ModelConfig
from ..mini_mllm.train import Schedule, build_vocab, make_examples, predict, train
from .evaluate import fingerprint, score

CACHE_VERSION = 2
COMPONENTS = ("none", "global", "local", "both")


class SweepParam(enum.Enum):
    ALPHA = "alpha"
    MASK_WIDTH = "mask_width"
    AXIS_VARIANT = "axis_variant"
    FONT_SIZE = "font_size"
    FUSION = "fusion"
    INSTRUCTION_MODE = "instruction_mode"
    COMPONENTS = "components"
    VPP_TRAINABLE = "vpp_trainable"
    ENCODER_FROZEN = "encoder_frozen"


def parse_value(param: SweepParam, text: str) -> Any:
    """Read one sweep value from its command-line spelling."""
    t = text.strip()
    if param is SweepParam.ALPHA:
        return float(t)
    if param is SweepParam.MASK_WIDTH:
        return None if t.lower() in ("none", "nomask") else int(t)
    if param is SweepParam.AXIS_VARIANT:
        return AxisVariant(t).value
    if param is SweepParam.FONT_SIZE:
        return int(t)
    if param is SweepParam.FUSION:
        return Fusion(t).value
    if param is SweepParam.INSTRUCTION_MODE:
        return InstructionMode(t).value
    if param is SweepParam.COMPONENTS:
        if t not in COMPONENTS:
            raise ValueError(f"component setting must be one of {COMPONENTS}, got {t!r}")
        return t
    if t.lower() in ("1", "true", "yes", "on"):
        return True
    if t.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean for {param.value}, got {t!r}")


def value_label(v: Any) -> str:
    if v is None:
        return "None"
    if isinstance(v, bool):
        return "yes" if v else "no"
    return str(v)


@dataclass(frozen=True)
class SweepSpec:
    param: SweepParam
    values: tuple
    seeds: tuple[int, ...] = (1, 2, 3)
    epochs: int = 5
    n_train: int = 1000
    n_test: int = 200

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("a sweep needs at least one value")
        if not self.seeds:
            raise ValueError("a sweep needs at least one seed")
        if self.epochs < 1 or self.n_train < 1 or self.n_test < 1:
            raise ValueError("epochs, n_train and n_test must be >= 1")
        vals = list(self.values)
        # degenerate endpoints always take part
        if self.param is SweepParam.ALPHA and 1.0 not in vals:
            vals.append(1.0)
        if self.param is SweepParam.MASK_WIDTH and None not in vals:
            vals.append(None)
        if len(set(map(value_label, vals))) != len(vals):
            raise ValueError(f"duplicate sweep values: {vals}")
        object.__setattr__(self, "values", tuple(vals))


@dataclass(frozen=True)
class CellResult:
    value: Any
    seed: int
    accuracy: float | None
    parse_failures: int = 0
    history: tuple[float, ...] = ()
    seconds: float = 0.0
    error: str | None = None
    fingerprint: str = ""

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class SweepRow:
    label: str
    mean: float | None
    spread: float | None
    runs: int
    failures: int


@dataclass
class SweepTable:
    param: SweepParam
    cells: list[CellResult] = field(default_factory=list)
    fingerprint: str = ""

    def values(self) -> list:
        seen, out = set(), []
        for c in self.cells:
            key = value_label(c.value)
            if key not in seen:
                seen.add(key)
                out.append(c.value)
        return out

    def accuracies(self, value: Any) -> list[float]:
        return [c.accuracy for c in self.cells if value_label(c.value) == value_label(value) and not c.failed]

    def rows(self) -> list[SweepRow]:
        out = []
        for v in self.values():
            accs = [100.0 * a for a in self.accuracies(v)]
            fails = sum(1 for c in self.cells if value_label(c.value) == value_label(v) and c.failed)
            mean = statistics.fmean(accs) if accs else None
            spread = statistics.stdev(accs) if len(accs) > 1 else (0.0 if accs else None)
            out.append(SweepRow(value_label(v), mean, spread, len(accs), fails))
        return out

    def delta(self) -> float | None:
        """``both - none`` in accuracy points, for the components layout."""
        if self.param is not SweepParam.COMPONENTS:
            return None
        by = {r.label: r for r in self.rows()}
        if "both" not in by or "none" not in by or by["both"].mean is None or by["none"].mean is None:
            return None
        return by["both"].mean - by["none"].mean


@dataclass(frozen=True)
class CellPlan:
    model: ModelConfig
    scene: SynthSceneSpec
    schedule: Schedule


def apply_value(
    param: SweepParam, value: Any, cfg: ModelConfig, scene: SynthSceneSpec, schedule: Schedule
) -> CellPlan:
    rep = dataclasses.replace
    if param is SweepParam.ALPHA:
        cfg = rep(cfg, overlay=OverlayConfig(float(value), cfg.overlay.mask_width))
    elif param is SweepParam.MASK_WIDTH:
        cfg = rep(cfg, overlay=OverlayConfig(cfg.overlay.alpha, value))
    elif param is SweepParam.AXIS_VARIANT:
        variant = AxisVariant(value)
        # the cross and external layouts carry no mask
        overlay = cfg.overlay if variant is AxisVariant.EDGE_INTERNAL else OverlayConfig(cfg.overlay.alpha, None)
        cfg = rep(cfg, axis=rep(cfg.axis, variant=variant), overlay=overlay)
    elif param is SweepParam.FONT_SIZE:
        cfg = rep(cfg, axis=rep(cfg.axis, font_size=int(value)))
    elif param is SweepParam.FUSION:
        cfg = rep(cfg, fusion=Fusion(value), use_local=True)
    elif param is SweepParam.INSTRUCTION_MODE:
        scene = rep(scene, instruction_mode=InstructionMode(value))
    elif param is SweepParam.COMPONENTS:
        cfg = rep(cfg, use_global=value in ("global", "both"), use_local=value in ("local", "both"))
    elif param is SweepParam.VPP_TRAINABLE:
        frozen = set(schedule.frozen) - {"global_vpp"} if value else set(schedule.frozen) | {"global_vpp"}
        schedule = rep(schedule, frozen=frozenset(frozen))
    elif param is SweepParam.ENCODER_FROZEN:
        frozen = set(schedule.frozen) | {"encoder"} if value else set(schedule.frozen) - {"encoder"}
        schedule = rep(schedule, frozen=frozenset(frozen))
    return CellPlan(cfg, scene, schedule)


def corpus_id(scene: SynthSceneSpec, n_train: int, n_test: int) -> str:
    return f"synth-{_digest(dataclasses.asdict(scene))[:12]}-tr{n_train}-te{n_test}"


def _digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=_jsonable).encode()).hexdigest()


def _jsonable(o: Any) -> Any:
    if isinstance(o, enum.Enum):
        return o.value
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def cell_key(plan: CellPlan, n_train: int, n_test: int) -> str:
    return _digest(
        {
            "version": CACHE_VERSION,
            "model": config_to_dict(plan.model),
            "scene": dataclasses.asdict(plan.scene),
            "schedule": dataclasses.asdict(plan.schedule),
            "n_train": n_train,
            "n_test": n_test,
        }
    )


def run_cell(plan: CellPlan, n_train: int, n_test: int) -> tuple[float, int, tuple[float, ...]]:
    """Train on the seeded corpus, score the held-out split."""
    n_total = 2 * max(n_train, n_test) + 64
    corpus = synth_corpus(plan.scene, n_total)
    tr = corpus.split("train")[:n_train]
    te = corpus.split("test")[:n_test]
    if len(tr) < n_train or len(te) < n_test:
        raise RuntimeError(f"corpus too small for {n_train}/{n_test} split")
    vocab = build_vocab([it.sample for it in tr])
    train_ex = make_examples([(it.image, it.sample) for it in tr], plan.model, vocab)
    test_ex = make_examples([(it.image, it.sample) for it in te], plan.model, vocab)
    result = train(train_ex, plan.model, vocab, plan.schedule)
    row = score(predict(result.model, test_ex), [e.sample.target_box for e in test_ex])
    return row.accuracy, row.parse_failures, tuple(result.history)


def run_sweep(
    spec: SweepSpec,
    base: ModelConfig = ModelConfig(),
    scene: SynthSceneSpec = SynthSceneSpec(),
    schedule: Schedule = Schedule(),
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
    runner: Callable[[CellPlan, int, int], tuple[float, int, tuple[float, ...]]] = run_cell,
) -> SweepTable:
    """Train and score one model per (value, seed); failing cells are recorded, not raised."""
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
    table = SweepTable(spec.param)
    prints = []
    for value in spec.values:
        for seed in spec.seeds:
            plan = apply_value(
                spec.param,
                value,
                dataclasses.replace(base, seed=seed),
                dataclasses.replace(scene, seed=seed),
                dataclasses.replace(schedule, seed=seed, epochs=spec.epochs),
            )
            fp = fingerprint(plan.model, corpus_id(plan.scene, spec.n_train, spec.n_test))
            prints.append(fp)
            key = cell_key(plan, spec.n_train, spec.n_test)
            path = cache / f"{key}.json" if cache is not None else None
            if path is not None and path.exists():
                rec = json.loads(path.read_text())
                cell = CellResult(value, seed, rec["accuracy"], rec["parse_failures"], tuple(rec["history"]), rec["seconds"], None, fp)
                if log:
                    log(f"{spec.param.value}={value_label(value)} seed={seed}: cached acc={cell.accuracy:.4f}")
                table.cells.append(cell)
                continue
            t0 = time.perf_counter()
            try:
                acc, fails, hist = runner(plan, spec.n_train, spec.n_test)
            except Exception as e:  # noqa: BLE001 - a broken cell must not sink the sweep
                cell = CellResult(value, seed, None, 0, (), time.perf_counter() - t0, f"{type(e).__name__}: {e}", fp)
                if log:
                    log(f"{spec.param.value}={value_label(value)} seed={seed}: FAILED {cell.error}")
                table.cells.append(cell)
                continue
            cell = CellResult(value, seed, acc, fails, hist, time.perf_counter() - t0, None, fp)
            if path is not None:
                rec = {"accuracy": acc, "parse_failures": fails, "history": list(hist), "seconds": cell.seconds}
                path.write_text(json.dumps(rec, sort_keys=True))
            if log:
                log(f"{spec.param.value}={value_label(value)} seed={seed}: acc={acc:.4f} ({cell.seconds:.0f}s)")
            table.cells.append(cell)
    table.fingerprint = hashlib.sha256("".join(prints).encode()).hexdigest()
    return table

