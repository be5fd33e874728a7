"""``vpp`` command line: render, preview, forge, synth, train, eval, sweep.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .axis_render import AxisSpec, AxisVariant, RenderError, layout_axis, render_axis
from .dataset_forge import (
    ForgeError,
    InstructionMode,
    SourceKind,
    SynthSceneSpec,
    ingest_file,
    load_corpus_dir,
    load_dims_table,
    synth_corpus,
    validate,
    write_corpus,
    write_jsonl,
)
from .eval_harness import (
    Format,
    SweepParam,
    SweepSpec,
    emit_report,
    evaluate_model,
    parse_value,
    run_sweep,
)
from .global_vpp import OverlayConfig, init_global_vpp, mask_for, preview_overlay
from .image_pipeline import PreprocessConfig, read_png, write_png
from .mini_mllm import (
    GROUPS,
    CheckpointError,
    Fusion,
    ModelConfig,
    Schedule,
    TrainingError,
    build_vocab,
    load_checkpoint,
    make_examples,
    save_checkpoint,
    train,
    write_loss_csv,
)
from .mini_mllm.train import DEFAULT_LR

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
log = logging.getLogger("vpp")

# keys that never go into a dumped config
_NOT_CONFIG = {"command", "config", "handler"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this toolkit reserves 2 for data errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _mask_width(text: str) -> int | None:
    if text.lower() in ("none", "nomask"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'none', got {text!r}") from None


def _bool(text: str) -> bool:
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d if suppress else 0, help="random seed (default 0)")
    p.add_argument("--config", default=d, help="flat key=value file; explicit flags win")
    p.add_argument("--out", default=d if suppress else "out", help="output directory (default ./out)")
    p.add_argument("--quiet", action="store_true", default=d if suppress else False, help="only print errors")


def _axis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=[v.value for v in AxisVariant], default="edge")
    p.add_argument("--unit", type=float, default=0.1, help="axis unit scale (0.1 or 0.05)")
    p.add_argument("--font", type=int, default=10, help="label font size in px")
    p.add_argument("--canvas", type=int, default=336, help="axis canvas side in px")


def _model_flags(p: argparse.ArgumentParser) -> None:
    _axis_flags(p)
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--mask-width", type=_mask_width, default=6, help="border band in model pixels, or none")
    p.add_argument("--image-side", type=int, default=64)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--encoder-layers", type=int, default=2)
    p.add_argument("--decoder-layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--k-queries", type=int, default=8)
    p.add_argument("--fusion", choices=[f.value for f in Fusion], default="concat")
    p.add_argument("--use-global", type=_bool, default=True)
    p.add_argument("--use-local", type=_bool, default=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--freeze", default="", help="comma-separated parameter groups to freeze")
    for g in GROUPS:
        p.add_argument(f"--lr-{g.replace('_', '-')}", type=float, default=DEFAULT_LR[g])


def _scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-objects", type=int, default=2)
    p.add_argument("--max-objects", type=int, default=3)
    p.add_argument("--scene-canvas", type=int, default=64)
    p.add_argument("--instruction", choices=[m.value for m in InstructionMode], default="sample")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vpp", description="Visual position prompt toolkit.")
    _common(parser, suppress=True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("render-axis", help="render the axis prompt image to PNG")
    _common(p, False)
    _axis_flags(p)
    p.set_defaults(handler=cmd_render_axis)

    p = sub.add_parser("preview-overlay", help="overlay the axis prompt on an image")
    _common(p, False)
    _axis_flags(p)
    p.add_argument("--image", required=True, help="input PNG")
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--mask-width", type=_mask_width, default=30)
    p.add_argument("--side", type=int, default=336, help="processed input side")
    p.set_defaults(handler=cmd_preview)

    p = sub.add_parser("forge", help="unify grounding records from one source format")
    _common(p, False)
    p.add_argument("--kind", required=True, choices=[k.value for k in SourceKind])
    p.add_argument("--input", required=True, action="append", help="source JSONL (repeatable)")
    p.add_argument("--dims", help="JSONL sidecar of original image sizes")
    p.add_argument("--instruction", choices=[m.value for m in InstructionMode], default="sample")
    p.set_defaults(handler=cmd_forge)

    p = sub.add_parser("synth", help="generate a synthetic grounding corpus")
    _common(p, False)
    _scene_flags(p)
    p.add_argument("--n", type=int, default=200, help="number of scenes")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train the toy model")
    _common(p, False)
    _model_flags(p)
    _scene_flags(p)
    p.add_argument("--corpus", help="corpus directory from `vpp synth` (default: generate in memory)")
    p.add_argument("--n-train", type=int, default=1000)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    _common(p, False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True, help="corpus directory from `vpp synth`")
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--strict", type=_bool, default=False, help="reject swapped or out-of-range boxes")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="train and score a one-parameter ablation grid")
    _common(p, False)
    _model_flags(p)
    _scene_flags(p)
    p.add_argument("--param", required=True, choices=[s.value.replace("_", "-") for s in SweepParam])
    p.add_argument("--values", help="comma-separated values (components default: none,global,local,both)")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--cache", help="directory of cached per-cell results")
    p.set_defaults(handler=cmd_sweep)
    return parser


# config files --------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"--config {path}: {e.strerror or e}") from e
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"--config {path}:{n}: expected key = value, got {raw!r}")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def dump_config(args: argparse.Namespace) -> str:
    rows = []
    for k in sorted(vars(args)):
        if k in _NOT_CONFIG:
            continue
        v = getattr(args, k)
        if isinstance(v, list):
            v = ",".join(map(str, v))
        rows.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(rows) + "\n"


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001 - argparse exposes no public lookup
        if name in action.choices:
            return action.choices[name]
    raise UsageError(f"unknown command {name!r}")


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        raise UsageError("vpp: a command is required")
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("vpp: a command is required")
    if args.config:
        sub = _subparser(parser, args.command)
        known = {a.dest: a for a in sub._actions}  # noqa: SLF001
        values = read_config(args.config)
        defaults = {}
        for k, v in values.items():
            if k in _NOT_CONFIG or k not in known:
                raise UsageError(f"--config {args.config}: unknown key {k!r} for `{args.command}`")
            action = known[k]
            if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
                defaults[k] = _bool(v)
            elif isinstance(action, argparse._AppendAction):  # noqa: SLF001
                defaults[k] = [s for s in v.split(",") if s]
            else:
                defaults[k] = v
        sub.set_defaults(**defaults)
        # second pass: file values become defaults, explicit flags still override
        args = parser.parse_args(argv)
    return args


# builders ---------------------------------------------------------------------


def axis_spec(args) -> AxisSpec:
    return AxisSpec(AxisVariant(args.variant), args.unit, args.font, args.canvas)


def model_config(args) -> ModelConfig:
    return ModelConfig(
        image_side=args.image_side,
        patch=args.patch,
        dim=args.dim,
        encoder_layers=args.encoder_layers,
        decoder_layers=args.decoder_layers,
        heads=args.heads,
        k_queries=args.k_queries,
        fusion=Fusion(args.fusion),
        overlay=OverlayConfig(args.alpha, args.mask_width),
        axis=axis_spec(args),
        use_global=args.use_global,
        use_local=args.use_local,
        seed=args.seed,
    )


def schedule(args) -> Schedule:
    frozen = frozenset(g for g in args.freeze.split(",") if g)
    lr = {g: getattr(args, f"lr_{g}") for g in GROUPS}
    return Schedule(epochs=args.epochs, batch_size=args.batch_size, lr=lr, frozen=frozen, seed=args.seed)


def scene_spec(args) -> SynthSceneSpec:
    return SynthSceneSpec(
        seed=args.seed,
        min_objects=args.min_objects,
        max_objects=args.max_objects,
        canvas=args.scene_canvas,
        instruction_mode=InstructionMode(args.instruction),
    )


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.cfg").write_text(dump_config(args), encoding="utf-8")
    return out


# commands ---------------------------------------------------------------------


def cmd_render_axis(args) -> int:
    spec = axis_spec(args)
    img = render_axis(spec)
    out = _outdir(args)
    path = out / "axis.png"
    write_png(img, path)
    layout = layout_axis(spec)
    log.info("wrote %s (%d x-labels, %d y-labels)", path, len(layout.labels_for("x")), len(layout.labels_for("y")))
    return EXIT_OK


def cmd_preview(args) -> int:
    src = Path(args.image)
    if not src.exists():
        raise DataError(f"--image {src}: file not found")
    try:
        image = read_png(src)
    except Exception as e:  # noqa: BLE001 - Pillow raises several unrelated types
        raise DataError(f"--image {src}: unreadable image ({e})") from e
    spec = axis_spec(args)
    pre = PreprocessConfig(target_side=args.side)
    vpp = init_global_vpp(spec, pre)
    mask = mask_for(args.side, OverlayConfig(args.alpha, args.mask_width))
    out = _outdir(args)
    path = out / "preview.png"
    write_png(preview_overlay(image, vpp, mask, args.alpha, pre), path)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_forge(args) -> int:
    kind = SourceKind(args.kind)
    dims = load_dims_table(args.dims) if args.dims else None
    samples = []
    for src in args.input:
        if not Path(src).exists():
            raise DataError(f"--input {src}: file not found")
        samples.extend(ingest_file(kind, src, dims, InstructionMode(args.instruction)))
    problems = validate(samples)
    if problems:
        raise DataError("validation failed:\n  " + "\n  ".join(problems))
    out = _outdir(args)
    path = out / "unified.jsonl"
    write_jsonl(samples, path)
    log.info("wrote %d samples to %s", len(samples), path)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    corpus = synth_corpus(scene_spec(args), args.n)
    out = _outdir(args)
    index = write_corpus(corpus, out)
    log.info("wrote %d scenes (%s) to %s", len(corpus.items), corpus.dataset_id, index)
    return EXIT_OK


def _load_split(corpus_dir: str, split: str):
    rows = load_corpus_dir(corpus_dir, split)
    if not rows:
        raise DataError(f"--corpus {corpus_dir}: split {split!r} is empty")
    return [(r, s) for r, s, _ in rows]


def cmd_train(args) -> int:
    cfg = model_config(args)
    sched = schedule(args)
    if args.corpus:
        pairs = _load_split(args.corpus, "train")[: args.n_train]
        dataset_id = f"dir:{Path(args.corpus).resolve().name}"
    else:
        corpus = synth_corpus(scene_spec(args), 2 * args.n_train + 64)
        pairs = [(it.image, it.sample) for it in corpus.split("train")[: args.n_train]]
        dataset_id = corpus.dataset_id
    vocab = build_vocab([s for _, s in pairs])
    examples = make_examples(pairs, cfg, vocab)
    out = _outdir(args)
    result = train(
        examples,
        cfg,
        vocab,
        sched,
        on_epoch=lambda e, loss: log.info("epoch %d loss %.4f", e, loss),
    )
    save_checkpoint(out / "model.npz", result.model, {"dataset": dataset_id, "history": result.history})
    write_loss_csv(out / "loss.csv", result.history)
    log.info("wrote %s and %s", out / "model.npz", out / "loss.csv")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise DataError(f"--checkpoint {args.checkpoint}: file not found")
    model, extra = load_checkpoint(args.checkpoint)
    pairs = _load_split(args.corpus, args.split)
    examples = make_examples(pairs, model.cfg, model.vocab)
    dataset_id = f"dir:{Path(args.corpus).resolve().name}:{args.split}"
    report = evaluate_model(model, {args.split: examples}, dataset_id, args.threshold, args.strict)
    out = _outdir(args)
    emit_report(report, out / "report.md", Format.MARKDOWN)
    emit_report(report, out / "report.csv", Format.CSV)
    row = report.rows[0]
    log.info("%s: acc@%.2f = %.2f%% over %d (%d unparsed)", row.split, args.threshold, 100 * row.accuracy, row.n, row.parse_failures)
    return EXIT_OK


def cmd_sweep(args) -> int:
    param = SweepParam(args.param.replace("-", "_"))
    if args.values:
        try:
            values = tuple(parse_value(param, v) for v in args.values.split(",") if v.strip())
        except ValueError as e:
            raise UsageError(f"--values: {e}") from e
    elif param is SweepParam.COMPONENTS:
        values = ("none", "global", "local", "both")
    else:
        raise UsageError(f"--values is required for --param {args.param}")
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    except ValueError:
        raise UsageError(f"--seeds: expected comma-separated integers, got {args.seeds!r}") from None
    try:
        spec = SweepSpec(param, values, seeds, args.epochs, args.n_train, args.n_test)
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = _outdir(args)
    table = run_sweep(
        spec,
        model_config(args),
        scene_spec(args),
        schedule(args),
        cache_dir=args.cache,
        log=log.info,
    )
    stem = f"sweep_{param.value}"
    emit_report(table, out / f"{stem}.md", Format.MARKDOWN)
    emit_report(table, out / f"{stem}.csv", Format.CSV)
    failed = [c for c in table.cells if c.failed]
    for c in failed:
        log.error("cell %s seed %d failed: %s", c.value, c.seed, c.error)
    log.info("wrote %s.md and %s.csv", out / stem, out / stem)
    return EXIT_RUNTIME if failed and len(failed) == len(table.cells) else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"vpp: {e}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"vpp {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ForgeError, CheckpointError, RenderError) as e:
        print(f"vpp {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, RuntimeError, OSError, ValueError) as e:
        print(f"vpp {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
