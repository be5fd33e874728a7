"""Scoring and ablation sweeps for the toy grounding model."""

from .evaluate import EvalReport, SplitRow, evaluate, evaluate_model, fingerprint, score
from .parse import ParseResult, box_text, parse_box, parse_box_verbose
from .report import Format, emit_report, read_csv_rows, render
from .sweep import (
    COMPONENTS,
    CellPlan,
    CellResult,
    SweepParam,
    SweepRow,
    SweepSpec,
    SweepTable,
    apply_value,
    parse_value,
    run_cell,
    run_sweep,
    value_label,
)
