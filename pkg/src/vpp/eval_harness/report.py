"""Markdown and CSV rendering of sweep tables and eval reports."""

from __future__ import annotations

import csv
import enum
import io
from pathlib import Path

from .evaluate import EvalReport
from .sweep import SweepTable


class Format(enum.Enum):
    MARKDOWN = "markdown"
    CSV = "csv"


SWEEP_COLUMNS = ("setting", "acc", "spread", "runs", "failed")
EVAL_COLUMNS = ("split", "n", "acc", "parse_failures")


def fmt2(v: float | None) -> str:
    return "-" if v is None else f"{v:.2f}"


def fmt_delta(v: float) -> str:
    return f"{v:+.2f}"


def sweep_rows(table: SweepTable) -> list[list[str]]:
    rows = [[r.label, fmt2(r.mean), fmt2(r.spread), str(r.runs), str(r.failures)] for r in table.rows()]
    d = table.delta()
    if d is not None:
        rows.append(["delta (both - none)", fmt_delta(d), "", "", ""])
    return rows


def eval_rows(report: EvalReport) -> list[list[str]]:
    return [[r.split, str(r.n), fmt2(100.0 * r.accuracy), str(r.parse_failures)] for r in report.rows]


def _markdown(title: str, fp: str, columns: tuple[str, ...], rows: list[list[str]]) -> str:
    out = [f"# {title}", "", f"fingerprint: {fp}" if fp else "fingerprint: -", ""]
    out.append("| " + " | ".join(columns) + " |")
    out.append("|" + "|".join("---" for _ in columns) + "|")
    for r in rows:
        if r[0].startswith("delta"):
            # deltas print in parentheses, as in ablation tables
            r = [r[0], f"({r[1]})", *r[2:]]
        out.append("| " + " | ".join(r) + " |")
    return "\n".join(out) + "\n"


def _csv(fp: str, columns: tuple[str, ...], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    buf.write(f"# fingerprint: {fp or '-'}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def render(obj: SweepTable | EvalReport, fmt: Format) -> str:
    if isinstance(obj, SweepTable):
        title, columns, rows = f"sweep: {obj.param.value}", SWEEP_COLUMNS, sweep_rows(obj)
    else:
        title, columns, rows = "evaluation", EVAL_COLUMNS, eval_rows(obj)
    if fmt is Format.MARKDOWN:
        return _markdown(title, obj.fingerprint, columns, rows)
    return _csv(obj.fingerprint, columns, rows)


def emit_report(obj: SweepTable | EvalReport, path: str | Path, fmt: Format | str) -> Path:
    fmt = Format(fmt)
    path = Path(path)
    path.write_text(render(obj, fmt), encoding="utf-8")
    return path


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
