import csv
import io
import re

import pytest
from hypothesis import given, strategies as st

from helpers import TINY, tiny_data
from vpp.eval_harness import (
    CellResult,
    Format,
    SweepParam,
    SweepSpec,
    SweepTable,
    apply_value,
    box_text,
    emit_report,
    evaluate,
    evaluate_model,
    fingerprint,
    parse_box,
    parse_box_verbose,
    parse_value,
    read_csv_rows,
    render,
    run_sweep,
)
from vpp.dataset_forge import SynthSceneSpec
from vpp.geometry import NormBox
from vpp.mini_mllm.model import VPPModel
from vpp.mini_mllm.train import Schedule

VOCAB, EXAMPLES = tiny_data(n=5)


def test_parse_examples():
    text = "I have provided the box of the white frosting. [0.52, 0.59, 0.82, 0.83]"
    assert parse_box(text).as_tuple() == (0.52, 0.59, 0.82, 0.83)
    r = parse_box_verbose("no box here")
    assert r.box is None and r.reason
    assert parse_box("[0.9, 0.9, 0.1, 0.1]").as_tuple() == (0.1, 0.1, 0.9, 0.9)


def test_parse_first_tuple_and_clamp():
    assert parse_box("[1, 2] then [0.1, 0.2, 0.3, 0.4] and [0.5, 0.5, 0.6, 0.6]").as_tuple() == (0.1, 0.2, 0.3, 0.4)
    assert parse_box("[-0.2, 0.1, 1.4, 0.5]").as_tuple() == (0.0, 0.1, 1.0, 0.5)


def test_strict_mode_rejects():
    assert parse_box("[0.9, 0.9, 0.1, 0.1]", strict=True) is None
    assert parse_box("[0.1, 0.1, 1.2, 0.5]", strict=True) is None
    assert parse_box("[0.1, 0.1, 0.2, 0.5]", strict=True) is not None


@given(st.text())
def test_parse_is_total(s):
    r = parse_box_verbose(s)
    assert r.box is None or isinstance(r.box, NormBox)


@given(st.text(alphabet="0123456789.,[] -e+abc", max_size=40))
def test_parse_is_total_on_numeric_noise(s):
    parse_box_verbose(s)


@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=4, max_size=4))
def test_parse_idempotent_on_own_serialization(vals):
    text = "[" + ", ".join(repr(v) for v in vals) + "]"
    b = parse_box(text)
    assert parse_box(box_text(b)) == b


def test_echo_model_scores_one_and_silent_model_zero():
    splits = {"test": EXAMPLES}
    echo = evaluate(lambda ex: [e.sample.answer for e in ex], splits, "fp")
    assert echo.row("test").accuracy == 1.0 and echo.row("test").parse_failures == 0
    mute = evaluate(lambda ex: ["nothing"] * len(ex), splits, "fp")
    assert mute.row("test").accuracy == 0.0 and mute.row("test").parse_failures == len(EXAMPLES)


def test_empty_split_rejected():
    with pytest.raises(ValueError):
        evaluate(lambda ex: [], {"test": []}, "fp")


def test_evaluate_model_is_deterministic():
    m = VPPModel(TINY, VOCAB)
    a = evaluate_model(m, {"test": EXAMPLES}, "ds")
    b = evaluate_model(m, {"test": EXAMPLES}, "ds")
    assert a == b
    assert re.fullmatch(r"[0-9a-f]{64}", a.fingerprint)
    assert a.fingerprint == fingerprint(TINY, "ds")
    assert fingerprint(TINY, "other") != a.fingerprint


def test_sweep_spec_endpoints_and_validation():
    assert SweepSpec(SweepParam.ALPHA, (0.85, 0.9, 0.95)).values == (0.85, 0.9, 0.95, 1.0)
    assert SweepSpec(SweepParam.MASK_WIDTH, (3, 6)).values == (3, 6, None)
    assert SweepSpec(SweepParam.COMPONENTS, ("none",)).seeds == (1, 2, 3)
    with pytest.raises(ValueError):
        SweepSpec(SweepParam.ALPHA, ())
    with pytest.raises(ValueError):
        SweepSpec(SweepParam.ALPHA, (0.9,), seeds=())
    with pytest.raises(ValueError):
        SweepSpec(SweepParam.FONT_SIZE, (10, 10))


def test_parse_value():
    assert parse_value(SweepParam.MASK_WIDTH, "none") is None
    assert parse_value(SweepParam.VPP_TRAINABLE, "no") is False
    with pytest.raises(ValueError):
        parse_value(SweepParam.COMPONENTS, "all")


def test_apply_value_components_and_freezing():
    base, scene, sched = TINY, SynthSceneSpec(), Schedule()
    p = apply_value(SweepParam.COMPONENTS, "global", base, scene, sched)
    assert p.model.use_global and not p.model.use_local
    p = apply_value(SweepParam.COMPONENTS, "none", base, scene, sched)
    assert not p.model.use_global and not p.model.use_local
    p = apply_value(SweepParam.VPP_TRAINABLE, False, base, scene, sched)
    assert "global_vpp" in p.schedule.frozen
    p = apply_value(SweepParam.AXIS_VARIANT, "cross", base, scene, sched)
    assert p.model.overlay.mask_width is None


def fake_runner(plan, n_train, n_test):
    acc = {(False, False): 0.2, (True, False): 0.3, (False, True): 0.25, (True, True): 0.4}
    a = acc[(plan.model.use_global, plan.model.use_local)] + plan.model.seed / 1000
    return a, 1, (2.0, 1.0)


def test_components_sweep_layout(tmp_path):
    spec = SweepSpec(SweepParam.COMPONENTS, ("none", "global", "local", "both"), epochs=1)
    t = run_sweep(spec, TINY, runner=fake_runner, cache_dir=tmp_path)
    rows = t.rows()
    assert [r.label for r in rows] == ["none", "global", "local", "both"]
    assert all(r.runs == 3 for r in rows)
    assert rows[0].mean == pytest.approx(20.2)
    assert t.delta() == pytest.approx(20.0)
    md = render(t, Format.MARKDOWN)
    assert "(+20.00)" in md
    assert len([ln for ln in md.splitlines() if ln.startswith("| ")]) == 1 + 4 + 1


def test_sweep_uses_cache(tmp_path):
    spec = SweepSpec(SweepParam.COMPONENTS, ("none", "both"), seeds=(1,), epochs=1)
    first = run_sweep(spec, TINY, runner=fake_runner, cache_dir=tmp_path)

    def boom(*a):
        raise AssertionError("cache miss")

    again = run_sweep(spec, TINY, runner=boom, cache_dir=tmp_path)
    assert [c.accuracy for c in again.cells] == [c.accuracy for c in first.cells]
    assert again.fingerprint == first.fingerprint


def test_failed_cells_are_recorded():
    def flaky(plan, n_train, n_test):
        if plan.model.seed == 2:
            raise RuntimeError("diverged")
        return 0.5, 0, (1.0,)

    t = run_sweep(SweepSpec(SweepParam.ALPHA, (0.9,), epochs=1), TINY, runner=flaky)
    rows = {r.label: r for r in t.rows()}
    assert rows["0.9"].runs == 2 and rows["0.9"].failures == 1
    assert any("diverged" in c.error for c in t.cells if c.failed)


def test_empty_sweep_is_header_only(tmp_path):
    t = SweepTable(SweepParam.ALPHA)
    path = emit_report(t, tmp_path / "e.csv", Format.CSV)
    assert read_csv_rows(path) == []
    assert "setting,acc,spread,runs,failed" in path.read_text()


def test_markdown_and_csv_share_numerals(tmp_path):
    cells = [CellResult(v, s, a, 0) for v, s, a in [("none", 1, 0.1234), ("none", 2, 0.2), ("both", 1, 0.33333), ("both", 2, 0.4)]]
    t = SweepTable(SweepParam.COMPONENTS, cells, "abc")
    md = emit_report(t, tmp_path / "t.md", Format.MARKDOWN).read_text()
    cs = emit_report(t, tmp_path / "t.csv", Format.CSV).read_text()
    nums = lambda s: re.findall(r"[+-]?\d+\.\d\d\b", s)
    assert nums(md) == nums(cs)
    assert all(len(n.split(".")[1]) == 2 for n in nums(md))
    assert "fingerprint: abc" in md and "# fingerprint: abc" in cs
    rows = list(csv.reader(io.StringIO(cs.split("\n", 1)[1])))
    assert rows[0] == ["setting", "acc", "spread", "runs", "failed"]


def test_unwritable_path_raises(tmp_path):
    with pytest.raises(OSError):
        emit_report(SweepTable(SweepParam.ALPHA), tmp_path / "missing" / "x.md", "markdown")
