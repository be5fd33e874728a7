"""Bundled source-format records (two per source) plus their image-size sidecar."""

from pathlib import Path

FIXTURE_DIR = Path(__file__).resolve().parent
SOURCES = {
    "llava665k": FIXTURE_DIR / "llava665k.jsonl",
    "cb-grd": FIXTURE_DIR / "cb_grd.jsonl",
    "cb-ref": FIXTURE_DIR / "cb_ref.jsonl",
    "genixer": FIXTURE_DIR / "genixer.jsonl",
}
DIMS = FIXTURE_DIR / "dims.jsonl"
