"""Grounding dataset construction: source ingest, instruction levels, synthetic scenes."""

from .records import (
    GROUNDING_TEMPLATES,
    INSTRUCTION,
    REGION_CAPTION_TEMPLATE,
    BoxRangeError,
    ForgeError,
    InstructionMode,
    Sample,
    SchemaError,
    SourceKind,
    Task,
    Turn,
    format_box,
    from_record,
    ingest,
    ingest_file,
    inject_instruction,
    load_dims_table,
    load_unified,
    prompt_text,
    read_jsonl,
    round2,
    to_record,
    validate,
    write_jsonl,
)
from .synth import (
    SceneObject,
    SynthCorpus,
    SynthItem,
    SynthSceneSpec,
    load_corpus_dir,
    object_pixels,
    render_scene,
    synth_corpus,
    write_corpus,
)
