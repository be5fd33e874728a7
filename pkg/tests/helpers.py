"""Small shared builders for the model tests."""

from dataclasses import replace

from vpp.dataset_forge import InstructionMode, SynthSceneSpec, synth_corpus
from vpp.mini_mllm.model import ModelConfig, images_tensor
from vpp.mini_mllm.train import build_vocab, make_examples

TINY = ModelConfig(image_side=32, patch=8, dim=16, heads=2, k_queries=4, encoder_layers=1, decoder_layers=1)


def tiny_data(n=6, cfg=TINY, seed=0, mode=InstructionMode.NONE):
    corpus = synth_corpus(SynthSceneSpec(seed=seed, canvas=32, instruction_mode=mode), 2 * n + 4)
    items = corpus.split("train")[:n]
    vocab = build_vocab([it.sample for it in corpus.items])
    examples = make_examples([(it.image, it.sample) for it in items], cfg, vocab)
    return vocab, examples


def batch(examples):
    return (
        images_tensor([e.image for e in examples]),
        [e.prompt for e in examples],
        [e.answer for e in examples],
    )


def with_(cfg=TINY, **kw):
    return replace(cfg, **kw)
