from hypothesis import given, strategies as st

from vpp.mini_mllm.vocab import COORDS, Vocab

V = Vocab.build(["Please provide the bounding box coordinate of the red rectangle."])


def test_box_string_round_trips():
    text = "[0.52, 0.59, 0.82, 0.83]"
    ids = V.tokenize(text)
    coords = [i for i in ids if i in V.coord_ids]
    assert len(coords) == 4
    assert V.detokenize(ids) == text


def test_empty_framing():
    assert V.frame("") == [V.bos_id, V.eos_id]


def test_unknown_word_is_single_unk():
    assert V.tokenize("zebra") == [V.unk_id]


def test_bare_numbers_are_unk():
    assert V.tokenize("42") == [V.unk_id]


def test_detokenize_stops_at_eos():
    ids = V.tokenize("red") + [V.eos_id] + V.tokenize("box")
    assert V.detokenize(ids) == "red"


@given(st.lists(st.sampled_from(COORDS), min_size=4, max_size=4))
def test_any_box_round_trips(cs):
    text = "[" + ", ".join(cs) + "]"
    assert V.detokenize(V.tokenize(text)) == text


@given(
    st.lists(st.sampled_from(["the", "red", "rectangle", "0.50", "bounding", "[", "]"]), max_size=20),
    st.sampled_from([" ", ", "]),
)
def test_in_vocab_text_round_trips(parts, sep):
    text = sep.join(parts)
    assert V.detokenize(V.tokenize(text)) == text
