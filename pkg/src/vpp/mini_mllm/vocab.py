"""Closed toy vocabulary: two-decimal coordinates, punctuation, harvested words."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
COORDS = tuple(f"{i / 100:.2f}" for i in range(101))
PUNCT = ("[", "]", ",", " ")

# coordinates first so "0.52" never splits into a number word
TOKEN_RE = re.compile(r"(?:0\.\d\d|1\.00)(?!\d)|[A-Za-z]+|\d+(?:\.\d+)*|\s|\S")


def split_text(text: str) -> list[str]:
    return TOKEN_RE.findall(text)


class Vocab:
    def __init__(self, words: Iterable[str] = ()):
        extra = sorted(set(words) - set(SPECIALS) - set(COORDS) - set(PUNCT))
        self.tokens: tuple[str, ...] = SPECIALS + COORDS + PUNCT + tuple(extra)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.pad_id, self.bos_id, self.eos_id, self.unk_id = (self.index[t] for t in SPECIALS)
        self.coord_start = self.index[COORDS[0]]

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocab":
        words = set()
        for t in texts:
            words.update(split_text(t))
        # bare numbers are never vocabulary words; they map to UNK
        return cls(w for w in words if not w[0].isdigit() or w in COORDS)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def coord_ids(self) -> range:
        return range(self.coord_start, self.coord_start + len(COORDS))

    def tokenize(self, text: str) -> list[int]:
        return [self.index.get(t, self.unk_id) for t in split_text(text)]

    def detokenize(self, ids: Sequence[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i in (self.pad_id, self.bos_id):
                continue
            if i == self.eos_id:
                break
            out.append(self.tokens[i] if 0 <= i < len(self.tokens) else UNK)
        return "".join(out)

    def frame(self, text: str) -> list[int]:
        """``BOS + tokens + EOS``; the empty string becomes ``[BOS, EOS]``."""
        return [self.bos_id, *self.tokenize(text), self.eos_id]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocab({len(self)} tokens)"
