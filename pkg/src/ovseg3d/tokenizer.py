"""Byte-pair-encoding tokenizer for CLIP-style text encoders.

Implements the standard CLIP scheme: lowercase + whitespace cleanup, a
word/number/punctuation split, byte-to-unicode mapping, BPE merges with the
``</w>`` end-of-word marker, and start/end sentinels. Vocabulary and merge
ranks come from the usual ``vocab.json`` / ``merges.txt`` pair exported
alongside the model.
"""
from __future__ import annotations

import json
import re
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

_TOKEN_PATTERN = re.compile(
    r"<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d"
    r"|[^\W\d_]+|\d|[^\s\w]+",
    re.IGNORECASE,
)


@lru_cache(maxsize=1)
def _bytes_to_unicode() -> Dict[int, str]:
    """Reversible byte -> printable-unicode map used by byte-level BPE."""
    bs = (list(range(ord("!"), ord("~") + 1))
          + list(range(ord("\xa1"), ord("\xac") + 1))
          + list(range(ord("\xae"), ord("\xff") + 1)))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


def _pairs(word: Tuple[str, ...]) -> set:
    return set(zip(word[:-1], word[1:]))


class ClipTokenizer:
    """BPE tokenizer matching the reference CLIP implementation."""

    def __init__(self, vocab_path, merges_path, context_length: int = 77):
        with open(vocab_path, encoding="utf-8") as f:
            self.encoder: Dict[str, int] = json.load(f)
        with open(merges_path, encoding="utf-8") as f:
            lines = f.read().split("\n")
        # merges.txt carries a version header on its first line
        merges = [tuple(line.split()) for line in lines[1:] if len(line.split()) == 2]
        self.bpe_ranks = {pair: i for i, pair in enumerate(merges)}
        self.byte_encoder = _bytes_to_unicode()
        self.context_length = context_length
        self.sot = self.encoder["<|startoftext|>"]
        self.eot = self.encoder["<|endoftext|>"]
        self._cache: Dict[str, List[str]] = {}

    def _bpe(self, token: str) -> List[str]:
        if token in self._cache:
            return self._cache[token]
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        pairs = _pairs(word)
        if not pairs:
            return [token + "</w>"]
        while True:
            best = min(pairs, key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if best not in self.bpe_ranks:
                break
            first, second = best
            out: List[str] = []
            i = 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                except ValueError:
                    out.extend(word[i:])
                    break
                out.extend(word[i:j])
                if j < len(word) - 1 and word[j + 1] == second:
                    out.append(first + second)
                    i = j + 2
                else:
                    out.append(word[j])
                    i = j + 1
            word = tuple(out)
            if len(word) == 1:
                break
            pairs = _pairs(word)
        result = list(word)
        self._cache[token] = result
        return result

    def encode(self, text: str) -> List[int]:
        """Token ids for text, without sentinels or padding."""
        text = re.sub(r"\s+", " ", text).strip().lower()
        ids: List[int] = []
        for token in _TOKEN_PATTERN.findall(text):
            mapped = "".join(self.byte_encoder[b] for b in token.encode("utf-8"))
            ids.extend(self.encoder[piece] for piece in self._bpe(mapped))
        return ids

    def __call__(self, texts: Sequence[str]):
        """Encode and pad a batch to (len(texts), context_length) int64.

        Sequences are wrapped in start/end sentinels, truncated to fit, and
        padded with the end token (pooling at the first end token makes the
        padding content irrelevant).
        """
        import numpy as np

        out = np.full((len(texts), self.context_length), self.eot, dtype=np.int64)
        for row, text in enumerate(texts):
            ids = [self.sot] + self.encode(text)[: self.context_length - 2] + [self.eot]
            out[row, : len(ids)] = ids
        return out
