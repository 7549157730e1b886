"""Token representations: surface-shape patterns and vector tables.

Each token is the concatenation of a word vector (from a frozen pretrained
table, or from a small trainable fallback table when no vectors file is
given) and a trainable embedding of the token's surface-shape pattern.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from spandet import tensor as tt
from spandet.tensor import Tensor


class Pattern(enum.IntEnum):
    """Surface-shape classes over letters vs punctuation/digit characters.

    The first matching rule in declaration order wins; words whose casing
    cannot be read (caseless letters such as ideographs) fall to OTHER.
    """
    UPPER = 0              # ABCDE
    LOWER = 1              # abcde
    CAPITALIZED = 2        # Abcde
    MIXED_CASE = 3         # aBCDE, AbCDe
    UPPER_WITH_MARKS = 4   # ABCDE12#
    LOWER_WITH_MARKS = 5   # abcde12#
    CAPITALIZED_WITH_MARKS = 6  # Abcde12#
    MIXED_WITH_MARKS = 7   # AbCDe12#
    MARKS_ONLY = 8         # 12#^
    OTHER = 9


N_PATTERNS = len(Pattern)


@lru_cache(maxsize=65536)
def classify_pattern(word: str) -> Pattern:
    """Map a token to exactly one Pattern; rejects the empty string."""
    if not word:
        raise ValueError("cannot classify an empty token")
    letters = [ch for ch in word if ch.isalpha()]
    if not letters:
        return Pattern.MARKS_ONLY
    if any(not (ch.isupper() or ch.islower()) for ch in letters):
        return Pattern.OTHER
    pure = len(letters) == len(word)
    if all(ch.isupper() for ch in letters):
        return Pattern.UPPER if pure else Pattern.UPPER_WITH_MARKS
    if all(ch.islower() for ch in letters):
        return Pattern.LOWER if pure else Pattern.LOWER_WITH_MARKS
    if letters[0].isupper() and all(ch.islower() for ch in letters[1:]):
        return Pattern.CAPITALIZED if pure else Pattern.CAPITALIZED_WITH_MARKS
    return Pattern.MIXED_CASE if pure else Pattern.MIXED_WITH_MARKS


# ----- pretrained vector files ------------------------------------------------


def load_pretrained(path):
    """Read a text vectors file: one ``word v1 v2 ...`` row per line.

    A first line holding exactly two integers is treated as a count/dim
    header and skipped.  Returns (vocab dict, matrix, unk vector) where the
    unk vector is the mean of all rows.  Inconsistent dimensions raise
    ValueError with the offending line number.
    """
    vocab: dict[str, int] = {}
    rows = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            cols = line.rstrip("\n").split()
            if not cols:
                continue
            if line_no == 1 and len(cols) == 2:
                try:
                    int(cols[0]), int(cols[1])
                    continue
                except ValueError:
                    pass
            word, vals = cols[0], cols[1:]
            if dim is None:
                dim = len(vals)
                if dim == 0:
                    raise ValueError(f"line {line_no}: no vector values")
            elif len(vals) != dim:
                raise ValueError(
                    f"line {line_no}: expected {dim} values, found {len(vals)}")
            if word in vocab:
                raise ValueError(f"line {line_no}: duplicate word {word!r}")
            vocab[word] = len(rows)
            rows.append([float(v) for v in vals])
    if not rows:
        raise ValueError(f"{path}: no vectors found")
    matrix = np.asarray(rows)
    return vocab, matrix, matrix.mean(axis=0)


def _glorot(rng: np.random.Generator, shape, dtype):
    fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class EmbeddingTables:
    """Word-vector and pattern-vector lookup tables.

    ``word_table`` has one row per vocabulary word plus a final unknown-word
    row.  It is frozen (no gradient) when loaded from a vectors file, and
    trainable in fallback mode.  ``pattern_table`` is always trainable.
    """
    vocab: dict[str, int]
    word_table: Tensor
    pattern_table: Tensor
    d_w: int
    d_p: int

    @property
    def unk_index(self) -> int:
        return len(self.vocab)

    @classmethod
    def from_pretrained(cls, path, d_p: int, rng: np.random.Generator,
                        dtype=np.float64) -> "EmbeddingTables":
        vocab, matrix, unk = load_pretrained(path)
        table = np.vstack([matrix, unk[None]]).astype(dtype)
        pattern = _glorot(rng, (N_PATTERNS, d_p), dtype)
        return cls(vocab, Tensor(table, requires_grad=False),
                   Tensor(pattern, requires_grad=True), matrix.shape[1], d_p)

    @classmethod
    def fallback(cls, words, d_w: int, d_p: int, rng: np.random.Generator,
                 dtype=np.float64) -> "EmbeddingTables":
        """Small trainable word table over a fixed vocabulary (plus unk)."""
        vocab = {w: i for i, w in enumerate(dict.fromkeys(words))}
        table = _glorot(rng, (len(vocab) + 1, d_w), dtype)
        # the unk row gets no gradient when every training token is known;
        # zero is a neutral stand-in, random noise is not
        table[-1] = 0.0
        pattern = _glorot(rng, (N_PATTERNS, d_p), dtype)
        return cls(vocab, Tensor(table, requires_grad=True),
                   Tensor(pattern, requires_grad=True), d_w, d_p)

    def word_indices(self, tokens) -> np.ndarray:
        unk = self.unk_index
        return np.asarray([self.vocab.get(t, unk) for t in tokens])


def embed_tokens(tokens, tables: EmbeddingTables,
                 use_pattern: bool = True) -> Tensor:
    """One sentence to an (n, d_w [+ d_p]) tensor of stacked embeddings."""
    word = tt.take_rows(tables.word_table, tables.word_indices(tokens))
    if not use_pattern:
        return word
    ids = np.asarray([int(classify_pattern(t)) for t in tokens])
    return tt.concat([word, tt.take_rows(tables.pattern_table, ids)], axis=-1)


def embed_batch(token_lists, tables: EmbeddingTables, max_len: int,
                use_pattern: bool = True) -> Tensor:
    """Padded batch lookup; padded positions use the unk row and pattern 0.

    Callers mask padded positions immediately afterwards, so the row choice
    there never reaches the loss or the decoder.
    """
    B = len(token_lists)
    widx = np.full((B, max_len), tables.unk_index)
    pidx = np.zeros((B, max_len), dtype=np.int64)
    for b, toks in enumerate(token_lists):
        widx[b, :len(toks)] = tables.word_indices(toks)
        if use_pattern:
            pidx[b, :len(toks)] = [int(classify_pattern(t)) for t in toks]
    word = tt.take_rows(tables.word_table, widx)
    if not use_pattern:
        return word
    return tt.concat([word, tt.take_rows(tables.pattern_table, pidx)], axis=-1)
