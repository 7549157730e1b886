"""Synthetic corpora for desk-scale training checks.

Two entity classes are marked purely by surface shape: CORP tokens are
fully uppercase, NAME tokens are capitalized; filler tokens are lowercase.
The dev set draws a share of its entity tokens from surface forms held out
of training, so a model that cannot read casing patterns has no signal for
them.  Total vocabulary stays under 100 types.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spandet.data import EntitySpan, Sentence

CLASSES = ("CORP", "NAME")

FILLERS = (
    "the a an of in on at to for with from by over under near and or but "
    "went said met saw told made found left took bought sold ran walked "
    "visited joined today yesterday quietly slowly again never always soon "
    "city river market office street house garden bridge").split()

CORP_WORDS = ("ACME ZORG KRON VEXA TULB OMNI DELT PRAX QUIN WOLT "
              "HALC JYRE XENO BRUM FLIN GOST YARV MILT SEBR UDOX").split()

NAME_WORDS = ("Alba Boro Cade Dena Elio Fern Gwen Hilo Iris Jude "
              "Kale Lena Milo Nora Opal Pria Quil Rosa Sage Tino").split()

TRAIN_POOL = 14  # entity words 0..13 appear in training; the rest are dev-only


@dataclass
class SyntheticCorpus:
    train: list[Sentence]
    dev: list[Sentence]
    classes: tuple = CLASSES


def _sentence(rng: np.random.Generator, *, holdout: bool) -> Sentence:
    n = int(rng.integers(5, 13))
    n_spans = int(rng.integers(1, 3))
    spans = []
    tokens = [FILLERS[i] for i in rng.integers(0, len(FILLERS), size=n)]
    taken = np.zeros(n, dtype=bool)
    for _ in range(n_spans):
        length = int(rng.integers(1, 4))
        # keep at least one filler token in every sentence
        if taken.sum() + length >= n:
            break
        for _attempt in range(20):
            start = int(rng.integers(0, n - length + 1))
            # reserve a one-token buffer so spans are never adjacent: a
            # maximal run of entity-patterned tokens is then a single span,
            # which keeps the task solvable from surface patterns alone
            if not taken[max(0, start - 1):start + length + 1].any():
                break
        else:
            continue
        taken[max(0, start - 1):start + length + 1] = True
        type_id = int(rng.integers(1, 3))
        pool = CORP_WORDS if type_id == 1 else NAME_WORDS
        if holdout and rng.random() < 0.5:
            lo, hi = TRAIN_POOL, len(pool)  # dev-only surface forms
        else:
            lo, hi = 0, TRAIN_POOL
        for i in range(length):
            tokens[start + i] = pool[int(rng.integers(lo, hi))]
        spans.append(EntitySpan(start, start + length - 1, type_id))
    spans.sort(key=lambda s: s.start)
    return Sentence(tokens, spans)


def synthetic_corpus(seed: int = 0, n_train: int = 300,
                     n_dev: int = 60) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    train = []
    while len(train) < n_train:
        s = _sentence(rng, holdout=False)
        if s.gold_spans:
            train.append(s)
    dev = []
    while len(dev) < n_dev:
        s = _sentence(rng, holdout=True)
        if s.gold_spans:
            dev.append(s)
    return SyntheticCorpus(train, dev)
