"""Corpus ingestion: CoNLL parsing, span/offset targets, batching.

Spans are inclusive token ranges [start, end].  Entity types are 1-based
integer ids into an ordered class list; slot ``c`` (the last one-hot slot)
is reserved for non-entity.  Position targets store, for every token ``i``
inside a gold span, the nonnegative distances ``left = i - start`` and
``right = end - i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConllParseError(ValueError):
    """Malformed CoNLL input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int      # inclusive
    type_id: int  # 1-based index into the class list
    confidence: float = 1.0

    def overlaps(self, other: "EntitySpan") -> bool:
        return not (self.end < other.start or self.start > other.end)


@dataclass
class Sentence:
    tokens: list[str]
    gold_spans: list[EntitySpan] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise ValueError("sentence must contain at least one token")
        ordered = sorted(self.gold_spans, key=lambda s: s.start)
        prev_end = -1
        for s in ordered:
            if not (0 <= s.start <= s.end < n):
                raise ValueError(f"span {s} out of bounds for length {n}")
            if s.type_id < 1:
                raise ValueError(f"span {s} has a non-positive type id")
            if s.start <= prev_end:
                raise ValueError(f"gold spans overlap at {s}")
            prev_end = s.end

    def __len__(self):
        return len(self.tokens)


@dataclass
class PositionTarget:
    left: int
    right: int
    class_onehot: np.ndarray  # length c+1, last slot = non-entity


# ----- CoNLL reading and writing -------------------------------------------


def _spans_from_tags(tags: list[str], line_nos: list[int]):
    """Lenient BIO reading: I- after O or after a different type opens a span."""
    spans = []
    cur_type = None
    cur_start = 0
    for i, tag in enumerate(tags):
        if tag == "O":
            prefix, etype = "O", None
        elif len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
            prefix, etype = tag[0], tag[2:]
        else:
            raise ConllParseError(line_nos[i], f"unrecognized tag {tag!r}")
        if cur_type is not None and (prefix != "I" or etype != cur_type):
            spans.append((cur_start, i - 1, cur_type))
            cur_type = None
        if prefix == "B" or (prefix == "I" and cur_type is None):
            cur_type = etype
            cur_start = i
    if cur_type is not None:
        spans.append((cur_start, len(tags) - 1, cur_type))
    return spans


def parse_conll(path, tag_column: int = -1, classes=None) -> list[Sentence]:
    """Read a whitespace-column CoNLL file into sentences with gold spans.

    ``classes`` fixes the type-name ordering; when omitted the types found
    in the file are used in sorted order.  ``-DOCSTART-`` lines are skipped.
    """
    raw = []
    tokens: list[str] = []
    tags: list[str] = []
    line_nos: list[int] = []

    def flush():
        if tokens:
            raw.append((list(tokens), _spans_from_tags(tags, line_nos)))
            tokens.clear()
            tags.clear()
            line_nos.clear()

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            cols = line.split()
            if cols[0] == "-DOCSTART-":
                flush()
                continue
            if len(cols) < 2:
                raise ConllParseError(line_no, "expected a token and a tag column")
            try:
                tag = cols[tag_column]
            except IndexError:
                raise ConllParseError(
                    line_no, f"no column {tag_column} in a {len(cols)}-column row")
            tokens.append(cols[0])
            tags.append(tag)
            line_nos.append(line_no)
    flush()

    if classes is None:
        classes = tuple(sorted({t for _, spans in raw for _, _, t in spans}))
    type_ids = {name: i + 1 for i, name in enumerate(classes)}
    sentences = []
    for toks, spans in raw:
        ids = []
        for s, e, t in spans:
            if t not in type_ids:
                raise ValueError(f"entity type {t!r} not in class list {classes}")
            ids.append(EntitySpan(s, e, type_ids[t]))
        sentences.append(Sentence(toks, ids))
    return sentences


def discover_classes(path, tag_column: int = -1) -> tuple[str, ...]:
    """Scan a CoNLL file and return its entity type names, sorted."""
    found = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            cols = line.split()
            if not cols or cols[0] == "-DOCSTART-":
                continue
            tag = cols[tag_column]
            if len(tag) > 2 and tag[1] == "-":
                found.add(tag[2:])
    return tuple(sorted(found))


def spans_to_bio(n: int, spans, classes) -> list[str]:
    tags = ["O"] * n
    for s in spans:
        name = classes[s.type_id - 1]
        tags[s.start] = f"B-{name}"
        for i in range(s.start + 1, s.end + 1):
            tags[i] = f"I-{name}"
    return tags


def write_conll(path, sentences, classes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            for tok, tag in zip(s.tokens, spans_to_bio(len(s), s.gold_spans, classes)):
                fh.write(f"{tok} {tag}\n")
            fh.write("\n")


# ----- targets ---------------------------------------------------------------


def targets_from_spans(sentence: Sentence, n_classes: int) -> list[PositionTarget]:
    """Per-position class one-hots and span-edge offsets for one sentence."""
    n = len(sentence)
    targets = []
    for _ in range(n):
        onehot = np.zeros(n_classes + 1)
        onehot[n_classes] = 1.0
        targets.append(PositionTarget(0, 0, onehot))
    for span in sentence.gold_spans:
        if span.type_id > n_classes:
            raise ValueError(f"type id {span.type_id} exceeds {n_classes} classes")
        for i in range(span.start, span.end + 1):
            t = targets[i]
            t.left = i - span.start
            t.right = span.end - i
            t.class_onehot[:] = 0.0
            t.class_onehot[span.type_id - 1] = 1.0
    return targets


def spans_from_targets(targets: list[PositionTarget]) -> list[EntitySpan]:
    """Invert targets_from_spans by grouping positions that agree on a span."""
    n = len(targets)
    spans = []
    i = 0
    while i < n:
        onehot = targets[i].class_onehot
        slot = int(np.argmax(onehot))
        if slot == len(onehot) - 1:
            i += 1
            continue
        start = i - targets[i].left
        end = i + targets[i].right
        if start != i:
            raise ValueError(f"position {i} opens a span but points left to {start}")
        for j in range(start, end + 1):
            t = targets[j]
            if (int(np.argmax(t.class_onehot)) != slot
                    or j - t.left != start or j + t.right != end):
                raise ValueError(f"inconsistent targets inside span [{start}, {end}]")
        spans.append(EntitySpan(start, end, slot + 1))
        i = end + 1
    return spans


# ----- training-set filtering -------------------------------------------------


def filter_single_class(sentences, *, remove_full_cover: bool = True) -> list[Sentence]:
    """Drop sentences whose positions all share one class.

    Non-entity counts as a class, so all-non-entity sentences always go.
    A sentence fully covered by spans of a single entity type is dropped
    only when ``remove_full_cover`` is set.
    """
    kept = []
    for s in sentences:
        covered = sum(sp.end - sp.start + 1 for sp in s.gold_spans)
        types = {sp.type_id for sp in s.gold_spans}
        if not s.gold_spans:
            continue
        if covered == len(s) and len(types) == 1 and remove_full_cover:
            continue
        kept.append(s)
    return kept


# ----- batching ----------------------------------------------------------------


@dataclass
class Batch:
    sentences: list[Sentence]
    max_len: int
    mask: np.ndarray          # (B, T) 1.0 at real positions
    target_slot: np.ndarray   # (B, T) int, gold slot; last slot = non-entity
    target_left: np.ndarray   # (B, T)
    target_right: np.ndarray  # (B, T)
    entity_mask: np.ndarray   # (B, T) 1.0 at real entity positions

    @property
    def tokens(self) -> list[list[str]]:
        return [s.tokens for s in self.sentences]


def make_batches(sentences, batch_size: int, seed: int, n_classes: int) -> list[Batch]:
    """Shuffle deterministically, then pad each chunk to its longest sentence."""
    if not sentences:
        raise ValueError("cannot batch an empty corpus")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(sentences))
    shuffled = [sentences[i] for i in order]
    batches = []
    for lo in range(0, len(shuffled), batch_size):
        chunk = shuffled[lo:lo + batch_size]
        B = len(chunk)
        T = max(len(s) for s in chunk)
        mask = np.zeros((B, T))
        slot = np.full((B, T), n_classes, dtype=np.int64)
        left = np.zeros((B, T))
        right = np.zeros((B, T))
        ent = np.zeros((B, T))
        for bi, s in enumerate(chunk):
            mask[bi, :len(s)] = 1.0
            for i, t in enumerate(targets_from_spans(s, n_classes)):
                j = int(np.argmax(t.class_onehot))
                slot[bi, i] = j
                left[bi, i] = t.left
                right[bi, i] = t.right
                if j != n_classes:
                    ent[bi, i] = 1.0
        batches.append(Batch(chunk, T, mask, slot, left, right, ent))
    return batches
