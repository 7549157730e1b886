"""The full detector: embeddings -> projection -> encoder -> heads.

Parameter names are stable, dotted paths (``proj.w``, ``mha.layer0.q.w``,
``ctx.layer1.phase2.wa``, ``heads.cls.w``, ...) used both by the optimizer
and the checkpoint records.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spandet import tensor as tt
from spandet.config import ModelConfig
from spandet.data import Sentence
from spandet.embeddings import EmbeddingTables, embed_batch
from spandet.encoder import (Affine, ContextFusionLayer, MhaStack,
                             positional_encoding)
from spandet.heads import Candidate, DetectionHeads, candidates_from_arrays
from spandet.tensor import Tensor


@dataclass
class ModelOutput:
    class_probs: Tensor  # (B, T, c+1)
    left: Tensor         # (B, T)
    right: Tensor        # (B, T)
    mask: np.ndarray     # (B, T)


class SpanDetector:
    def __init__(self, cfg: ModelConfig, tables: EmbeddingTables,
                 rng: np.random.Generator):
        cfg.validate()
        enc = cfg.encoder
        if tables.d_p != cfg.d_p or tables.d_w != cfg.d_w:
            raise ValueError("embedding table widths disagree with the config")
        self.cfg = cfg
        self.tables = tables
        dtype = cfg.np_dtype
        d_in = cfg.d_w + (cfg.d_p if cfg.use_pattern_embedding else 0)
        self.proj = Affine(d_in, enc.d_model, rng, dtype)
        # dropping the conv blocks re-spends their depth on extra attention
        n_mha = enc.n_mha_layers + (0 if cfg.use_accn else enc.n_accn_layers)
        self.mha = MhaStack(n_mha, enc.d_model, enc.heads, enc.dropout, rng, dtype)
        self.ctx_layers = [
            ContextFusionLayer(enc.d_model, enc.rd, enc.accn_kernel,
                               enc.n_phases, rng, dtype)
            for _ in range(enc.n_accn_layers if cfg.use_accn else 0)]
        self.heads = DetectionHeads(enc.d_model, cfg.n_classes, rng, dtype,
                                    relu_logits=cfg.head_relu)
        self._pe_cache: dict[int, np.ndarray] = {}

    # ----- parameters ----------------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        """Every parameter tensor, including frozen embedding tables."""
        named = {"embed.word_table": self.tables.word_table}
        if self.cfg.use_pattern_embedding:
            named["embed.pattern_table"] = self.tables.pattern_table
        named.update({f"proj.{n}": p for n, p in self.proj.params().items()})
        named.update({f"mha.{n}": p for n, p in self.mha.params().items()})
        for i, layer in enumerate(self.ctx_layers):
            named.update({f"ctx.layer{i}.{n}": p
                          for n, p in layer.params().items()})
        named.update({f"heads.{n}": p for n, p in self.heads.params().items()})
        return named

    def trainable_params(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.named_params().items() if p.requires_grad}

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_params().items()}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameters by name; names and shapes must match exactly."""
        own = self.named_params()
        missing = own.keys() - arrays.keys()
        extra = arrays.keys() - own.keys()
        if missing or extra:
            raise ValueError(
                f"parameter sets differ (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}); checkpoint does not match "
                f"the requested architecture")
        for name, tensor in own.items():
            arr = arrays[name]
            if tuple(arr.shape) != tensor.shape:
                raise ValueError(
                    f"parameter {name}: shape {tuple(arr.shape)} does not "
                    f"match architecture shape {tensor.shape}")
            tensor.data = np.asarray(arr, dtype=self.cfg.np_dtype).copy()
            tensor.grad = None

    # ----- forward ---------------------------------------------------------

    def _positions(self, T: int) -> np.ndarray:
        if T not in self._pe_cache:
            self._pe_cache[T] = positional_encoding(
                T, self.cfg.encoder.d_model, self.cfg.np_dtype)
        return self._pe_cache[T]

    def forward(self, token_lists: list[list[str]], *, training: bool = False,
                rng: np.random.Generator | None = None) -> ModelOutput:
        if not token_lists:
            raise ValueError("empty batch")
        B = len(token_lists)
        T = max(len(t) for t in token_lists)
        mask = np.zeros((B, T))
        for b, toks in enumerate(token_lists):
            mask[b, :len(toks)] = 1.0
        m3 = Tensor(mask[:, :, None].astype(self.cfg.np_dtype))

        e = embed_batch(token_lists, self.tables, T,
                        use_pattern=self.cfg.use_pattern_embedding)
        x = self.proj(e * m3) + Tensor(self._positions(T))
        x = self.mha(x, mask, training=training, rng=rng)
        for layer in self.ctx_layers:
            x = layer(x, mask)
        probs = self.heads.classify_positions(x)
        left, right = self.heads.predict_offsets(x)
        return ModelOutput(probs, left, right, mask)

    # ----- inference -----------------------------------------------------------

    def predict_candidates(self, sentences: list[Sentence],
                           batch_size: int = 32) -> list[list[Candidate]]:
        """Per-sentence candidate lists, padding trimmed, gradients off."""
        out: list[list[Candidate]] = []
        with tt.no_grad():
            for lo in range(0, len(sentences), batch_size):
                chunk = sentences[lo:lo + batch_size]
                result = self.forward([s.tokens for s in chunk], training=False)
                probs = result.class_probs.data
                lefts = result.left.data
                rights = result.right.data
                for i, s in enumerate(chunk):
                    n = len(s)
                    out.append(candidates_from_arrays(
                        probs[i, :n].astype(np.float64),
                        lefts[i, :n].astype(np.float64),
                        rights[i, :n].astype(np.float64)))
        return out


def build_model(cfg: ModelConfig, train_sentences=None) -> SpanDetector:
    """Construct tables (pretrained or corpus fallback) plus the detector.

    All randomness derives from ``cfg.seed``: one child stream initializes
    the tables, another the network weights.
    """
    table_rng, weight_rng = [np.random.default_rng(s) for s in
                             np.random.SeedSequence(cfg.seed).spawn(2)]
    if cfg.vectors:
        tables = EmbeddingTables.from_pretrained(cfg.vectors, cfg.d_p,
                                                 table_rng, cfg.np_dtype)
        if tables.d_w != cfg.d_w:
            raise ValueError(
                f"vectors file width {tables.d_w} != configured d_w {cfg.d_w}")
    else:
        if train_sentences is None:
            raise ValueError(
                "no vectors file configured and no corpus to build a "
                "fallback vocabulary from")
        words = [t for s in train_sentences for t in s.tokens]
        tables = EmbeddingTables.fallback(words, cfg.d_w, cfg.d_p, table_rng,
                                          cfg.np_dtype)
    return SpanDetector(cfg, tables, weight_rng)


def restore_model(ckpt) -> SpanDetector:
    """Rebuild a detector from a loaded checkpoint, self-contained."""
    cfg = ckpt.config
    rng = np.random.default_rng(cfg.seed)
    vocab = ckpt.vocab if ckpt.vocab is not None else ()
    word_rows = ckpt.params.get("embed.word_table")
    if word_rows is None:
        raise ValueError("checkpoint is missing the word table record")
    if len(vocab) + 1 != word_rows.shape[0]:
        raise ValueError("checkpoint vocabulary does not match its word table")
    tables = EmbeddingTables.fallback(vocab, cfg.d_w, cfg.d_p, rng, cfg.np_dtype)
    tables.word_table.requires_grad = not bool(cfg.vectors)
    model = SpanDetector(cfg, tables, rng)
    model.load_param_arrays(ckpt.params)
    return model
