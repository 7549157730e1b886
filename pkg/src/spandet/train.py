"""Training loop: Adam with decoupled weight decay, step-decayed learning
rate, deterministic batching, and best-dev checkpoint selection.

Model selection evaluates span F1 on the dev set at threshold 0.5 every
``eval_every`` epochs (and on the final epoch); the parameters of the best
evaluation are what gets saved.  A non-finite loss aborts immediately.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spandet.checkpoint import save_checkpoint
from spandet.config import ModelConfig
from spandet.data import Sentence, make_batches
from spandet.decoder import PRF, corpus_prf, decode
from spandet.loss import entity_loss
from spandet.model import SpanDetector, build_model
from spandet.tensor import Tensor

SELECTION_THRESHOLD = 0.5


class TrainingDiverged(RuntimeError):
    pass


class Adam:
    """Adam with weight decay applied directly to parameters, not gradients."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            update = (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2)
                                               + self.eps)
            p.data -= (lr * update).astype(p.data.dtype)
            if self.weight_decay:
                p.data -= (lr * self.weight_decay) * p.data

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def lr_at(cfg: ModelConfig, epoch: int) -> float:
    """Step decay: lr * decay^(epoch // every)."""
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_every)


# ----- evaluation over a corpus ---------------------------------------------


def predict_spans(model: SpanDetector, sentences: list[Sentence],
                  threshold: float, batch_size: int = 32):
    cands = model.predict_candidates(sentences, batch_size)
    return [decode(c, len(s), threshold) for c, s in zip(cands, sentences)]


def evaluate(model: SpanDetector, sentences: list[Sentence], threshold: float,
             batch_size: int = 32) -> PRF:
    preds = predict_spans(model, sentences, threshold, batch_size)
    return corpus_prf(preds, [s.gold_spans for s in sentences])


# ----- the loop -----------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    loss: float
    lr: float
    dev_f1: float | None = None


@dataclass
class TrainResult:
    model: SpanDetector
    history: list[EpochStats] = field(default_factory=list)
    best_f1: float = 0.0
    best_epoch: int = -1


def train(cfg: ModelConfig, train_sentences: list[Sentence],
          dev_sentences: list[Sentence], *, out_path=None,
          log=None) -> TrainResult:
    """Run the full schedule and keep the best-dev parameters.

    The caller applies any training-set filtering beforehand.  With
    ``out_path`` set, the best parameters are written there as a checkpoint.
    """
    cfg.validate()
    if not train_sentences:
        raise ValueError("training corpus is empty")
    if not dev_sentences:
        raise ValueError("dev corpus is empty")
    for s in train_sentences + dev_sentences:
        for sp in s.gold_spans:
            if sp.type_id > cfg.n_classes:
                raise ValueError(f"span type id {sp.type_id} exceeds the "
                                 f"{cfg.n_classes}-entry class list")

    model = build_model(cfg, train_sentences)
    dropout_rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed).spawn(3)[2])
    opt = Adam(model.trainable_params(), weight_decay=cfg.weight_decay)
    result = TrainResult(model)
    best_params: dict[str, np.ndarray] | None = None

    for epoch in range(cfg.max_epochs):
        lr = lr_at(cfg, epoch)
        batches = make_batches(train_sentences, cfg.batch_size,
                               seed=_epoch_seed(cfg.seed, epoch),
                               n_classes=cfg.n_classes)
        total, positions = 0.0, 0
        for batch in batches:
            out = model.forward(batch.tokens, training=True, rng=dropout_rng)
            loss = entity_loss(out.class_probs, out.left, out.right,
                               batch.target_slot, batch.target_left,
                               batch.target_right, batch.mask,
                               batch.entity_mask, cfg.loss)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: {value}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            n_real = int(batch.mask.sum())
            total += value * n_real
            positions += n_real
        stats = EpochStats(epoch, total / positions, lr)

        last = epoch == cfg.max_epochs - 1
        if last or (epoch + 1) % cfg.eval_every == 0:
            prf = evaluate(model, dev_sentences, SELECTION_THRESHOLD,
                           batch_size=cfg.batch_size)
            stats.dev_f1 = prf.f1
            if prf.f1 > result.best_f1 or best_params is None:
                result.best_f1 = prf.f1
                result.best_epoch = epoch
                best_params = model.param_arrays()
        result.history.append(stats)
        if log:
            dev = f"  dev_f1={stats.dev_f1:.4f}" if stats.dev_f1 is not None else ""
            log(f"epoch {epoch:>4}  loss={stats.loss:.6f}  lr={lr:.2e}{dev}")

    model.load_param_arrays(best_params)
    if out_path is not None:
        save_checkpoint(out_path, cfg, model.param_arrays(),
                        epoch=result.best_epoch,
                        rng_state=dropout_rng.bit_generator.state,
                        vocab=tuple(model.tables.vocab))
    return result


def _epoch_seed(seed: int, epoch: int) -> int:
    # distinct, deterministic shuffling stream per (run seed, epoch)
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])
