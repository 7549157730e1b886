"""Per-position detection heads over encoder states.

A k=3 convolution scores c+1 classes per position (the last slot means
non-entity); its logits pass through ReLU before the softmax, which caps
the winning probability at e^z / (e^z + c) for a top logit of z.  Two more
k=3 convolutions regress the nonnegative left/right span-edge distances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spandet import tensor as tt
from spandet.encoder import _glorot, _zeros  # shared init helpers
from spandet.tensor import Tensor


@dataclass
class Candidate:
    """One position's prediction: class distribution plus edge offsets."""
    position: int
    class_probs: np.ndarray  # length c+1, last slot = non-entity
    left: float
    right: float

    @property
    def best_slot(self) -> int:
        return int(np.argmax(self.class_probs))

    @property
    def confidence(self) -> float:
        return float(self.class_probs[self.best_slot])


class DetectionHeads:
    def __init__(self, d_model: int, n_classes: int, rng, dtype,
                 relu_logits: bool = True):
        k = 3
        self.n_classes = n_classes
        self.relu_logits = relu_logits
        self.w_cls = _glorot(rng, d_model * k, (n_classes + 1) * k,
                             (n_classes + 1, d_model, k), dtype)
        # class logits pass through a ReLU: a position whose logits are all
        # <= 0 emits the uniform distribution with zero gradient, a fixed
        # point it can never leave.  Start every logit in the active region.
        self.b_cls = _zeros(n_classes + 1, dtype)
        if relu_logits:
            self.b_cls.data += 1.0
        self.w_left = _glorot(rng, d_model * k, k, (1, d_model, k), dtype)
        self.b_left = _zeros(1, dtype)
        self.w_right = _glorot(rng, d_model * k, k, (1, d_model, k), dtype)
        self.b_right = _zeros(1, dtype)

    def classify_positions(self, h: Tensor) -> Tensor:
        """(.., T, d_model) -> (.., T, c+1) class probabilities."""
        logits = tt.conv1d(h, self.w_cls, self.b_cls)
        if self.relu_logits:
            logits = tt.relu(logits)
        return tt.softmax(logits)

    def predict_offsets(self, h: Tensor) -> tuple[Tensor, Tensor]:
        """(.., T, d_model) -> two (.., T) tensors of nonnegative offsets."""
        left = tt.relu(tt.conv1d(h, self.w_left, self.b_left))
        right = tt.relu(tt.conv1d(h, self.w_right, self.b_right))
        return (tt.reshape(left, left.shape[:-1]),
                tt.reshape(right, right.shape[:-1]))

    def params(self):
        return {"cls.w": self.w_cls, "cls.b": self.b_cls,
                "left.w": self.w_left, "left.b": self.b_left,
                "right.w": self.w_right, "right.b": self.b_right}


def candidates_from_arrays(class_probs: np.ndarray, lefts: np.ndarray,
                           rights: np.ndarray) -> list[Candidate]:
    """Bundle per-position head outputs for one sentence into Candidates."""
    n = class_probs.shape[0]
    if lefts.shape != (n,) or rights.shape != (n,):
        raise ValueError("offset arrays must align with class_probs rows")
    return [Candidate(i, class_probs[i], float(lefts[i]), float(rights[i]))
            for i in range(n)]
