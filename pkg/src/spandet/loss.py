"""Joint detection loss: focal classification plus smooth-L1 boundaries.

The classification term applies a two-branch focal weighting to every class
slot at every real position (a config switch restricts it to the gold slot
only).  The boundary term penalizes the predicted left/right offsets with
smooth L1 at gold entity positions only.  The two sums are normalized by
different counts: all real positions for the classification term, entity
positions for the boundary term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spandet import tensor as tt
from spandet.tensor import Tensor

PROB_FLOOR = 1e-7


@dataclass
class LossConfig:
    alpha: float = 0.05
    gamma: float = 2.0
    beta: float = 10.0
    focal_all_classes: bool = True

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")


# ----- scalar forms (used directly in tests and small tools) -----------------


def smooth_l1(target: float, pred: float) -> float:
    """0.5 * r**2 for |r| < 1, |r| - 0.5 otherwise, r = target - pred."""
    r = abs(target - pred)
    return 0.5 * r * r if r < 1.0 else r - 0.5


def focal_term(y: int, yhat: float, alpha: float, gamma: float) -> float:
    """Two-branch focal loss for one class slot; yhat is clamped first."""
    yhat = min(max(yhat, PROB_FLOOR), 1.0 - PROB_FLOOR)
    if y == 1:
        return -alpha * (1.0 - yhat) ** gamma * math.log(yhat)
    return (alpha - 1.0) * yhat ** gamma * math.log(1.0 - yhat)


def boundary_loss(target_left: float, target_right: float, pred_left: float,
                  pred_right: float) -> float:
    return smooth_l1(target_left, pred_left) + smooth_l1(target_right, pred_right)


# ----- batched differentiable form -------------------------------------------


def entity_loss(class_probs: Tensor, left: Tensor, right: Tensor,
                target_slot: np.ndarray, target_left: np.ndarray,
                target_right: np.ndarray, position_mask: np.ndarray,
                entity_mask: np.ndarray, cfg: LossConfig) -> Tensor:
    """Scalar training loss over one padded batch.

    ``class_probs`` is (B, T, c+1); ``left``/``right`` are (B, T);
    ``target_slot`` holds gold slots with the last slot meaning non-entity.
    Positions with ``position_mask`` 0 contribute to nothing; the boundary
    term is dropped entirely when the batch holds no entity positions.
    """
    B, T, width = class_probs.shape
    if left.shape != (B, T) or right.shape != (B, T):
        raise ValueError("offset tensors must be (B, T)")
    n_real = float(position_mask.sum())
    if n_real == 0:
        raise ValueError("batch has no real positions")
    dtype = class_probs.data.dtype

    onehot = np.zeros((B, T, width), dtype=dtype)
    np.put_along_axis(onehot, target_slot[..., None], 1.0, axis=-1)
    pmask = position_mask[..., None].astype(dtype)

    p = tt.clamp(class_probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    pos_term = tt.log(p) * tt.power(1.0 - p, cfg.gamma) * (-cfg.alpha)
    focal = pos_term * (onehot * pmask)
    if cfg.focal_all_classes:
        # the complement needs its own floor: at 32-bit, 1 - 1e-7 rounds to 1
        comp = tt.clamp(1.0 - p, PROB_FLOOR, 1.0)
        neg_term = tt.log(comp) * tt.power(p, cfg.gamma) * (cfg.alpha - 1.0)
        focal = focal + neg_term * ((1.0 - onehot) * pmask)
    total = focal.sum() * (cfg.beta / n_real)

    n_entity = float(entity_mask.sum())
    if n_entity > 0:
        emask = entity_mask.astype(dtype)
        bound = (tt.smooth_l1(left, target_left.astype(dtype)) +
                 tt.smooth_l1(right, target_right.astype(dtype))) * emask
        total = total + bound.sum() * (1.0 / n_entity)
    return total
