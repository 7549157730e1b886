"""Whole-span named entity detection.

Every token position proposes an entity class plus left/right span offsets;
a confidence-thresholded greedy decoder turns the proposals into
non-overlapping spans.  The numerical substrate is a small numpy-backed
reverse-mode autodiff library in :mod:`spandet.tensor`.
"""

from spandet.config import EncoderConfig, ModelConfig
from spandet.data import EntitySpan, Sentence, parse_conll
from spandet.decoder import PRF, decode, threshold_sweep
from spandet.loss import LossConfig, entity_loss
from spandet.model import SpanDetector, build_model, restore_model
from spandet.tensor import Tensor, no_grad
from spandet.train import TrainResult, evaluate, train

__all__ = [
    "EncoderConfig", "ModelConfig", "EntitySpan", "Sentence", "parse_conll",
    "PRF", "decode", "threshold_sweep", "LossConfig", "entity_loss",
    "SpanDetector", "build_model", "restore_model", "Tensor", "no_grad",
    "TrainResult", "evaluate", "train",
]
__version__ = "0.1.0"
