"""Sequence encoder: attention stack plus gated multi-scale convolutions.

The encoder consumes projected token embeddings with sinusoidal positions
added, runs N self-attention layers (attention, dropout, residual, layer
norm; no feed-forward sublayer), then M context-fusion layers built from
gated 1-d convolutions.  Padded positions are forced to exactly zero at
every layer boundary so padding can never leak into real positions through
a convolution window or an attention weight.
"""
from __future__ import annotations

import numpy as np

from spandet import tensor as tt
from spandet.tensor import ShapeError, Tensor

NEG_INF = -1e9


def positional_encoding(n: int, d_model: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal position table: sin on even dims, cos on odd dims."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, dim / d_model)
    pe = np.zeros((n, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe.astype(dtype)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                  requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Affine:
    """Learned x @ W + b."""

    def __init__(self, d_in: int, d_out: int, rng, dtype):
        self.w = _glorot(rng, d_in, d_out, (d_in, d_out), dtype)
        self.b = _zeros(d_out, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return tt.matmul(x, self.w) + self.b

    def params(self):
        return {"w": self.w, "b": self.b}


class GatedConv:
    """Gated linear unit over time: conv_a(x) * sigmoid(conv_b(x))."""

    def __init__(self, d_in: int, d_out: int, k: int, rng, dtype):
        if k % 2 == 0:
            raise ShapeError(f"gated conv kernel must be odd, got {k}")
        self.k = k
        self.wa = _glorot(rng, d_in * k, d_out * k, (d_out, d_in, k), dtype)
        self.ba = _zeros(d_out, dtype)
        self.wb = _glorot(rng, d_in * k, d_out * k, (d_out, d_in, k), dtype)
        self.bb = _zeros(d_out, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return tt.conv1d(x, self.wa, self.ba) * tt.sigmoid(
            tt.conv1d(x, self.wb, self.bb))

    def params(self):
        return {"wa": self.wa, "ba": self.ba, "wb": self.wb, "bb": self.bb}


def glu(x, wa, ba, wb, bb) -> Tensor:
    """Functional gated linear unit for explicitly supplied parameters."""
    return tt.conv1d(x, wa, ba) * tt.sigmoid(tt.conv1d(x, wb, bb))


class AttentionLayer:
    """One self-attention layer: MHA, dropout, residual add, layer norm."""

    def __init__(self, d_model: int, heads: int, dropout: float, rng, dtype):
        if d_model % heads != 0:
            raise ShapeError(f"d_model {d_model} not divisible by {heads} heads")
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.rate = dropout
        self.q = Affine(d_model, d_model, rng, dtype)
        self.k = Affine(d_model, d_model, rng, dtype)
        self.v = Affine(d_model, d_model, rng, dtype)
        self.o = Affine(d_model, d_model, rng, dtype)
        self.ln_gamma = Tensor(np.ones(d_model, dtype=dtype), requires_grad=True)
        self.ln_beta = _zeros(d_model, dtype)

    def _split(self, x: Tensor, B: int, T: int) -> Tensor:
        return tt.transpose(tt.reshape(x, (B, T, self.heads, self.d_head)),
                            (0, 2, 1, 3))

    def __call__(self, x: Tensor, mask: np.ndarray, *, training: bool = False,
                 rng=None, return_weights: bool = False):
        B, T, _ = x.shape
        q = self._split(self.q(x), B, T)
        k = self._split(self.k(x), B, T)
        v = self._split(self.v(x), B, T)
        scores = tt.matmul(q, tt.transpose(k, (0, 1, 3, 2)))
        scores = scores * (1.0 / np.sqrt(self.d_head))
        # padded keys get a large negative bias and underflow to weight 0
        key_bias = (NEG_INF * (1.0 - mask))[:, None, None, :].astype(x.dtype)
        weights = tt.softmax(scores + Tensor(key_bias))
        ctx = tt.reshape(tt.transpose(tt.matmul(weights, v), (0, 2, 1, 3)),
                         (B, T, self.d_model))
        out = tt.dropout(self.o(ctx), self.rate, training, rng)
        out = tt.layer_norm(x + out, self.ln_gamma, self.ln_beta)
        out = out * Tensor(mask[:, :, None].astype(x.dtype))
        if return_weights:
            return out, weights.data
        return out

    def params(self):
        named = {}
        for prefix, aff in (("q", self.q), ("k", self.k), ("v", self.v),
                            ("o", self.o)):
            for n, p in aff.params().items():
                named[f"{prefix}.{n}"] = p
        named["ln.gamma"] = self.ln_gamma
        named["ln.beta"] = self.ln_beta
        return named


class MhaStack:
    """N identical attention layers applied in sequence."""

    def __init__(self, n_layers: int, d_model: int, heads: int, dropout: float,
                 rng, dtype):
        self.layers = [AttentionLayer(d_model, heads, dropout, rng, dtype)
                       for _ in range(n_layers)]

    def __call__(self, x: Tensor, mask: np.ndarray, *, training: bool = False,
                 rng=None) -> Tensor:
        if mask.shape != x.shape[:2]:
            raise ShapeError(f"mask shape {mask.shape} != {x.shape[:2]}")
        if np.any(mask.sum(axis=-1) == 0):
            raise ValueError("a sentence with every position masked is not allowed")
        for layer in self.layers:
            x = layer(x, mask, training=training, rng=rng)
        return x

    def params(self):
        return {f"layer{i}.{n}": p for i, layer in enumerate(self.layers)
                for n, p in layer.params().items()}


class ContextFusionLayer:
    """Gated multi-scale convolution block with channel-max fusion.

    A k=1 gated conv reduces d_model to a narrow working width, a chain of
    residual wide-kernel gated convs grows the receptive field one phase at
    a time, the phase maps are fused by an elementwise max, and a k=1 gated
    conv expands back to d_model before the final residual.  Padded
    positions are zeroed before every convolution and after the layer.
    """

    def __init__(self, d_model: int, reduction: float, k: int, n_phases: int,
                 rng, dtype):
        d_inner = d_model * reduction
        if d_inner != int(d_inner) or int(d_inner) < 1:
            raise ShapeError(
                f"d_model * reduction must be a positive integer, got {d_inner}")
        self.d_inner = int(d_inner)
        self.reduce = GatedConv(d_model, self.d_inner, 1, rng, dtype)
        self.phases = [GatedConv(self.d_inner, self.d_inner, k, rng, dtype)
                       for _ in range(n_phases)]
        self.expand = GatedConv(self.d_inner, d_model, 1, rng, dtype)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        m = Tensor(np.expand_dims(mask, -1).astype(x.dtype))
        maps = [self.reduce(x * m) * m]
        for phase in self.phases:
            prev = maps[-1]
            maps.append((tt.elu(phase(prev)) + prev) * m)
        fused = tt.maximum_list(maps)
        out = tt.elu(self.expand(fused))
        return tt.elu(out + x) * m

    def params(self):
        named = {f"reduce.{n}": p for n, p in self.reduce.params().items()}
        for i, phase in enumerate(self.phases):
            named.update({f"phase{i}.{n}": p for n, p in phase.params().items()})
        named.update({f"expand.{n}": p for n, p in self.expand.params().items()})
        return named
