"""Dense tensors with reverse-mode automatic differentiation.

numpy supplies storage and raw arithmetic; graph bookkeeping, the operator
set (1-d convolution, softmax, layer norm, ...) and the backward pass live
here.  A graph is built during each forward pass and dropped after
``backward`` runs, so nothing persists across training steps except the
leaf tensors themselves.

Broadcasting is supported only where an operation states so (``add`` and
``mul`` accept numpy-broadcastable shapes, which covers bias terms and
validity masks); everything else requires exact shape agreement and raises
:class:`ShapeError` otherwise.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operands do not conform to an operation's shape contract."""


_grad_enabled = True
_debug_checks = False


def set_debug_checks(flag: bool) -> None:
    """Enable finite-value assertions on every op output (slow; tests only)."""
    global _debug_checks
    _debug_checks = bool(flag)


class no_grad:
    """Context manager that disables graph construction (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # ----- bookkeeping -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def assert_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("tensor contains NaN or Inf")

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ----- autodiff -----------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output to every graph leaf."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ----- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return mul(tensor_sum(self, axis=axis, keepdims=keepdims), 1.0 / float(n))

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) > 1 else axes[0])


# ----- graph construction helpers ---------------------------------------


def _as_tensor(x, like: np.ndarray | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Wrap an op result; prune the graph when grads are off or unneeded."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._parents = parents if needs else ()
    out._backward = backward if needs else None
    if _debug_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError("op produced NaN or Inf")
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        raise ShapeError(f"gradient shape {g.shape} != tensor shape {t.data.shape}")
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape an operand had before broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ----- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from e
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from e
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from e
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    if a.ndim < 1 or b.ndim < 2:
        raise ShapeError("matmul requires at least 1-d @ 2-d operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            _accum(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward)


# ----- nonlinearities ------------------------------------------------------


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accum(x, g * out * (1.0 - out))

    return _make(out, (x,), backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def backward(g):
        _accum(x, g * (x.data > 0))

    return _make(data, (x,), backward)


def elu(x) -> Tensor:
    x = _as_tensor(x)
    neg = np.minimum(x.data, 0.0)
    data = np.where(x.data > 0, x.data, np.expm1(neg))

    def backward(g):
        _accum(x, g * np.where(x.data > 0, 1.0, np.exp(neg)))

    return _make(data, (x,), backward)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    data = np.exp(x.data)

    def backward(g):
        _accum(x, g * data)

    return _make(data, (x,), backward)


def log(x) -> Tensor:
    x = _as_tensor(x)
    data = np.log(x.data)

    def backward(g):
        _accum(x, g / x.data)

    return _make(data, (x,), backward)


def power(x, p: float) -> Tensor:
    """Elementwise x**p for a constant real exponent."""
    x = _as_tensor(x)
    p = float(p)
    data = x.data ** p

    def backward(g):
        if p == 0.0:
            _accum(x, np.zeros_like(x.data))
        else:
            _accum(x, g * p * x.data ** (p - 1.0))

    return _make(data, (x,), backward)


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input was in range."""
    x = _as_tensor(x)
    data = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        _accum(x, g * inside)

    return _make(data, (x,), backward)


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        gx = s * (g - (g * s).sum(axis=-1, keepdims=True))
        _accum(x, gx)

    return _make(s, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the learned affine pair."""
    x = _as_tensor(x)
    gamma = _as_tensor(gamma, like=x.data)
    beta = _as_tensor(beta, like=x.data)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            _accum(beta, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            _accum(x, gx)

    return _make(data, (x, gamma, beta), backward)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout.  Exact identity when not training or rate == 0."""
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    mask = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    data = x.data * mask

    def backward(g):
        _accum(x, g * mask)

    return _make(data, (x,), backward)


# ----- structure ops -------------------------------------------------------


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty list")
    ref = list(ts[0].shape)
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(
                o != r for i, (o, r) in enumerate(zip(other, ref)) if i != ax):
            raise ShapeError("concat: shapes differ off the concat axis")
    data = np.concatenate([t.data for t in ts], axis=ax)
    sizes = [t.shape[ax] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(data, tuple(ts), backward)


def maximum_list(tensors) -> Tensor:
    """Elementwise max over same-shaped tensors.

    Gradient routes to the argmax; exact ties go to the lowest-indexed input.
    """
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("maximum_list of an empty list")
    shape = ts[0].shape
    for t in ts[1:]:
        if t.shape != shape:
            raise ShapeError("maximum_list: all tensors must share a shape")
    stacked = np.stack([t.data for t in ts], axis=0)
    winner = np.argmax(stacked, axis=0)  # first max wins ties
    data = np.take_along_axis(stacked, winner[None], axis=0)[0]

    def backward(g):
        for i, t in enumerate(ts):
            _accum(t, g * (winner == i))

    return _make(data, tuple(ts), backward)


def tensor_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)
    if not isinstance(data, np.ndarray):
        data = np.asarray(data)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape).copy())

    return _make(data, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(data, (x,), backward)


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    data = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accum(x, np.transpose(g, inverse))

    return _make(data, (x,), backward)


def take_rows(table, indices) -> Tensor:
    """Row lookup into a 2-d table; gradients scatter-add back into rows."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise ShapeError("take_rows expects a 2-d table")
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise ShapeError("take_rows indices must be integers")
    data = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        _accum(table, gt)

    return _make(data, (table,), backward)


def smooth_l1(pred, target) -> Tensor:
    """Elementwise smooth L1 between predictions and a constant target array.

    0.5 * r**2 inside the unit residual band, |r| - 0.5 outside.
    """
    pred = _as_tensor(pred)
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.shape:
        raise ShapeError(f"smooth_l1: target shape {t.shape} != pred shape {pred.shape}")
    r = pred.data - t
    inside = np.abs(r) < 1.0
    data = np.where(inside, 0.5 * r * r, np.abs(r) - 0.5)

    def backward(g):
        _accum(pred, g * np.where(inside, r, np.sign(r)))

    return _make(data, (pred,), backward)


# ----- convolution ---------------------------------------------------------


def conv1d(x, weights, bias) -> Tensor:
    """1-d convolution along the time axis with same-length zero padding.

    ``x`` is (T, d_in) or (batch, T, d_in); ``weights`` is (d_out, d_in, k)
    with odd k; ``bias`` is (d_out,).  Output length always equals T.
    """
    x = _as_tensor(x)
    w = _as_tensor(weights, like=x.data)
    b = _as_tensor(bias, like=x.data)
    if x.ndim not in (2, 3):
        raise ShapeError(f"conv1d input must be 2-d or 3-d, got {x.shape}")
    if w.ndim != 3:
        raise ShapeError(f"conv1d weights must be (d_out, d_in, k), got {w.shape}")
    d_out, d_in, k = w.shape
    if k % 2 == 0:
        raise ShapeError(f"conv1d kernel width must be odd, got {k}")
    if x.shape[-1] != d_in:
        raise ShapeError(f"conv1d: input dim {x.shape[-1]} != weight d_in {d_in}")
    if b.shape != (d_out,):
        raise ShapeError(f"conv1d: bias shape {b.shape} != ({d_out},)")
    T = x.shape[-2]
    p = (k - 1) // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(p, p), (0, 0)]
    xp = np.pad(x.data, pad)
    data = np.broadcast_to(b.data, x.shape[:-1] + (d_out,)).copy()
    for j in range(k):
        data += np.matmul(xp[..., j:j + T, :], w.data[:, :, j].T)

    def backward(g):
        if b.requires_grad:
            _accum(b, g.reshape(-1, d_out).sum(axis=0))
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            g2 = g.reshape(-1, d_out)
            for j in range(k):
                gw[:, :, j] = g2.T @ xp[..., j:j + T, :].reshape(-1, d_in)
            _accum(w, gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[..., j:j + T, :] += np.matmul(g, w.data[:, :, j])
            _accum(x, gxp[..., p:p + T, :])

    return _make(data, (x, w, b), backward)
