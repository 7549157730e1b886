"""Independent oracle implementations used to cross-check the package.

Everything here is deliberately written the slow, obvious way (explicit
loops, pairwise scans, scalar math) so that agreement with the vectorized
production code is meaningful.  Nothing in this module imports model code
except the bare Tensor container needed to drive finite differences.
"""
from __future__ import annotations

import math

import numpy as np

from spandet.tensor import Tensor


# ----- convolution oracle ---------------------------------------------------


def conv1d_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop 1-d convolution with same-length zero padding."""
    T, d_in = x.shape
    d_out, d_in2, k = w.shape
    assert d_in == d_in2 and k % 2 == 1
    p = (k - 1) // 2
    out = np.zeros((T, d_out), dtype=x.dtype)
    for t in range(T):
        for o in range(d_out):
            acc = b[o]
            for j in range(k):
                src = t + j - p
                if 0 <= src < T:
                    for i in range(d_in):
                        acc += x[src, i] * w[o, i, j]
            out[t, o] = acc
    return out


def glu_loops(x, wa, ba, wb, bb) -> np.ndarray:
    """Gated linear unit: conv_a(x) * sigmoid(conv_b(x))."""
    a = conv1d_loops(x, wa, ba)
    g = conv1d_loops(x, wb, bb)
    return a * (1.0 / (1.0 + np.exp(-g)))


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def context_layer_loops(h: np.ndarray, mask: np.ndarray, reduce_p, phase_ps,
                        expand_p) -> np.ndarray:
    """Step-by-step oracle for the gated multi-scale convolution layer.

    ``reduce_p``/``expand_p`` are (wa, ba, wb, bb) tuples of k=1 gated convs;
    ``phase_ps`` is a list of such tuples with the wide kernel.  Padded
    positions are zeroed before every convolution and after the layer.
    """
    m = mask[:, None].astype(h.dtype)
    maps = [glu_loops(h * m, *reduce_p) * m]
    for params in phase_ps:
        prev = maps[-1]
        maps.append((_elu(glu_loops(prev, *params)) + prev) * m)
    fused = np.max(np.stack(maps, axis=0), axis=0)
    out = _elu(glu_loops(fused, *expand_p))
    return _elu(out + h) * m


# ----- finite differences ---------------------------------------------------


def numeric_gradient(f, leaf: Tensor, h: float = 1e-4,
                     indices=None) -> np.ndarray:
    """Central finite differences of scalar-valued f() wrt one leaf tensor.

    ``f`` must rebuild its graph from the leaf's current data on every call.
    When ``indices`` is given only those flat entries are touched; the rest
    of the returned array is NaN.
    """
    flat = leaf.data.reshape(-1)
    grad = np.full(flat.shape, np.nan)
    todo = range(flat.size) if indices is None else indices
    for i in todo:
        keep = flat[i]
        flat[i] = keep + h
        up = f().item()
        flat[i] = keep - h
        down = f().item()
        flat[i] = keep
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(leaf.data.shape)


def gradient_errors(f, leaves: dict[str, Tensor], h: float = 1e-4,
                    sample: int | None = None,
                    rng: np.random.Generator | None = None):
    """Compare analytic and numeric gradients for every named leaf.

    Returns {name: (max_abs_err, max_rel_err_above_floor)} where the relative
    error is only charged when the absolute error exceeds the 1e-6 floor.
    """
    for t in leaves.values():
        t.grad = None
    loss = f()
    loss.backward()
    analytic = {name: t.grad.copy() if t.grad is not None
                else np.zeros_like(t.data) for name, t in leaves.items()}
    report = {}
    for name, t in leaves.items():
        idx = None
        if sample is not None and t.data.size > sample:
            idx = (rng or np.random.default_rng(0)).choice(
                t.data.size, size=sample, replace=False)
        num = numeric_gradient(f, t, h=h, indices=idx)
        a = analytic[name].reshape(-1)
        n = num.reshape(-1)
        checked = ~np.isnan(n)
        abs_err = np.abs(a[checked] - n[checked])
        denom = np.maximum(np.maximum(np.abs(a[checked]), np.abs(n[checked])), 1e-12)
        rel = np.where(abs_err <= 1e-6, 0.0, abs_err / denom)
        report[name] = (float(abs_err.max(initial=0.0)), float(rel.max(initial=0.0)))
    return report


def assert_gradients_match(f, leaves: dict[str, Tensor], rtol: float = 1e-3,
                           h: float = 1e-4, sample: int | None = None,
                           rng: np.random.Generator | None = None) -> None:
    report = gradient_errors(f, leaves, h=h, sample=sample, rng=rng)
    bad = {k: v for k, v in report.items() if v[1] >= rtol}
    assert not bad, f"gradient mismatch: {bad}"


# ----- greedy decoding oracle ------------------------------------------------


def decode_bruteforce(class_probs: np.ndarray, lefts: np.ndarray,
                      rights: np.ndarray, threshold: float):
    """Reference decoder: filter, sort, then a quadratic overlap scan.

    ``class_probs`` is (n, c+1) with the last slot meaning non-entity.
    Returns (start, end, type_id, confidence) tuples, sorted by start.
    """
    n, width = class_probs.shape
    non_entity = width - 1
    cands = []
    for i in range(n):
        slot = int(np.argmax(class_probs[i]))
        conf = float(class_probs[i, slot])
        if slot == non_entity or conf < threshold:
            continue
        start = max(0, i - math.floor(lefts[i] + 0.5))
        end = min(n - 1, i + math.floor(rights[i] + 0.5))
        cands.append((start, end, slot + 1, conf, i))
    cands.sort(key=lambda s: (-s[3], s[4], s[2]))
    kept = []
    for c in cands:
        if all(c[1] < k[0] or c[0] > k[1] for k in kept):
            kept.append(c)
    return sorted((s, e, t, conf) for s, e, t, conf, _ in kept)


# ----- loss oracle ------------------------------------------------------------


def focal_term_scalar(y: int, yhat: float, alpha: float, gamma: float) -> float:
    yhat = min(max(yhat, 1e-7), 1.0 - 1e-7)
    if y == 1:
        return -alpha * (1.0 - yhat) ** gamma * math.log(yhat)
    return (alpha - 1.0) * yhat ** gamma * math.log(1.0 - yhat)


def smooth_l1_scalar(target: float, pred: float) -> float:
    r = abs(target - pred)
    return 0.5 * r * r if r < 1.0 else r - 0.5


def entity_loss_script(class_probs, lefts, rights, target_slot, target_left,
                       target_right, position_mask, alpha, gamma, beta,
                       focal_all_classes=True) -> float:
    """Scalar-loop evaluation of the joint detection loss.

    Arrays are (B, T) or (B, T, c+1); ``target_slot`` holds the gold slot per
    position with the last slot meaning non-entity.
    """
    B, T, width = class_probs.shape
    non_entity = width - 1
    n_real = 0
    n_entity = 0
    conf_sum = 0.0
    bound_sum = 0.0
    for b in range(B):
        for t in range(T):
            if not position_mask[b, t]:
                continue
            n_real += 1
            gold = int(target_slot[b, t])
            if focal_all_classes:
                for s in range(width):
                    conf_sum += focal_term_scalar(
                        1 if s == gold else 0, float(class_probs[b, t, s]),
                        alpha, gamma)
            else:
                conf_sum += focal_term_scalar(
                    1, float(class_probs[b, t, gold]), alpha, gamma)
            if gold != non_entity:
                n_entity += 1
                bound_sum += smooth_l1_scalar(float(target_left[b, t]),
                                              float(lefts[b, t]))
                bound_sum += smooth_l1_scalar(float(target_right[b, t]),
                                              float(rights[b, t]))
    assert n_real > 0
    loss = beta * conf_sum / n_real
    if n_entity > 0:
        loss += bound_sum / n_entity
    return loss
