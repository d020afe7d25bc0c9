"""A minimal reverse-mode differentiation engine over numpy arrays.

Only the operations the deep ConvNet needs are provided.  Each op builds a
:class:`Tensor` that records its parents and a closure propagating the
output gradient into them; :meth:`Tensor.backward` runs the closures in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents: Sequence["Tensor"] = (),
                 backward_fn: Callable[[np.ndarray], None] | None = None,
                 requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data) if grad is None else grad)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _parse_einsum(spec: str) -> tuple[list[str], str]:
    ins, out = spec.replace(" ", "").split("->")
    return ins.split(","), out


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum with gradients for both operands."""
    (ia, ib), io = _parse_einsum(spec)
    out = Tensor(np.einsum(spec, a.data, b.data), (a, b))

    def grad_for(target: Tensor, it: str, other: Tensor, iother: str, g: np.ndarray):
        kept = "".join(c for c in it if c in io or c in iother)
        ga = np.einsum(f"{io},{iother}->{kept}", g, other.data)
        # indices summed only inside this operand broadcast back unchanged
        missing = [i for i, c in enumerate(it) if c not in kept]
        if missing:
            ga = np.expand_dims(ga, missing)
        target.accumulate(np.broadcast_to(ga, target.shape))

    def backward(g):
        if a.requires_grad:
            grad_for(a, ia, b, ib, g)
        if b.requires_grad:
            grad_for(b, ib, a, ia, g)

    out.backward_fn = backward
    return out


def add_channel_bias(x: Tensor, b: Tensor) -> Tensor:
    """x (B, T, C) plus a per-channel bias b (C,)."""
    out = Tensor(x.data + b.data, (x, b))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=(0, 1)))

    out.backward_fn = backward
    return out


def conv1d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Valid 1-D cross-correlation in channels-last layout.

    x (B, T, Cin), w (K, Cin, Cout) -> (B, T', Cout).
    """
    B, T, cin = x.shape
    K, cin_w, cout = w.shape
    if cin != cin_w:
        raise ValueError(f"conv1d: input has {cin} channels, kernel expects {cin_w}")
    if T < K:
        raise ValueError(f"conv1d: input length {T} shorter than kernel {K}")
    tp = (T - K) // stride + 1
    stop = stride * (tp - 1) + 1
    cols = np.empty((B, tp, K, cin), dtype=x.data.dtype)
    for k in range(K):
        cols[:, :, k, :] = x.data[:, k:k + stop:stride, :]
    cols = cols.reshape(B * tp, K * cin)
    wmat = w.data.reshape(K * cin, cout)
    out = Tensor((cols @ wmat).reshape(B, tp, cout), (x, w))

    def backward(g):
        g2 = g.reshape(B * tp, cout)
        if w.requires_grad:
            w.accumulate((cols.T @ g2).reshape(w.shape))
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(B, tp, K, cin)
            gx = np.zeros_like(x.data)
            for k in range(K):
                gx[:, k:k + stop:stride, :] += gcols[:, :, k, :]
            x.accumulate(gx)

    out.backward_fn = backward
    return out


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5, stats: dict | None = None, key: str = "") -> Tensor:
    """Batch normalization over batch and time for x (B, T, C).

    In training mode the batch statistics are used; if ``stats`` is given the
    updated running statistics are written to ``stats[key]`` (the biased
    variance is corrected by N/(N-1) for the running estimate).
    """
    xd = x.data
    n = xd.shape[0] * xd.shape[1]
    if training:
        mu = xd.mean(axis=(0, 1))
        var = xd.var(axis=(0, 1))
        if stats is not None:
            unbiased = var * (n / max(n - 1, 1))
            stats[key] = (
                (1 - momentum) * running_mean + momentum * mu,
                (1 - momentum) * running_var + momentum * unbiased,
            )
    else:
        mu, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mu.astype(xd.dtype)) * inv_std
    out = Tensor(gamma.data * xhat + beta.data, (x, gamma, beta))

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 1)))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 1)))
        if x.requires_grad:
            dxhat = g * gamma.data
            if training:
                s1 = dxhat.sum(axis=(0, 1))
                s2 = (dxhat * xhat).sum(axis=(0, 1))
                gx = (inv_std / n) * (n * dxhat - s1 - xhat * s2)
            else:
                gx = dxhat * inv_std
            x.accumulate(gx)

    out.backward_fn = backward
    return out


def elu(x: Tensor, trace: list | None = None) -> Tensor:
    if trace is not None:
        trace.append(x.data > 0)
    # expm1(min(x, 0)) >= x for x <= 0, so the max selects the right branch
    res = np.expm1(np.minimum(x.data, 0))
    np.maximum(res, x.data, out=res)
    out = Tensor(res, (x,))

    def backward(g):
        # derivative is 1 above zero and exp(x) = res + 1 below
        x.accumulate(g * (np.minimum(res, 0) + 1))

    out.backward_fn = backward
    return out


def max_pool1d(x: Tensor, size: int, stride: int, trace: list | None = None) -> Tensor:
    """Max over time windows of x (B, T, C); ties go to the earliest sample."""
    T = x.shape[1]
    if T < size:
        raise ValueError(f"max_pool1d: input length {T} shorter than pool {size}")
    tp = (T - size) // stride + 1
    stop = stride * (tp - 1) + 1
    views = [x.data[:, j:j + stop:stride, :] for j in range(size)]
    res = views[0].copy()
    for v in views[1:]:
        np.maximum(res, v, out=res)
    if trace is not None:
        arg = np.full(res.shape, size, dtype=np.int8)
        for j in reversed(range(size)):
            arg[views[j] == res] = j
        trace.append(arg)
    out = Tensor(res, (x,))

    def backward(g):
        gx = np.zeros_like(x.data)
        taken = np.zeros(res.shape, dtype=bool)
        for j, v in enumerate(views):
            hit = v == res
            if j:
                hit &= ~taken
            if j < size - 1:
                taken |= hit
            gx[:, j:j + stop:stride, :] += g * hit
        x.accumulate(gx)

    out.backward_fn = backward
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    keep = rng.random(x.shape, dtype=np.float32) >= p
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    mask = keep.astype(x.data.dtype) * scale
    out = Tensor(x.data * mask, (x,))

    def backward(g):
        x.accumulate(g * mask)

    out.backward_fn = backward
    return out


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Flatten x (B, ...) and map with w (features, classes) plus b."""
    B = x.shape[0]
    flat = x.data.reshape(B, -1)
    out = Tensor(flat @ w.data + b.data, (x, w, b))

    def backward(g):
        if w.requires_grad:
            w.accumulate(flat.T @ g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=0))
        if x.requires_grad:
            x.accumulate((g @ w.data.T).reshape(x.shape))

    out.backward_fn = backward
    return out


def log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(scores: Tensor, targets: np.ndarray,
                  class_weights: np.ndarray | None = None) -> Tensor:
    """Weighted mean negative log-likelihood, normalized by the summed weights."""
    targets = np.asarray(targets, dtype=np.int64)
    n, k = scores.shape
    weights = np.ones(k) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    wi = weights[targets].astype(scores.data.dtype)
    logp = log_softmax(scores.data)
    total = wi.sum()
    loss = -(wi * logp[np.arange(n), targets]).sum() / total
    out = Tensor(np.asarray(loss, dtype=scores.data.dtype), (scores,))

    def backward(g):
        probs = np.exp(logp)
        probs[np.arange(n), targets] -= 1.0
        scores.accumulate(g * probs * (wi / total)[:, None])

    out.backward_fn = backward
    return out
