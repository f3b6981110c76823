"""Tape-free reverse-mode differentiation over float64 numpy arrays.

Every op returns a :class:`Var` holding the forward value plus a closure
that maps the output cotangent to input cotangents.  :func:`backward`
topologically sorts the graph from the root and accumulates gradients.
Gradients are exact reverse-mode derivatives; unit tests hold each op to
central finite differences.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigError, RecordValidationError


class Var:
    """A node in the computation graph: value, parents, and a vjp closure."""

    __slots__ = ("value", "parents", "vjp", "grad")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        self.grad = None

    @property
    def shape(self):
        return self.value.shape


def backward(root: Var, seed=None) -> None:
    """Accumulate gradients of ``root`` into every reachable ``Var.grad``.

    ``seed`` defaults to ones of the root's shape (i.e. sum of outputs).
    """
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    root.grad = np.ones_like(root.value) if seed is None else \
        np.asarray(seed, dtype=np.float64)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def add(a: Var, b: Var) -> Var:
    a, b = _as_var(a), _as_var(b)
    if a.value.shape != b.value.shape:
        raise RecordValidationError(
            f"add shape mismatch {a.value.shape} vs {b.value.shape}")
    return Var(a.value + b.value, (a, b), lambda g: (g, g))


def relu(a: Var) -> Var:
    a = _as_var(a)
    mask = a.value > 0
    return Var(a.value * mask, (a,), lambda g: (g * mask,))


def sigmoid(a: Var) -> Var:
    a = _as_var(a)
    s = 1.0 / (1.0 + np.exp(-a.value))
    return Var(s, (a,), lambda g: (g * s * (1.0 - s),))


def dense(x: Var, w: Var, b: Var) -> Var:
    """x [B, F] @ w [F, O] + b [O]."""
    x, w, b = _as_var(x), _as_var(w), _as_var(b)
    y = x.value @ w.value + b.value

    def vjp(g):
        return g @ w.value.T, x.value.T @ g, g.sum(axis=0)

    return Var(y, (x, w, b), vjp)


def _im2col(xp: np.ndarray, k: int, stride: int, t_out: int) -> np.ndarray:
    bs, cs, ts = xp.strides
    cols = as_strided(xp, shape=(xp.shape[0], xp.shape[1], k, t_out),
                      strides=(bs, cs, ts, stride * ts))
    return cols


def conv1d(x: Var, w: Var, b: Var, stride: int = 1, padding: int = 0) -> Var:
    """Cross-correlation of x [B, C_in, T] with w [C_out, C_in, k] plus bias.

    Output length is ``(T + 2*padding - k) // stride + 1``.
    """
    x, w, b = _as_var(x), _as_var(w), _as_var(b)
    batch, c_in, t_in = x.value.shape
    c_out, c_in_w, k = w.value.shape
    if c_in_w != c_in:
        raise RecordValidationError(
            f"conv1d channel mismatch: input {c_in}, weight {c_in_w}")
    t_pad = t_in + 2 * padding
    if k > t_pad:
        raise RecordValidationError(
            f"kernel {k} longer than padded input {t_pad}")
    t_out = (t_pad - k) // stride + 1
    xp = np.pad(x.value, ((0, 0), (0, 0), (padding, padding))) if padding else x.value
    cols = _im2col(xp, k, stride, t_out)
    out = np.tensordot(w.value, cols, axes=([1, 2], [1, 2]))  # [C_out, B, T']
    out = out.transpose(1, 0, 2) + b.value[None, :, None]

    def vjp(g):
        dw = np.tensordot(g, cols, axes=([0, 2], [0, 3]))       # [C_out, C_in, k]
        db = g.sum(axis=(0, 2))
        dcols = np.einsum("bot,oik->bikt", g, w.value)
        dxp = np.zeros((batch, c_in, t_pad))
        for j in range(k):
            dxp[:, :, j:j + stride * t_out:stride] += dcols[:, :, j, :]
        dx = dxp[:, :, padding:padding + t_in] if padding else dxp
        return dx, dw, db

    return Var(out, (x, w, b), vjp)


def mean_last(x: Var) -> Var:
    """Mean over the trailing (time) axis: [B, C, T] -> [B, C]."""
    x = _as_var(x)
    t = x.value.shape[-1]
    out = x.value.mean(axis=-1)

    def vjp(g):
        return (np.repeat(g[..., None], t, axis=-1) / t,)

    return Var(out, (x,), vjp)


def channel_scale(x: Var, s: Var) -> Var:
    """Multiply x [B, C, T] by per-channel weights s [B, C]."""
    x, s = _as_var(x), _as_var(s)

    def vjp(g):
        return g * s.value[:, :, None], (g * x.value).sum(axis=2)

    return Var(x.value * s.value[:, :, None], (x, s), vjp)


def batchnorm(x: Var, gamma: Var, beta: Var, running_mean: np.ndarray,
              running_var: np.ndarray, training: bool,
              momentum: float = 0.1, eps: float = 1e-5) -> Var:
    """Per-channel batch normalization over (batch, time).

    Training mode normalizes with (biased) batch statistics and updates
    the running buffers in place; eval mode uses the buffers.
    """
    x, gamma, beta = _as_var(x), _as_var(gamma), _as_var(beta)
    v = x.value
    if training:
        mu = v.mean(axis=(0, 2))
        var = v.var(axis=(0, 2))
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu[None, :, None]) * inv_std[None, :, None]
    out = gamma.value[None, :, None] * xhat + beta.value[None, :, None]

    def vjp(g):
        dgamma = (g * xhat).sum(axis=(0, 2))
        dbeta = g.sum(axis=(0, 2))
        dxhat = g * gamma.value[None, :, None]
        if training:
            mean_dxhat = dxhat.mean(axis=(0, 2))
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2))
            dx = inv_std[None, :, None] * (
                dxhat - mean_dxhat[None, :, None]
                - xhat * mean_dxhat_xhat[None, :, None])
        else:
            dx = dxhat * inv_std[None, :, None]
        return dx, dgamma, dbeta

    return Var(out, (x, gamma, beta), vjp)


def se_block(x: Var, params: dict, reduction: int) -> Var:
    """Channel recalibration: squeeze (global mean over time), a two-layer
    gate with a sigmoid, then per-channel scaling of the input.

    ``params`` must hold Vars ``fc1_w [C, C/r]``, ``fc1_b``, ``fc2_w
    [C/r, C]``, ``fc2_b``.
    """
    c = x.value.shape[1]
    if c % reduction != 0:
        raise ConfigError(
            f"se reduction {reduction} does not divide channel count {c}")
    squeezed = mean_last(x)
    h = relu(dense(squeezed, params["fc1_w"], params["fc1_b"]))
    weights = sigmoid(dense(h, params["fc2_w"], params["fc2_b"]))
    return channel_scale(x, weights)
