"""Minimal dense-tensor reverse-mode autodiff with Adam.

Tensors wrap contiguous numpy arrays (row-major).  Operations record
backward closures onto an implicit tape; ``backward`` on a scalar loss
walks the graph in reverse topological order exactly once, accumulates
gradients into every ``requires_grad`` tensor, then releases the graph
(the tape cannot be replayed).  Use ``no_grad()`` around inference so
nothing is recorded.

Broadcasting is deliberately restricted: only ``add`` broadcasts, and
only in the bias-vector sense (trailing/unit axes).  Everything else
requires exact shape agreement and fails loudly with both shapes.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "tensor",
    "no_grad",
    "set_debug_checks",
    "active_node_count",
    "add",
    "sub",
    "mul",
    "matmul",
    "concat",
    "narrow",
    "bcw_to_rows",
    "rows_step",
    "stack_steps",
    "rows_to_bcw",
    "repeat_rows",
    "mean_time",
    "tile_time",
    "sigmoid",
    "tanh",
    "relu",
    "causal_dilated_conv1d",
    "mse_loss",
    "AdamState",
    "adam_init",
    "adam_step",
]


class ShapeError(ValueError):
    pass


_grad_enabled = True
_debug_checks = False
_live_nodes = 0


def set_debug_checks(on: bool):
    """When on, every op output is checked for NaN/Inf."""
    global _debug_checks
    _debug_checks = bool(on)


def active_node_count() -> int:
    """Graph nodes currently recorded and not yet released by backward."""
    return _live_nodes


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tape:
    """Lifecycle record of one backward pass (created by Tensor.backward)."""

    def __init__(self):
        self.consumed = False
        self.visited = 0


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_released")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._released = False

    # -- introspection -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Reverse-mode sweep from a scalar; consumes the recorded graph."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._released:
            raise RuntimeError("backward called twice on the same tape")
        global _live_nodes
        tape = Tape()
        # iterative topological order (graphs are deep: W=200 recurrences)
        order: list[Tensor] = []
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        seen: set[int] = set()
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
                tape.visited += 1
            if node._parents:
                # intermediate: drop scratch grad and release the graph edge
                node._parents = ()
                node._backward_fn = None
                node._released = True
                node.grad = None
                _live_nodes -= 1
        self._released = True
        tape.consumed = True
        return tape


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype if dtype is not None else None)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad)


def _as_const(x, like: np.ndarray) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(data, parents, backward_fn) -> Tensor:
    global _live_nodes
    if _debug_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an op")
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        _live_nodes += 1
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the (bias-style) broadcast source shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic -------------------------------------------------------------


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _as_const(b, a.data)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add shapes {a.shape} and {b.shape} incompatible") from None

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _as_const(b, a.data)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub shapes {a.shape} and {b.shape} incompatible") from None

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, -_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    """Elementwise product; one side may be a python scalar."""
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        s = float(b)
        data = a.data * s

        def backward_scalar(g):
            _accum(a, g * s)

        return _make(data, (a,), backward_scalar)
    b = _as_const(b, a.data)
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes {a.shape} and {b.shape} differ")
    data = a.data * b.data

    def backward_fn(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(data, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} incompatible")
    data = a.data @ b.data

    def backward_fn(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), backward_fn)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat shapes {[p.shape for p in parts]} incompatible on axis {axis}") from None
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    return _make(data, tuple(parts), backward_fn)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    if start < 0 or start + length > x.shape[axis]:
        raise ShapeError(f"narrow [{start}:{start + length}] out of bounds for {x.shape} axis {axis}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = x.data[idx].copy()

    def backward_fn(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[idx] += g

    return _make(data, (x,), backward_fn)


def bcw_to_rows(x: Tensor) -> Tensor:
    """(B, C, W) -> (B*W, C) with row index b*W + w."""
    if x.ndim != 3:
        raise ShapeError(f"bcw_to_rows expects 3-d input, got {x.shape}")
    b, c, w = x.shape
    data = np.ascontiguousarray(np.transpose(x.data, (0, 2, 1)).reshape(b * w, c))

    def backward_fn(g):
        _accum(x, np.transpose(g.reshape(b, w, c), (0, 2, 1)))

    return _make(data, (x,), backward_fn)


def rows_step(x: Tensor, n_steps: int, i: int) -> Tensor:
    """Step i of a (B*W, C) row tensor produced by bcw_to_rows: rows i::W."""
    if i < 0 or i >= n_steps:
        raise ShapeError(f"step {i} out of range for {n_steps} steps")
    data = x.data[i::n_steps].copy()

    def backward_fn(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[i::n_steps] += g

    return _make(data, (x,), backward_fn)


def stack_steps(steps) -> Tensor:
    """List of W tensors (B, C) -> (B, C, W)."""
    steps = list(steps)
    data = np.stack([s.data for s in steps], axis=2)

    def backward_fn(g):
        for i, s in enumerate(steps):
            _accum(s, g[:, :, i])

    return _make(data, tuple(steps), backward_fn)


def rows_to_bcw(x: Tensor, batch: int, n_steps: int) -> Tensor:
    """Inverse of bcw_to_rows: (B*W, C) -> (B, C, W)."""
    if x.ndim != 2 or x.shape[0] != batch * n_steps:
        raise ShapeError(f"rows_to_bcw: {x.shape} does not factor as {batch}x{n_steps} rows")
    c = x.shape[1]
    data = np.ascontiguousarray(np.transpose(x.data.reshape(batch, n_steps, c), (0, 2, 1)))

    def backward_fn(g):
        _accum(x, np.transpose(g, (0, 2, 1)).reshape(batch * n_steps, c))

    return _make(data, (x,), backward_fn)


def repeat_rows(x: Tensor, times: int) -> Tensor:
    """(B, C) -> (B*times, C), each row repeated `times` consecutively."""
    if x.ndim != 2:
        raise ShapeError(f"repeat_rows expects 2-d input, got {x.shape}")
    b, c = x.shape
    data = np.repeat(x.data, times, axis=0)

    def backward_fn(g):
        _accum(x, g.reshape(b, times, c).sum(axis=1))

    return _make(data, (x,), backward_fn)


def mean_time(x: Tensor) -> Tensor:
    """(B, C, W) -> (B, C) average over the time axis."""
    if x.ndim != 3:
        raise ShapeError(f"mean_time expects 3-d input, got {x.shape}")
    w = x.shape[2]
    data = x.data.mean(axis=2)

    def backward_fn(g):
        _accum(x, np.broadcast_to(g[:, :, None] / w, x.shape))

    return _make(data, (x,), backward_fn)


def tile_time(x: Tensor, n_steps: int) -> Tensor:
    """(B, C) -> (B, C, W) by repetition along a new time axis."""
    if x.ndim != 2:
        raise ShapeError(f"tile_time expects 2-d input, got {x.shape}")
    data = np.ascontiguousarray(np.broadcast_to(x.data[:, :, None], (*x.shape, n_steps)))

    def backward_fn(g):
        _accum(x, g.sum(axis=2))

    return _make(data, (x,), backward_fn)


# -- nonlinearities ----------------------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-x.data))

    def backward_fn(g):
        _accum(x, g * data * (1.0 - data))

    return _make(data, (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def backward_fn(g):
        _accum(x, g * (1.0 - data * data))

    return _make(data, (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)

    def backward_fn(g):
        _accum(x, g * (data > 0))

    return _make(data, (x,), backward_fn)


# -- convolution -------------------------------------------------------------


def causal_dilated_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                          dilation: int = 1) -> Tensor:
    """1-d convolution over time with left-only (causal) padding.

    x (B, C_in, W), weight (C_out, C_in, k), bias (C_out,) optional.
    Output (B, C_out, W); out[..., i] depends only on x[..., :i+1].
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d shapes {x.shape} and {weight.shape} incompatible")
    b, c_in, w_len = x.shape
    c_out, _, k = weight.shape
    pad = (k - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, 0)))
    data = np.zeros((b, c_out, w_len), dtype=x.data.dtype)
    for j in range(k):
        seg = xp[:, :, j * dilation: j * dilation + w_len]
        data += np.einsum("oc,bcw->bow", weight.data[:, :, j], seg, optimize=True)
    if bias is not None:
        data += bias.data[None, :, None]

    def backward_fn(g):
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for j in range(k):
                seg = xp[:, :, j * dilation: j * dilation + w_len]
                gw[:, :, j] = np.einsum("bow,bcw->oc", g, seg, optimize=True)
            _accum(weight, gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, :, j * dilation: j * dilation + w_len] += np.einsum(
                    "oc,bow->bcw", weight.data[:, :, j], g, optimize=True)
            _accum(x, gxp[:, :, pad:] if pad else gxp)
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(data, parents, backward_fn)


# -- losses -------------------------------------------------------------------


def mse_loss(pred: Tensor, target) -> Tensor:
    target = _as_const(target, pred.data)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target.data
    n = diff.size
    data = np.asarray(np.mean(diff * diff), dtype=pred.data.dtype)

    def backward_fn(g):
        scale = 2.0 * np.asarray(g).item() / n
        _accum(pred, scale * diff)
        _accum(target, -scale * diff)

    return _make(data, (pred, target), backward_fn)


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params, lr=3e-5, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.m = [np.zeros_like(p.data) for p in params]
    state.v = [np.zeros_like(p.data) for p in params]
    return state


def adam_step(params, state: AdamState):
    """One bias-corrected Adam update; clears gradients afterwards."""
    if len(params) != len(state.m):
        raise ValueError("optimizer state does not match parameter list")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad = None
