"""Dense tensors with a tape-based reverse-mode gradient.

Every differentiable operation in the package computes its forward pass on
plain numpy arrays and registers a closure on the active :class:`GradTape`
that maps the output gradient to input gradients. Nothing is recorded when
no tape is active, so inference runs without graph bookkeeping.

Layout is batch x channel x height x width for 4-D tensors.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64

_local = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes violate an operator contract."""


class Tensor:
    """N-dimensional array with an optional gradient slot.

    ``data`` is always a contiguous numpy array with every extent >= 1.
    Python scalars become shape ``(1,)``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.array(data, dtype=dtype if dtype is not None else _infer_dtype(data), copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(n < 1 for n in arr.shape):
            raise ShapeError(f"tensor extents must be >= 1, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # internal constructor: no copy, no validation beyond contiguity
        t = cls.__new__(cls)
        t.data = np.ascontiguousarray(arr)
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return scale(self, -1.0)


def _infer_dtype(data):
    if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
        return data.dtype
    return DEFAULT_DTYPE


def _raise_item(shape):
    raise ShapeError(f"item() needs a single-element tensor, got shape {shape}")


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full((1,), x, dtype=dtype))


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))


# --------------------------------------------------------------------------
# tape


class _Entry:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class GradTape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations executed inside the block whose
    inputs require gradients are appended in execution order::

        with GradTape() as tape:
            loss = mse_loss(model(x), target)
        tape.backward(loss)
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "GradTape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("GradTape contexts exited out of order")
        stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward: Callable) -> None:
        self.entries.append(_Entry(tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def _stack() -> list:
    s = getattr(_local, "stack", None)
    if s is None:
        s = _local.stack = []
    return s


def active_tape() -> Optional[GradTape]:
    s = _stack()
    return s[-1] if s else None


def backward(loss: Tensor, tape: GradTape) -> None:
    """Propagate d(loss)/d(.) through ``tape`` in reverse execution order.

    Gradients are accumulated into ``.grad`` of every requires-grad tensor
    reached from ``loss``; existing ``.grad`` buffers are added to, not
    replaced.
    """
    if not tape.entries:
        raise RuntimeError("backward called on an empty tape")
    if any(n != 1 for n in loss.shape):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not any(e.output is loss for e in tape.entries):
        raise RuntimeError("loss was not produced by an operation on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    reached: dict[int, Tensor] = {id(loss): loss}
    for entry in reversed(tape.entries):
        g_out = grads.pop(id(entry.output), None)
        if g_out is None:
            continue
        in_grads = entry.backward(g_out)
        for inp, g in zip(entry.inputs, in_grads):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            reached[key] = inp
        _accumulate(entry.output, g_out)
    # leaves never appear as an entry output
    for key, g in grads.items():
        _accumulate(reached[key], g)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if g.shape != t.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {t.shape}")
    if t.grad is None:
        t.grad = np.array(g, dtype=t.dtype, copy=True)
    else:
        t.grad += g


def _result(out: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    y = Tensor._wrap(out, needs)
    if needs:
        tape.record(inputs, y, backward_fn)
    return y


# --------------------------------------------------------------------------
# elementwise


def _fits(small: tuple, big: tuple) -> bool:
    """True if ``small`` broadcasts onto ``big`` over the channel axis."""
    if small == (1,):
        return True
    return (
        len(small) == len(big)
        and len(big) >= 2
        and small[1] == 1
        and small[:1] == big[:1]
        and small[2:] == big[2:]
    )


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    """Equal shapes, or one operand has extent 1 on the channel axis (or is a
    scalar of shape (1,))."""
    if a.shape == b.shape or _fits(b.shape, a.shape) or _fits(a.shape, b.shape):
        return
    raise ShapeError(
        f"cannot combine shapes {a.shape} and {b.shape}: operands must match "
        "exactly or one must have extent 1 on the channel axis"
    )


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == (1,):
        return np.array([g.sum()], dtype=g.dtype)
    return g.sum(axis=1, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    out = a.data + b.data

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    out = a.data - b.data

    def bw(g):
        return _reduce_to(g, a.shape), -_reduce_to(g, b.shape)

    return _result(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    ad, bd = a.data, b.data
    out = ad * bd

    def bw(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _result(out, (a, b), bw)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def scale(x: Tensor, alpha: float) -> Tensor:
    return _result(x.data * alpha, (x,), lambda g: (g * alpha,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    pos = x.data >= 0
    out = np.where(pos, x.data, slope * x.data)

    def bw(g):
        return (np.where(pos, g, slope * g),)

    return _result(out, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), bw)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.array([x.data.sum()], dtype=x.dtype)

    def bw(g):
        return (np.full(x.shape, g[0], dtype=x.dtype),)

    return _result(out, (x,), bw)


def mean(x: Tensor) -> Tensor:
    n = x.size
    out = np.array([x.data.sum() / n], dtype=x.dtype)

    def bw(g):
        return (np.full(x.shape, g[0] / n, dtype=x.dtype),)

    return _result(out, (x,), bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements; gradient ``2 (pred - target) / numel``."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.array([np.dot(diff.ravel(), diff.ravel()) / n], dtype=pred.dtype)

    def bw(g):
        gd = (2.0 * g[0] / n) * diff
        return gd, -gd

    return _result(out, (pred, target), bw)


# --------------------------------------------------------------------------
# shape manipulation


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(xs))
        )

    return _result(out, tuple(xs), bw)


def stack(xs: Sequence[Tensor], axis: int = 2) -> Tensor:
    out = np.stack([x.data for x in xs], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _result(out, tuple(xs), bw)


def crop(x: Tensor, y0: int, y1: int, x0: int, x1: int) -> Tensor:
    """Spatial window ``[y0:y1, x0:x1]`` of a 4-D tensor."""
    if x.ndim != 4:
        raise ShapeError(f"crop expects a 4-D tensor, got shape {x.shape}")
    H, W = x.shape[2:]
    if not (0 <= y0 < y1 <= H and 0 <= x0 < x1 <= W):
        raise ShapeError(f"crop window y[{y0}:{y1}] x[{x0}:{x1}] is empty or outside {H}x{W}")
    out = x.data[:, :, y0:y1, x0:x1].copy()

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[:, :, y0:y1, x0:x1] = g
        return (gx,)

    return _result(out, (x,), bw)


def channel_slice(x: Tensor, c0: int, c1: int) -> Tensor:
    """Channels ``[c0:c1]`` along axis 1."""
    if not 0 <= c0 < c1 <= x.shape[1]:
        raise ShapeError(f"channel slice [{c0}:{c1}] outside {x.shape[1]} channels")
    out = x.data[:, c0:c1].copy()

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[:, c0:c1] = g
        return (gx,)

    return _result(out, (x,), bw)


# --------------------------------------------------------------------------
# resampling


def _pool_bins(n_in: int, n_out: int) -> list[tuple[int, int]]:
    return [((i * n_in) // n_out, -((-(i + 1) * n_in) // n_out)) for i in range(n_out)]


def adaptive_avg_pool(x: Tensor, out_hw=(3, 3)) -> Tensor:
    """Average over the standard floor/ceil bins so output is B x C x oh x ow."""
    if x.ndim != 4:
        raise ShapeError(f"adaptive_avg_pool expects 4-D input, got shape {x.shape}")
    oh, ow = out_hw
    H, W = x.shape[2:]
    # pooling is linear: express it as row and column averaging matrices
    Py = np.zeros((oh, H), dtype=x.dtype)
    for i, (a, b) in enumerate(_pool_bins(H, oh)):
        Py[i, a:b] = 1.0 / (b - a)
    Px = np.zeros((ow, W), dtype=x.dtype)
    for j, (a, b) in enumerate(_pool_bins(W, ow)):
        Px[j, a:b] = 1.0 / (b - a)
    out = Py @ x.data @ Px.T

    def bw(g):
        return (Py.T @ g @ Px,)

    return _result(out, (x,), bw)


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    scale_ = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale_ - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    M = np.zeros((n_out, n_in), dtype=dtype)
    rows = np.arange(n_out)
    np.add.at(M, (rows, lo), 1.0 - frac)
    np.add.at(M, (rows, hi), frac)
    return M


def bilinear_upsample(x: Tensor, out_hw) -> Tensor:
    """Bilinear resize with half-pixel sample centers, clamped at the edges.

    Only enlargement is supported.
    """
    if x.ndim != 4:
        raise ShapeError(f"bilinear_upsample expects 4-D input, got shape {x.shape}")
    H, W = x.shape[2:]
    oh, ow = out_hw
    if oh < H or ow < W:
        raise ShapeError(f"bilinear_upsample cannot shrink {H}x{W} to {oh}x{ow}")
    Ry = _interp_matrix(H, oh, x.dtype)
    Rx = _interp_matrix(W, ow, x.dtype)
    out = Ry @ x.data @ Rx.T

    def bw(g):
        return (Ry.T @ g @ Rx,)

    return _result(out, (x,), bw)


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Cosine similarity along the channel axis: B x C x H x W -> B x 1 x H x W.

    The denominator is ``max(|a| |b|, eps)`` so all-zero columns give 0.
    """
    if a.shape != b.shape or a.ndim != 4:
        raise ShapeError(f"cosine_similarity needs equal 4-D shapes, got {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    dot = (ad * bd).sum(axis=1, keepdims=True)
    na = np.sqrt((ad * ad).sum(axis=1, keepdims=True))
    nb = np.sqrt((bd * bd).sum(axis=1, keepdims=True))
    prod = na * nb
    guarded = prod <= eps
    denom = np.where(guarded, eps, prod)
    # rounding can push |cos| a few ulps past 1
    out = np.clip(dot / denom, -1.0, 1.0)

    def bw(g):
        gd = g / denom
        with np.errstate(divide="ignore", invalid="ignore"):
            ca = np.where(guarded, 0.0, out / np.where(na > 0, na * na, 1.0))
            cb = np.where(guarded, 0.0, out / np.where(nb > 0, nb * nb, 1.0))
        ga = gd * bd - g * ca * ad
        gb = gd * ad - g * cb * bd
        return ga, gb

    return _result(out, (a, b), bw)
