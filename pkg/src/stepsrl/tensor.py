"""Small dense tensor library with define-by-run reverse-mode autodiff.

Every differentiable primitive records one node on the active :class:`Tape`.
``backward`` replays the tape in exact reverse recording order, so the
recording order is already a valid topological order.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

_state = threading.local()

DEFAULT_DTYPE = np.float32
CHECK_FINITE = True


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def _dtype():
    return getattr(_state, "dtype", DEFAULT_DTYPE)


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for new tensors on this thread."""
    prev = _dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = prev


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Node:
    __slots__ = ("outputs", "inputs", "backward_fn", "tape")

    def __init__(self, outputs, inputs, backward_fn, tape):
        self.outputs = outputs
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.tape = tape


class Tape:
    """Ordered record of primitive operations.

    One tape is active per thread. Use ``with Tape():`` to scope a fresh one,
    otherwise a thread-local default tape is used.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._prev = None

    def __enter__(self):
        self._prev = getattr(_state, "tape", None)
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        self._prev = None

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        self.nodes.clear()


def current_tape() -> Tape:
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = _state.tape = Tape()
    return tape


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=_dtype() if dtype is None else dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._node = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _check_finite(arr: np.ndarray, opname: str):
    if CHECK_FINITE and not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value produced by {opname}")


def _make(opname: str, out_data, inputs: Sequence[Tensor], backward_fn: Callable):
    """Wrap ``out_data`` as a tensor and record it when any input needs grad."""
    _check_finite(out_data, opname)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out._node = None
    needs = _grad_enabled() and any(t.requires_grad for t in inputs)
    out.requires_grad = needs
    if needs:
        tape = current_tape()
        node = Node((out,), tuple(inputs), backward_fn, tape)
        out._node = node
        tape.nodes.append(node)
    return out


def _make_multi(opname: str, outs_data, inputs, backward_fn):
    for d in outs_data:
        _check_finite(d, opname)
    outs = tuple(Tensor(d, dtype=d.dtype) for d in outs_data)
    needs = _grad_enabled() and any(t.requires_grad for t in inputs)
    if needs:
        tape = current_tape()
        node = Node(outs, tuple(inputs), backward_fn, tape)
        for o in outs:
            o.requires_grad = True
            o._node = node
        tape.nodes.append(node)
    return outs


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, opname: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{opname}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(a, dtype=b.dtype)
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make("mul", a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., p, q) and ``b`` of shape (q, r)."""
    a, b = _pair(a, b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make("matmul", a.data @ b.data, (a, b), bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - y * y),)

    return _make("tanh", y, (x,), bw)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _make("sigmoid", y, (x,), bw)


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _make("exp", y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _make("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def softmax(x) -> Tensor:
    """Softmax over the last axis, shifted by the row max."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make("softmax", y, (x,), bw)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _make("log_softmax", y, (x,), bw)


def tsum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    y = np.asarray(x.data.sum(axis=axis), dtype=x.dtype)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", y, (x,), bw)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    y = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make("transpose", y, (x,), lambda g: (np.transpose(g, inv),))


def getitem(x, index) -> Tensor:
    """Basic or integer-array indexing; gradient scatters back with ``np.add.at``."""
    x = as_tensor(x)
    if isinstance(index, Tensor):
        index = index.data.astype(np.intp)
    y = x.data[index]
    basic = _is_basic_index(index)

    def bw(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _make("getitem", np.array(y, copy=True), (x,), bw)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ranks = {t.ndim for t in ts}
    if len(ranks) != 1:
        raise DimensionError(f"concat: rank mismatch {[t.shape for t in ts]}")
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make("concat", y, ts, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        y = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: incompatible shapes {[t.shape for t in ts]}") from None

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make("stack", y, ts, bw)


def unstack(x, axis: int = 0) -> tuple:
    """Split ``x`` into its slices along ``axis`` as one multi-output node."""
    x = as_tensor(x)
    moved = np.moveaxis(x.data, axis, 0)
    pieces = [np.ascontiguousarray(p) for p in moved]

    def bw(grads):
        full = np.zeros(moved.shape, dtype=x.dtype)
        for j, g in enumerate(grads):
            if g is not None:
                full[j] = g
        return (np.moveaxis(full, 0, axis),)

    return _make_multi("unstack", pieces, (x,), bw)


def lstm_cell(x_proj, h, c, w_h):
    """Fused LSTM step with gate order (input, forget, cell, output).

    ``x_proj`` is the precomputed input projection ``x @ W_x + b`` of shape
    (B, 4H); ``w_h`` is the (H, 4H) recurrent matrix. Returns ``(h', c')``.
    """
    x_proj, h, c, w_h = (as_tensor(t) for t in (x_proj, h, c, w_h))
    hidden = h.shape[-1]
    if x_proj.shape[-1] != 4 * hidden or w_h.shape != (hidden, 4 * hidden) or c.shape != h.shape:
        raise DimensionError(
            f"lstm_cell: x_proj {x_proj.shape}, h {h.shape}, c {c.shape}, w_h {w_h.shape}")
    pre = x_proj.data + h.data @ w_h.data
    act = _sigmoid(pre)
    i = act[..., :hidden]
    f = act[..., hidden:2 * hidden]
    o = act[..., 3 * hidden:]
    gg = np.tanh(pre[..., 2 * hidden:3 * hidden])
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc

    def bw(grads):
        gh, gc = grads
        if gh is None:
            gh = np.zeros_like(h_new)
        if gc is None:
            gc = np.zeros_like(c_new)
        do = gh * tc
        dc = gc + gh * o * (1.0 - tc * tc)
        di = dc * gg
        df = dc * c.data
        dg = dc * i
        dpre = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - gg * gg),
            do * o * (1.0 - o),
        ], axis=-1)
        dh = dpre @ w_h.data.T if h.requires_grad else None
        dwh = h.data.reshape(-1, hidden).T @ dpre.reshape(-1, 4 * hidden) if w_h.requires_grad else None
        return dpre, dh, dc * f, dwh

    return _make_multi("lstm_cell", (h_new, c_new), (x_proj, h, c, w_h), bw)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor, retain_graph: bool = False):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable ``t`` needing grad.

    Leaf gradients accumulate across calls; intermediate tensors get the
    gradient of this call only.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss is not attached to a tape")
    tape = loss._node.tape
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(tape.nodes):
        outs = node.outputs
        if len(outs) == 1:
            g = pending.pop(id(outs[0]), None)
            if g is None:
                continue
            outs[0].grad = g
            in_grads = node.backward_fn(g)
        else:
            gs = [pending.pop(id(o), None) for o in outs]
            if all(g is None for g in gs):
                continue
            for o, g in zip(outs, gs):
                o.grad = g
            in_grads = node.backward_fn(gs)
        for inp, gi in zip(node.inputs, in_grads):
            if gi is None or not inp.requires_grad:
                continue
            gi = np.asarray(gi, dtype=inp.dtype)
            if inp._node is None:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            else:
                key = id(inp)
                prev = pending.get(key)
                pending[key] = gi if prev is None else prev + gi
    if not retain_graph:
        tape.clear()
