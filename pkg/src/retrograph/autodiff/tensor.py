"""Dense tensors with reverse-mode differentiation.

Every op returns a new :class:`Tensor` holding its parents and a closure
that pushes the output gradient back to them.  ``backward`` walks the
graph in reverse topological order and then drops the closures, so a
tape is used exactly once.
"""

from __future__ import annotations

import warnings

import numpy as np

from .. import kernels


class ShapeMismatch(ValueError):
    pass


class NonFinite(FloatingPointError):
    pass


class DisconnectedParameter(UserWarning):
    pass


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, parents=(), backward_fn=None):
        self.data = data
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(x, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _check(out: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"{op} produced non-finite values (shape {out.shape})")
    return out


def _node(data, parents, fn, op):
    _check(data, op)
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, parents=parents, backward_fn=fn)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


# ---------------------------------------------------------------------------
# ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def fn(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _node(out, (a, b), fn, "matmul")


def _bias_shape_ok(a, b):
    return a.shape == b.shape or (b.data.ndim == 2 and b.shape[0] == 1 and a.data.ndim == 2 and b.shape[1] == a.shape[1])


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a (1, d) row added to every row."""
    if not _bias_shape_ok(a, b):
        if _bias_shape_ok(b, a):
            a, b = b, a
        else:
            raise ShapeMismatch(f"add {a.shape} + {b.shape}")
    out = a.data + b.data
    row = a.shape != b.shape

    def fn(g):
        _acc(a, g)
        _acc(b, g.sum(axis=0, keepdims=True) if row else g)

    return _node(out, (a, b), fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub {a.shape} - {b.shape}")
    out = a.data - b.data

    def fn(g):
        _acc(a, g)
        _acc(b, -g)

    return _node(out, (a, b), fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} * {b.shape}")
    out = a.data * b.data

    def fn(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _node(out, (a, b), fn, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    def fn(g):
        _acc(a, g * c)

    return _node(a.data * c, (a,), fn, "scale")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = np.where(mask, a.data, 0).astype(a.dtype, copy=False)

    def fn(g):
        _acc(a, g * mask)

    return _node(out, (a,), fn, "relu")


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)

    def fn(g):
        _acc(a, g * out * (1 - out))

    return _node(out, (a,), fn, "sigmoid")


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_sigmoid(a: Tensor) -> Tensor:
    """log σ(x), computed without overflow."""
    x = a.data
    out = np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))

    def fn(g):
        _acc(a, g * (1 - _stable_sigmoid(x)))

    return _node(out, (a,), fn, "log_sigmoid")


def _masked(x, mask):
    if mask is None:
        return x
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs {x.shape}")
    return np.where(mask, x, -np.inf)


def log_softmax(a: Tensor, mask=None) -> Tensor:
    """Row-wise log-softmax over a 2-D tensor; masked slots get -inf value
    and zero gradient.  Rows must keep at least one unmasked slot."""
    x = _masked(a.data, mask)
    top = x.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NonFinite("log_softmax row with every slot masked")
    z = x - top
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def fn(g):
        gg = np.where(np.isfinite(out), g, 0)
        _acc(a, gg - p * gg.sum(axis=1, keepdims=True))

    t = Tensor(out, parents=(a,), backward_fn=fn) if a.requires_grad else Tensor(out)
    return t


def segment_log_softmax(a: Tensor, segment, n_segments: int, mask=None) -> Tensor:
    """Log-softmax of a column vector within segments (one per graph).

    Masked entries get -inf and no gradient.  Every segment needs at
    least one unmasked entry.
    """
    if a.data.ndim != 2 or a.shape[1] != 1:
        raise ShapeMismatch(f"segment_log_softmax expects a column, got {a.shape}")
    seg = np.asarray(segment, dtype=np.int64)
    x = a.data[:, 0]
    if mask is not None:
        x = np.where(np.asarray(mask, dtype=bool).reshape(-1), x, -np.inf)
    top = np.full(n_segments, -np.inf, dtype=a.dtype)
    np.maximum.at(top, seg, x)
    if not np.all(np.isfinite(top)):
        raise NonFinite("segment with every candidate masked")
    e = np.exp(x - top[seg])
    s = np.zeros(n_segments, dtype=a.dtype)
    np.add.at(s, seg, e)
    out = (x - top[seg] - np.log(s)[seg]).reshape(-1, 1)
    p = np.exp(out[:, 0])

    def fn(g):
        gg = np.where(np.isfinite(out[:, 0]), g[:, 0], 0)
        tot = np.zeros(n_segments, dtype=a.dtype)
        np.add.at(tot, seg, gg)
        _acc(a, (gg - p * tot[seg]).reshape(-1, 1))

    return Tensor(out, parents=(a,), backward_fn=fn) if a.requires_grad else Tensor(out)


def softmax(a: Tensor, mask=None) -> Tensor:
    x = _masked(a.data, mask)
    top = x.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NonFinite("softmax row with every slot masked")
    e = np.exp(x - top)
    out = e / e.sum(axis=1, keepdims=True)

    def fn(g):
        _acc(a, out * (g - (g * out).sum(axis=1, keepdims=True)))

    return _node(out, (a,), fn, "softmax")


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat of nothing")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def fn(g):
        for p, piece in zip(parts, np.split(g, sizes, axis=axis)):
            _acc(p, piece)

    return _node(out, tuple(parts), fn, "concat")


def sum_rows(a: Tensor) -> Tensor:
    """Column sums as a (1, d) row."""
    out = a.data.sum(axis=0, keepdims=True)

    def fn(g):
        _acc(a, np.broadcast_to(g, a.shape).copy())

    return _node(out, (a,), fn, "sum_rows")


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a (1, 1) tensor."""
    out = np.asarray(a.data.sum(), dtype=a.dtype).reshape(1, 1)

    def fn(g):
        _acc(a, np.full(a.shape, g.reshape(-1)[0], dtype=a.dtype))

    return _node(out, (a,), fn, "total")


def abs_diff(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"abs_diff {a.shape} vs {b.shape}")
    d = a.data - b.data
    s = np.sign(d)

    def fn(g):
        _acc(a, g * s)
        _acc(b, -g * s)

    return _node(np.abs(d), (a, b), fn, "abs_diff")


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    out = a.data[index]
    n = a.shape[0]

    def fn(g):
        _acc(a, kernels.scatter_add_rows(np.ascontiguousarray(g), index, n))

    return _node(out, (a,), fn, "gather_rows")


def scatter_add_rows(a: Tensor, index, n_out: int) -> Tensor:
    """out[index[r]] += a[r]; the segment sum behind every neighbour sum."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"scatter index length {index.shape[0]} vs {a.shape[0]} rows")
    out = kernels.scatter_add_rows(np.ascontiguousarray(a.data), index, n_out)

    def fn(g):
        _acc(a, g[index])

    return _node(out, (a,), fn, "scatter_add_rows")


def take(a: Tensor, rows, cols) -> Tensor:
    """Pick entries a[rows[k], cols[k]] into a (1, n) row."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = a.data[rows, cols].reshape(1, -1)

    def fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g.reshape(-1))
        _acc(a, full)

    return _node(out, (a,), fn, "take")


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def fn(g):
        _acc(a, g.reshape(a.shape))

    return _node(out, (a,), fn, "reshape")


def transpose(a: Tensor) -> Tensor:
    def fn(g):
        _acc(a, g.T)

    return _node(a.data.T, (a,), fn, "transpose")


def cross_entropy(logits: Tensor, labels, mask=None) -> Tensor:
    """Summed negative log-likelihood of integer ``labels`` under row-wise
    softmax of ``logits``; returns a (1, 1) tensor."""
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(logits, mask)
    picked = take(lp, np.arange(len(labels)), labels)
    return scale(total(picked), -1.0)


def binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Summed BCE on raw logits (numerically stable)."""
    t = np.asarray(targets, dtype=logits.dtype).reshape(logits.shape)
    x = logits.data
    out = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    val = np.asarray(out.sum(), dtype=logits.dtype).reshape(1, 1)

    def fn(g):
        _acc(logits, g.reshape(-1)[0] * (_stable_sigmoid(x) - t))

    return _node(val, (logits,), fn, "binary_cross_entropy")


# ---------------------------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params=None) -> None:
    """Reverse sweep from a (1, 1) loss.  Parameter gradients accumulate in
    ``.grad``; parameters the loss does not reach get zeros and a
    :class:`DisconnectedParameter` warning.  The tape is released."""
    if loss.data.size != 1:
        raise ShapeMismatch(f"loss must be a scalar, got {loss.shape}")
    order = _topo(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)
    for node in order:
        if node.backward_fn is not None:
            node.grad = None
        node.parents = ()
        node.backward_fn = None
    if params is not None:
        missing = []
        for name, p in params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
                missing.append(name)
        if missing:
            warnings.warn(f"parameters not reached by the loss: {missing[:5]}{'...' if len(missing) > 5 else ''}",
                          DisconnectedParameter, stacklevel=2)
