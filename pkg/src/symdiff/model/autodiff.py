"""A small reverse-mode autodiff engine over float64 numpy arrays.

Each op records its parents and a closure that pushes the output gradient
back to them.  ``Tensor.backward`` walks the graph in reverse topological
order.  Broadcasting follows numpy; gradients are summed back down to the
operand shapes.
"""
from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Skip graph construction inside the block."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _push(t, g):
    if t.requires_grad:
        t._accumulate(_unbroadcast(g, t.shape))


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _push(a, g)
        _push(b, g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _push(a, g)
        _push(b, -g)

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _push(a, g * b.data)
        _push(b, g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        _push(x, g * mask)

    return _node(np.where(mask, x.data, 0.0), (x,), backward)


def log_sigmoid(x):
    x = as_tensor(x)
    out = -np.logaddexp(0.0, -x.data)

    def backward(g):
        # d/dx log sigmoid(x) = sigmoid(-x)
        _push(x, g * np.exp(-np.logaddexp(0.0, x.data)))

    return _node(out, (x,), backward)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >= 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _push(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _push(b, np.swapaxes(a.data, -1, -2) @ g)

    return _node(a.data @ b.data, (a, b), backward)


# -- reductions -------------------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _push(x, np.broadcast_to(g, x.shape))

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None):
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis), 1.0 / count)


def _softmax_np(z, axis):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    x = as_tensor(x)
    y = _softmax_np(x.data, axis)

    def backward(g):
        _push(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _node(y, (x,), backward)


def logsumexp(x, axis=-1):
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(x.data - m).sum(axis=axis, keepdims=True)) + m
    w = np.exp(x.data - out)

    def backward(g):
        _push(x, np.expand_dims(g, axis) * w)

    return _node(np.squeeze(out, axis=axis), (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    return sub(x, reshape(logsumexp(x, axis), _keepdims_shape(x.shape, axis)))


def _keepdims_shape(shape, axis):
    shape = list(shape)
    shape[axis] = 1
    return tuple(shape)


# -- shape ------------------------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)

    def backward(g):
        _push(x, g.reshape(x.shape))

    return _node(x.data.reshape(shape), (x,), backward)


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)

    def backward(g):
        _push(x, np.transpose(g, inv))

    return _node(np.transpose(x.data, axes), (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, cuts, axis=axis)):
            _push(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def gather(x, index):
    """``x[index]`` for any numpy index; gradient scattered with ``np.add.at``."""
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        _push(x, full)

    return _node(x.data[index], (x,), backward)


def take_along_axis(x, indices, axis):
    x = as_tensor(x)
    indices = np.asarray(indices)
    axis = axis % x.ndim
    out = np.take_along_axis(x.data, indices, axis=axis)

    def backward(g):
        full = np.zeros_like(x.data)
        grids = np.indices(g.shape, sparse=True)
        idx = [grid if x.shape[d] != 1 else np.zeros_like(grid) for d, grid in enumerate(grids)]
        idx[axis] = indices
        np.add.at(full, tuple(idx), g)
        _push(x, full)

    return _node(out, (x,), backward)


def embedding(weight, ids):
    """Rows of ``weight`` selected by integer ``ids``."""
    return gather(weight, np.asarray(ids, dtype=np.int64))


# -- attention --------------------------------------------------------------

def masked_attention(q, k, v, mask=None):
    """Scaled dot-product attention over the last two axes.

    ``mask`` is additive (0 = keep, -inf = block) and broadcast against the
    ``(..., L_q, L_k)`` score matrix.
    """
    dk = q.shape[-1]
    scores = mul(matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))), 1.0 / np.sqrt(dk))
    if mask is not None:
        scores = add(scores, Tensor(mask))
    return matmul(softmax(scores, axis=-1), v)
