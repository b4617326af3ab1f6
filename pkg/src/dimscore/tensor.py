"""Dense float64 tensors with reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array and doubles as a node in the computation
graph: ops record their parents plus a local backward rule, and
`backward()` walks the graph in reverse topological order accumulating
`grad` arrays. Everything is float64 and row-major; accumulation order
is fixed by construction order, so gradients are bit-reproducible.

Hot inner loops (softmax, layer norm, GELU, logsumexp, scatter-add)
dispatch through `dimscore.kernels`, which selects the numba or numpy
lane at import time.
"""

import contextlib

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError, UsageError

_grad_enabled = True


def _c(arr):
    """C-contiguous float64 view or copy; keeps 0-d arrays 0-d."""
    arr = np.asarray(arr, dtype=np.float64)
    return arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A numpy-backed array node; treat `data` as immutable once built."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, data, requires_grad=False):
        arr = _c(data)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backprop = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(data, parents, backprop):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backprop = backprop
    return out


def _sum_to_shape(g, shape):
    """Collapse a broadcast gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return _c(g.reshape(shape))


# ---------------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    out = _node(data, (a, b), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += _sum_to_shape(g, a.shape)
        if b.requires_grad:
            b.grad += _sum_to_shape(g, b.shape)

    out._backprop = backprop if out._parents else None
    return out


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None
    out = _node(data, (a, b), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += _sum_to_shape(g, a.shape)
        if b.requires_grad:
            b.grad += _sum_to_shape(-g, b.shape)

    out._backprop = backprop if out._parents else None
    return out


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    out = _node(data, (a, b), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += _sum_to_shape(g * b.data, a.shape)
        if b.requires_grad:
            b.grad += _sum_to_shape(g * a.data, b.shape)

    out._backprop = backprop if out._parents else None
    return out


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not broadcast") from None
    out = _node(data, (a, b), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += _sum_to_shape(g / b.data, a.shape)
        if b.requires_grad:
            b.grad += _sum_to_shape(-g * a.data / (b.data * b.data), b.shape)

    out._backprop = backprop if out._parents else None
    return out


def scale(a, c):
    """Multiply by a Python scalar."""
    a = _as_tensor(a)
    c = float(c)
    out = _node(a.data * c, (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += g * c

    out._backprop = backprop if out._parents else None
    return out


def relu(a):
    a = _as_tensor(a)
    out = _node(np.maximum(a.data, 0.0), (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += g * (a.data > 0.0)

    out._backprop = backprop if out._parents else None
    return out


def gelu(a):
    a = _as_tensor(a)
    flat = a.data.ravel()
    out = _node(kernels.gelu_fwd(flat).reshape(a.shape), (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += kernels.gelu_bwd(flat, _c(g.ravel())).reshape(a.shape)

    out._backprop = backprop if out._parents else None
    return out


def log(a):
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: non-positive input")
    out = _node(np.log(a.data), (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += g / a.data

    out._backprop = backprop if out._parents else None
    return out


def sqrt(a):
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt: negative input")
    data = np.sqrt(a.data)
    out = _node(data, (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += g * (0.5 / data)

    out._backprop = backprop if out._parents else None
    return out


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a, shape):
    a = _as_tensor(a)
    data = _c(a.data.reshape(shape))
    out = _node(data, (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += g.reshape(a.shape)

    out._backprop = backprop if out._parents else None
    return out


def swapaxes(a, ax1, ax2):
    a = _as_tensor(a)
    out = _node(_c(a.data.swapaxes(ax1, ax2)), (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad += _c(g.swapaxes(ax1, ax2))

    out._backprop = backprop if out._parents else None
    return out


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise UsageError("concat: empty tensor list")
    nd = tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != nd:
            raise ShapeError(
                f"concat: rank mismatch {tensors[0].shape} vs {t.shape}"
            )
        for ax in range(nd):
            if ax != (axis % nd) and t.shape[ax] != tensors[0].shape[ax]:
                raise ShapeError(
                    f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}"
                )
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _node(data, tuple(tensors), None)
    sizes = [t.shape[axis % nd] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backprop(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                sl = [slice(None)] * nd
                sl[axis % nd] = slice(offsets[i], offsets[i + 1])
                t.grad += g[tuple(sl)]

    out._backprop = backprop if out._parents else None
    return out


def stack_rows(tensors):
    """Stack 1-D tensors of equal length into a 2-D tensor."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise UsageError("stack_rows: empty tensor list")
    k = tensors[0].size
    for t in tensors:
        if t.ndim != 1 or t.size != k:
            raise ShapeError(f"stack_rows: expected 1-D length {k}, got {t.shape}")
    data = np.stack([t.data for t in tensors])
    out = _node(data, tuple(tensors), None)

    def backprop(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.grad += g[i]

    out._backprop = backprop if out._parents else None
    return out


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product. 2-D operands follow the textbook contract; leading
    batch dimensions broadcast; 1-D operands are promoted and squeezed
    the way np.matmul does."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    a_ = a.data[None, :] if a.ndim == 1 else a.data
    b_ = b.data[:, None] if b.ndim == 1 else b.data
    if a_.shape[-1] != b_.shape[-2]:
        raise ShapeError(
            f"matmul: inner extents differ, shapes {a.shape} and {b.shape}"
        )
    try:
        data = np.matmul(a_, b_)
    except ValueError:
        raise ShapeError(
            f"matmul: batch dims do not broadcast, shapes {a.shape} and {b.shape}"
        ) from None
    if b.ndim == 1:
        data = data[..., 0]
    if a.ndim == 1:
        data = data[..., 0, :] if b.ndim > 1 else data[..., 0]
    out = _node(_c(data), (a, b), None)

    def backprop(g):
        g_ = g
        if a.ndim == 1:
            g_ = g_[..., None, :] if b.ndim > 1 else g_[..., None]
        if b.ndim == 1:
            g_ = g_[..., None]
        if a.requires_grad:
            ga = np.matmul(g_, b_.swapaxes(-1, -2))
            a.grad += _sum_to_shape(ga, a_.shape).reshape(a.shape)
        if b.requires_grad:
            gb = np.matmul(a_.swapaxes(-1, -2), g_)
            b.grad += _sum_to_shape(gb, b_.shape).reshape(b.shape)

    out._backprop = backprop if out._parents else None
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    out = _node(data, (a,), None)

    def backprop(g):
        if a.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.shape)

    out._backprop = backprop if out._parents else None
    return out


def mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis]
    out = _node(data, (a,), None)

    def backprop(g):
        if a.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.shape) / count

    out._backprop = backprop if out._parents else None
    return out


# ---------------------------------------------------------------------------
# fused row ops (kernel-backed)
# ---------------------------------------------------------------------------

def _rows(a):
    """View of `a` as (n_rows, last_extent), C-contiguous."""
    k = a.shape[-1]
    return np.ascontiguousarray(a.reshape(-1, k))


def softmax(a):
    """Stable softmax along the last axis; outputs sum to one per row."""
    a = _as_tensor(a)
    if a.size == 0 or a.ndim == 0:
        raise DomainError("softmax: empty input")
    x = _rows(a.data)
    y = kernels.softmax_rows(x)
    out = _node(y.reshape(a.shape), (a,), None)

    def backprop(g):
        if a.requires_grad:
            gy = _rows(g)
            a.grad += kernels.softmax_rows_grad(y, gy).reshape(a.shape)

    out._backprop = backprop if out._parents else None
    return out


def logsumexp(a):
    """log(sum(exp)) along the last axis."""
    a = _as_tensor(a)
    if a.size == 0 or a.ndim == 0:
        raise DomainError("logsumexp: empty input")
    x = _rows(a.data)
    lse = kernels.logsumexp_rows(x)
    out = _node(lse.reshape(a.shape[:-1]), (a,), None)

    def backprop(g):
        if a.requires_grad:
            gy = _c(g.reshape(-1))
            a.grad += kernels.logsumexp_rows_grad(x, lse, gy).reshape(a.shape)

    out._backprop = backprop if out._parents else None
    return out


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    a, gain, bias = _as_tensor(a), _as_tensor(gain), _as_tensor(bias)
    k = a.shape[-1]
    if gain.shape != (k,) or bias.shape != (k,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} must be ({k},)"
        )
    x = _rows(a.data)
    y, mu, rstd = kernels.layer_norm_fwd(x, gain.data, bias.data, eps)
    out = _node(y.reshape(a.shape), (a, gain, bias), None)

    def backprop(g):
        gy = _rows(g)
        gx, ggain, gbias = kernels.layer_norm_bwd(x, gy, mu, rstd, gain.data)
        if a.requires_grad:
            a.grad += gx.reshape(a.shape)
        if gain.requires_grad:
            gain.grad += ggain
        if bias.requires_grad:
            bias.grad += gbias

    out._backprop = backprop if out._parents else None
    return out


# ---------------------------------------------------------------------------
# indexing
# ---------------------------------------------------------------------------

def gather_rows(a, idx):
    """Select rows of a 2-D tensor; repeated indices share the gradient."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"gather_rows: expected 2-D tensor, got {a.shape}")
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        bad = int(np.argmax((idx < 0) | (idx >= a.shape[0])))
        raise DomainError(f"gather_rows: index {idx[bad]} at position {bad} out of range")
    out = _node(a.data[idx], (a,), None)

    def backprop(g):
        if a.requires_grad:
            kernels.add_rows_at(a.grad, idx, _rows(g))

    out._backprop = backprop if out._parents else None
    return out


def select_positions(a, cols):
    """out[i] = a[i, cols[i]] for a 2-D tensor."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"select_positions: expected 2-D tensor, got {a.shape}")
    cols = np.asarray(cols, dtype=np.int64).ravel()
    n = a.shape[0]
    if cols.size != n:
        raise ShapeError(f"select_positions: {cols.size} indices for {n} rows")
    if cols.size and (cols.min() < 0 or cols.max() >= a.shape[1]):
        bad = int(np.argmax((cols < 0) | (cols >= a.shape[1])))
        raise DomainError(f"select_positions: column {cols[bad]} at row {bad} out of range")
    rows = np.arange(n)
    out = _node(a.data[rows, cols].copy(), (a,), None)

    def backprop(g):
        if a.requires_grad:
            np.add.at(a.grad, (rows, cols), g)

    out._backprop = backprop if out._parents else None
    return out


def take_axis1(a, pos):
    """a[:, pos, ...] for a tensor with ndim >= 2."""
    a = _as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"take_axis1: expected >=2-D tensor, got {a.shape}")
    if not 0 <= pos < a.shape[1]:
        raise DomainError(f"take_axis1: position {pos} out of range for {a.shape}")
    out = _node(_c(a.data[:, pos]), (a,), None)

    def backprop(g):
        if a.requires_grad:
            a.grad[:, pos] += g

    out._backprop = backprop if out._parents else None
    return out


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------

def cosine_similarity(u, v):
    """Cosine of the angle between two nonzero 1-D tensors."""
    u, v = _as_tensor(u), _as_tensor(v)
    if u.ndim != 1 or v.ndim != 1 or u.size != v.size:
        raise ShapeError(f"cosine_similarity: shapes {u.shape} and {v.shape}")
    if not np.any(u.data) or not np.any(v.data):
        raise DomainError("cosine_similarity: zero-norm vector")
    dot = tsum(mul(u, v))
    nu = sqrt(tsum(mul(u, u)))
    nv = sqrt(tsum(mul(v, v)))
    return div(dot, mul(nu, nv))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _topo_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root):
    """Propagate d(root)/d(node) into `grad` for every reachable node.

    The root must be a scalar. Grads of all reachable nodes are reset
    first, so calling twice on the same graph gives identical results.
    """
    if not isinstance(root, Tensor):
        raise UsageError("backward: root must be a Tensor")
    if root.size != 1:
        raise UsageError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topo_order(root)
    for node in order:
        node.grad = np.zeros_like(node.data)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backprop is not None:
            node._backprop(node.grad)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def _central_difference(evaluate, arr, idx, step):
    orig = arr[idx]
    arr[idx] = orig + step
    f_plus = evaluate()
    arr[idx] = orig - step
    f_minus = evaluate()
    arr[idx] = orig
    return (f_plus - f_minus) / (2.0 * step)


def grad_check_leaves(build, leaves, step=1e-5, max_coords=None, seed=0):
    """Compare analytic gradients of `build()` against central differences.

    build: zero-argument callable returning a scalar Tensor; it must read
    the given leaf tensors so that perturbing them changes the value.
    max_coords caps the checked coordinates per leaf (seeded sample);
    None checks every coordinate. Returns the worst relative error
    |analytic - central| / max(1, |central|); NaN anywhere reports inf.
    """
    out = build()
    backward(out)
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
                for leaf in leaves]

    def evaluate():
        with no_grad():
            return float(build().data)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for leaf, ana in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        ana_flat = ana.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for i in coords:
            central = _central_difference(evaluate, flat, i, step)
            if np.isnan(central) or np.isnan(ana_flat[i]):
                return float("inf")
            err = abs(ana_flat[i] - central) / max(1.0, abs(central))
            worst = max(worst, err)
    return worst


def grad_check(f, point, step=1e-5):
    """Worst relative error of d f / d point over every coordinate."""
    p = Tensor(point.data.copy() if isinstance(point, Tensor) else point,
               requires_grad=True)
    return grad_check_leaves(lambda: f(p), [p], step=step)
