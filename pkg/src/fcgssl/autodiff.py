"""A small reverse-mode autodiff engine over float64 numpy arrays, plus Adam
and a binary parameter checkpoint format.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. :func:`backward`
replays these records in reverse topological order. Only leaf tensors with
``requires_grad`` (normally :class:`Parameter`) keep a ``.grad``.
"""
from __future__ import annotations

import contextlib
import json
import struct
import threading
from collections import OrderedDict

import numpy as np

from .errors import CheckpointError, NumericalError, ShapeError

_state = threading.local()


def _recording():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = _recording()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.op = op
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, o): return matmul(self, o)
    def __pow__(self, p): return power(self, p)
    def __getitem__(self, key): return index(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    def __init__(self, data, name=""):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    if not np.all(np.isfinite(data)):
        kind = "NaN" if np.isnan(data).any() else "inf"
        raise NumericalError(f"{kind} produced in forward pass of op '{op}'")
    if _recording() and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward, op)
    return Tensor(data, op=op)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


def power(x, p):
    """``x ** p`` for a constant exponent."""
    p = float(p)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = x.data ** p
    return _make(out, (x,), lambda g: (g * p * x.data ** (p - 1),), "power")


def exp(x):
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _make(out, (x,), lambda g: (g / x.data,), "log")


def sqrt(x):
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid(x):
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x):
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def leaky_relu(x, slope=0.2):
    scale = np.where(x.data > 0, 1.0, slope)
    return _make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


# -- linear algebra and shape ---------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _make(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(x):
    return _make(x.data.T, (x,), lambda g: (g.T,), "transpose")


def reshape(x, shape):
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def index(x, key):
    """Basic or fancy indexing; repeated indices accumulate in backward."""
    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, key, g)
        return (out,)
    return _make(x.data[key], (x,), back, "index")


def gather_rows(x, idx):
    return index(x, np.asarray(idx, dtype=np.int64))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def sum_(x, axis=None, keepdims=False):
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), back, "sum")


def mean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / count)


def segment_sum(x, segments, num_segments):
    """Sum rows of ``x`` that share a segment id."""
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != x.shape[0]:
        raise ShapeError(f"segment_sum: {len(segments)} ids for {x.shape[0]} rows")
    out = np.zeros((num_segments,) + x.shape[1:])
    np.add.at(out, segments, x.data)
    return _make(out, (x,), lambda g: (g[segments],), "segment_sum")


# -- normalizations ------------------------------------------------------------

def softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _make(out, (x,),
                 lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),), "softmax")


def logsumexp(x, axis=-1):
    m = x.data.max(axis=axis, keepdims=True)
    s = np.exp(x.data - m)
    tot = s.sum(axis=axis, keepdims=True)
    out = (np.log(tot) + m).squeeze(axis)
    soft = s / tot
    return _make(out, (x,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def segment_softmax(x, segments, num_segments):
    """Softmax of each column of ``x`` within groups of rows."""
    segments = np.asarray(segments, dtype=np.int64)
    cols = x.shape[1:]
    mx = np.full((num_segments,) + cols, -np.inf)
    np.maximum.at(mx, segments, x.data)
    e = np.exp(x.data - mx[segments])
    den = np.zeros((num_segments,) + cols)
    np.add.at(den, segments, e)
    out = e / den[segments]

    def back(g):
        dot = np.zeros((num_segments,) + cols)
        np.add.at(dot, segments, g * out)
        return (out * (g - dot[segments]),)
    return _make(out, (x,), back, "segment_softmax")


def l2_norm(x, axis=-1):
    """Euclidean norm; the gradient at the zero vector is taken as 0."""
    n = np.sqrt((x.data ** 2).sum(axis=axis))
    safe = np.where(n > 0, n, 1.0)

    def back(g):
        return (np.expand_dims(g / safe * (n > 0), axis) * x.data,)
    return _make(n, (x,), back, "l2_norm")


def normalize_rows(x):
    """Rows scaled to unit norm; zero rows stay zero (with zero gradient)."""
    n = np.sqrt((x.data ** 2).sum(axis=-1, keepdims=True))
    nz = n > 0
    safe = np.where(nz, n, 1.0)
    out = x.data / safe

    def back(g):
        proj = (g * out).sum(axis=-1, keepdims=True)
        return ((g - out * proj) / safe * nz,)
    return _make(out, (x,), back, "normalize_rows")


def cosine_similarity(a, b):
    """Row-wise cosine similarity; 0 whenever either row is the zero vector."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape} differ")
    return sum_(normalize_rows(a) * normalize_rows(b), axis=-1)


# -- backward -------------------------------------------------------------------

def _topological(root):
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, accumulate=False):
    """Populate ``.grad`` on every reachable leaf that requires grad.

    By default a second backward through the same graph, or into a leaf that
    still holds a gradient, raises; call :func:`zero_grad` between steps or
    pass ``accumulate=True`` to add into existing gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericalError("loss is not finite")
    if not loss.requires_grad:
        return []
    if loss._consumed and not accumulate:
        raise RuntimeError("backward already ran on this graph")
    order = _topological(loss)
    leaves = [n for n in order if n._backward is None]
    if not accumulate:
        stale = [n for n in leaves if n.grad is not None]
        if stale:
            raise RuntimeError(
                f"{len(stale)} leaf gradients already populated; call zero_grad() first")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        with np.errstate(all="ignore"):
            parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.requires_grad or pg is None:
                continue
            if not np.all(np.isfinite(pg)):
                raise NumericalError(f"non-finite gradient in backward of op '{node.op}'")
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        node._consumed = True
    return leaves


def zero_grad(params):
    for p in params:
        p.grad = None


# -- optimizer ------------------------------------------------------------------

class Adam:
    """Bias-corrected Adam. Parameters whose ``.grad`` is ``None`` are skipped."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        zero_grad(self.params)

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- checkpoints ------------------------------------------------------------------

_CKPT_MAGIC = b"FCGCKPT\x00"
_CKPT_VERSION = 1


def save_parameters(path, params, metadata=None):
    """Binary checkpoint: header, JSON metadata, then for each parameter its
    name, shape and row-major little-endian float64 values."""
    if isinstance(params, dict):
        items = list(params.items())
    else:
        items = [(p.name, p) for p in params]
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sII", _CKPT_MAGIC, _CKPT_VERSION, len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(items)))
        for name, p in items:
            arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype="<f8", order="C")
            raw = name.encode()
            fh.write(struct.pack("<HB", len(raw), arr.ndim))
            fh.write(raw)
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_parameters(path):
    """Inverse of :func:`save_parameters`: ``(OrderedDict name -> array, metadata)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    try:
        magic, version, meta_len = struct.unpack_from("<8sII", raw, 0)
        if magic != _CKPT_MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        if version != _CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 16
        meta = json.loads(raw[pos:pos + meta_len])
        pos += meta_len
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        out = OrderedDict()
        for _ in range(count):
            nlen, ndim = struct.unpack_from("<HB", raw, pos)
            pos += 3
            name = raw[pos:pos + nlen].decode()
            pos += nlen
            shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
            pos += 8 * ndim
            size = int(np.prod(shape))
            out[name] = np.frombuffer(raw, "<f8", size, pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    return out, meta
