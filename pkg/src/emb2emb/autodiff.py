"""Dense tensors with reverse-mode automatic differentiation.

Every tensor wraps a numpy array.  Operations on tensors that require
gradients record a closure which, during :meth:`Tensor.backward`, pushes the
upstream gradient into the inputs.  Tensors built from plain data are
constants: they never carry a gradient and never enter the graph.

Set ``EMB2EMB_FLOAT32=1`` in the environment to build everything in 32-bit.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32 if os.environ.get("EMB2EMB_FLOAT32") == "1" else np.float64

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
LOG_EPS = 1e-12


class DimensionError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _op="leaf"):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self.op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar root, got shape {self.shape}")
        order = _topological_order(self)
        for node in order:
            if node._backward is not None:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad = t.grad + g


def _make(data, parents, op, backward):
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), _op=op)
    if needs:
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), "sub", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", backward)


def elementwise(a, b, kind):
    ops = {"add": add, "sub": sub, "mul": mul}
    if kind not in ops:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return ops[kind](a, b)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), "matmul", backward)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` for a batch of row vectors."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# -- activations -------------------------------------------------------------

def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), "tanh", lambda g: _accumulate(x, g * (1.0 - y * y)))


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _make(y, (x,), "sigmoid", lambda g: _accumulate(x, g * y * (1.0 - y)))


def relu(x):
    x = as_tensor(x)
    on = x.data > 0
    return _make(np.where(on, x.data, 0.0), (x,), "relu", lambda g: _accumulate(x, g * on))


def selu(x):
    x = as_tensor(x)
    on = x.data > 0
    neg = SELU_ALPHA * np.expm1(np.minimum(x.data, 0.0))
    y = SELU_SCALE * np.where(on, x.data, neg)
    slope = SELU_SCALE * np.where(on, 1.0, neg + SELU_ALPHA)
    return _make(y, (x,), "selu", lambda g: _accumulate(x, g * slope))


ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "selu": selu}


def activation(x, kind):
    try:
        return ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def log_sigmoid(x, eps=LOG_EPS):
    """``log(max(sigmoid(x), eps))`` computed without forming the probability."""
    x = as_tensor(x)
    v = x.data
    val = -(np.maximum(-v, 0.0) + np.log1p(np.exp(-np.abs(v))))
    floor = np.log(eps)
    clamped = val < floor
    y = np.where(clamped, floor, val)
    slope = np.where(clamped, 0.0, 1.0 - _sigmoid(v))
    return _make(y, (x,), "log_sigmoid", lambda g: _accumulate(x, g * slope))


def log(x, eps=LOG_EPS):
    x = as_tensor(x)
    safe = np.maximum(x.data, eps)
    inside = x.data >= eps
    return _make(np.log(safe), (x,), "log", lambda g: _accumulate(x, g * inside / safe))


# -- reductions and shape ----------------------------------------------------

def tsum(x, axis=None):
    x = as_tensor(x)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(np.sum(x.data, axis=axis), (x,), "sum", backward)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), "reshape", lambda g: _accumulate(x, g.reshape(x.shape)))


def take(x, idx):
    """Indexing, e.g. ``x[t]``, ``x[:, :d]`` or ``x[[2, 0, 2]]``; repeated indices accumulate."""
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _accumulate(x, full)

    return _make(x.data[idx], (x,), "take", backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accumulate(t, np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), "stack", backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", backward)


def embedding(weight, ids):
    """Row lookup ``weight[ids]``; ``ids`` is an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        _accumulate(weight, full)

    return _make(weight.data[ids], (weight,), "embedding", backward)


# -- fused losses ------------------------------------------------------------

def softmax_cross_entropy(logits, targets, mask=None):
    """Mean over unmasked rows of ``-log softmax(logits)[target]``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"cross entropy: logits {logits.shape} vs targets {targets.shape}")
    n, v = logits.shape
    if targets.size and (targets.max() >= v or targets.min() < 0):
        raise IndexError(f"target id out of range [0, {v})")
    weight = np.ones(n) if mask is None else np.asarray(mask, dtype=DTYPE)
    count = weight.sum()
    if count == 0:
        raise ValueError("cross entropy over an empty mask")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    nll = logz - shifted[rows, targets]
    value = np.sum(nll * weight) / count

    def backward(g):
        p = np.exp(shifted - logz[:, None])
        p[rows, targets] -= 1.0
        _accumulate(logits, g * p * (weight / count)[:, None])

    return _make(value, (logits,), "cross_entropy", backward)


def cosine_distance(a, b):
    """``1 - cos(a, b)`` along the last axis (a scalar for vectors, one value per row for matrices)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"cosine distance: shapes {a.shape} and {b.shape} differ")
    na = np.linalg.norm(a.data, axis=-1, keepdims=True)
    nb = np.linalg.norm(b.data, axis=-1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("cosine distance is undefined for a zero-norm vector")
    dot = np.sum(a.data * b.data, axis=-1, keepdims=True)
    cos = dot / (na * nb)

    def backward(g):
        g = np.expand_dims(g, -1)
        if a.requires_grad:
            _accumulate(a, -g * (b.data / (na * nb) - cos * a.data / (na * na)))
        if b.requires_grad:
            _accumulate(b, -g * (a.data / (na * nb) - cos * b.data / (nb * nb)))

    return _make(1.0 - cos[..., 0], (a, b), "cosine_distance", backward)


# -- recurrent cell ----------------------------------------------------------

def lstm_cell(xw, h, c, w_hh, mask=None):
    """One LSTM step on pre-projected inputs.

    ``xw`` already holds ``x @ W_ih + b`` (shape B x 4H, gate order i, f, g, o).
    Returns a B x 2H tensor ``[h', c']``.  Rows where ``mask`` is false keep
    their previous state unchanged, so padding never leaks into the state.
    """
    xw, h, c, w_hh = (as_tensor(t) for t in (xw, h, c, w_hh))
    hid = h.shape[1]
    if xw.shape != (h.shape[0], 4 * hid) or w_hh.shape != (hid, 4 * hid) or c.shape != h.shape:
        raise DimensionError(
            f"lstm_cell: xw {xw.shape}, h {h.shape}, c {c.shape}, w_hh {w_hh.shape} are inconsistent")
    gates = xw.data + h.data @ w_hh.data
    i = _sigmoid(gates[:, :hid])
    f = _sigmoid(gates[:, hid:2 * hid])
    gg = np.tanh(gates[:, 2 * hid:3 * hid])
    o = _sigmoid(gates[:, 3 * hid:])
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        keep = np.asarray(mask, dtype=bool)[:, None]
        h_new = np.where(keep, h_new, h.data)
        c_new = np.where(keep, c_new, c.data)
    else:
        keep = None

    def backward(grad):
        dh, dc = grad[:, :hid], grad[:, hid:]
        if keep is not None:
            pass_h = np.where(keep, 0.0, dh)
            pass_c = np.where(keep, 0.0, dc)
            dh = np.where(keep, dh, 0.0)
            dc = np.where(keep, dc, 0.0)
        dc_tot = dc + dh * o * (1.0 - tc * tc)
        dgates = np.concatenate([
            dc_tot * gg * i * (1.0 - i),
            dc_tot * c.data * f * (1.0 - f),
            dc_tot * i * (1.0 - gg * gg),
            dh * tc * o * (1.0 - o),
        ], axis=1)
        _accumulate(xw, dgates)
        if h.requires_grad:
            dh_prev = dgates @ w_hh.data.T
            _accumulate(h, dh_prev if keep is None else dh_prev + pass_h)
        if c.requires_grad:
            dc_prev = dc_tot * f
            _accumulate(c, dc_prev if keep is None else dc_prev + pass_c)
        if w_hh.requires_grad:
            _accumulate(w_hh, h.data.T @ dgates)

    return _make(np.concatenate([h_new, c_new], axis=1), (xw, h, c, w_hh), "lstm_cell", backward)


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update in place; mutates ``state``."""
    if state.lr <= 0:
        raise ValueError(f"learning rate must be positive, got {state.lr}")
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Adam:
    """Adam over a list of trainable tensors.

    Parameters that did not take part in the last backward pass are treated
    as having zero gradient.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)
