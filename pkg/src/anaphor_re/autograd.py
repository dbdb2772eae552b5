"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation appends a record to the module tape (insertion order) when
at least one input requires a gradient. ``backward`` replays the records
reachable from the output in reverse insertion order, so each node's local
rule runs exactly once and fan-out gradients accumulate.
"""

from __future__ import annotations

import itertools
import threading

import numpy as np


class ShapeError(ValueError):
    pass


class DegenerateSliceError(ValueError):
    pass


class EmptyReductionError(ValueError):
    pass


class RankError(ValueError):
    pass


_state = threading.local()


def _grad_enabled():
    return getattr(_state, "enabled", True)


class no_grad:
    """Context manager that disables recording (evaluation passes)."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.enabled = False
        return self

    def __exit__(self, *exc):
        _state.enabled = self._prev


# creation order doubles as tape position; shared across threads so ids never collide
_next_id = itertools.count(1).__next__


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "_id", "name")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._id = _next_id()
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def numpy(self):
        return self.values

    def item(self):
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float(self.values)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    @property
    def T(self):
        return transpose(self)

    def backward(self):
        backward(self)


def tensor(x, requires_grad=False, name=None):
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad, name=name)


def _make(values, parents, rule):
    out = Tensor(values)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = rule
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True).reshape(t.shape)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(root):
    """Populate ``grad`` on every requires_grad ancestor of a scalar."""
    if root.size != 1:
        raise RankError(f"backward needs a scalar, got shape {root.shape}")
    order, seen, stack = [], set(), [root]
    while stack:
        node = stack.pop()
        if node._id in seen:
            continue
        seen.add(node._id)
        order.append(node)
        stack.extend(p for p in node._parents if p.requires_grad)
    # tape position == creation id, so descending id is a valid reverse topological order
    order.sort(key=lambda t: t._id, reverse=True)
    grads = {root._id: np.ones(root.shape)}
    for node in order:
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node._backward is None:
            _accumulate(node, g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                _accumulate(parent, pg)
            elif parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg


# elementwise -----------------------------------------------------------------

def add(a, b):
    a, b = tensor(a), tensor(b)
    return _make(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = tensor(a), tensor(b)
    return _make(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = tensor(a), tensor(b)
    return _make(a.values * b.values, (a, b),
                 lambda g: (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)))


def div(a, b):
    a, b = tensor(a), tensor(b)
    out = a.values / b.values
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.values, a.shape),
                            _unbroadcast(-g * out / b.values, b.shape)))


def scale(a, c):
    a = tensor(a)
    return _make(a.values * c, (a,), lambda g: (g * c,))


def tanh(a):
    a = tensor(a)
    out = np.tanh(a.values)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    a = tensor(a)
    mask = a.values > 0
    return _make(a.values * mask, (a,), lambda g: (g * mask,))


def exp(a):
    a = tensor(a)
    out = np.exp(a.values)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = tensor(a)
    return _make(np.log(a.values), (a,), lambda g: (g / a.values,))


def sqrt(a):
    a = tensor(a)
    out = np.sqrt(a.values)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def clamp_min(a, lo):
    a = tensor(a)
    keep = a.values > lo
    return _make(np.where(keep, a.values, lo), (a,), lambda g: (g * keep,))


def dropout(a, rate, rng):
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


# linear algebra / shape ---------------------------------------------------------

def matmul(a, b):
    """``np.matmul`` semantics; 2-D or equal-batch N-D operands."""
    a, b = tensor(a), tensor(b)
    ok = (a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2]
          and (b.ndim == 2 or a.shape[:-2] == b.shape[:-2]))
    if not ok:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def rule(g):
        ga = g @ np.swapaxes(b.values, -1, -2)
        gb = np.swapaxes(a.values, -1, -2) @ g
        if gb.ndim > b.ndim:
            gb = gb.reshape(-1, *b.shape).sum(axis=0)
        return ga, gb

    return _make(a.values @ b.values, (a, b), rule)


def transpose(a, axes=None):
    a = tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.values, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape):
    a = tensor(a)
    return _make(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=-1):
    ts = [tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.values for t in ts], axis=axis), tuple(ts),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis=0):
    ts = [tensor(t) for t in tensors]
    return _make(np.stack([t.values for t in ts], axis=axis), tuple(ts),
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


def index(a, idx):
    """Basic or integer-array indexing along leading axes; scatter-add gradient."""
    a = tensor(a)

    def rule(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.values[idx], (a,), rule)


def take_rows(a, rows):
    """Gather rows of ``a`` (first axis) by an integer array of any shape."""
    return index(a, np.asarray(rows, dtype=np.int64))


def slice_rows(a, start, stop):
    return index(a, slice(start, stop))


def slice_cols(a, start, stop):
    return index(a, (slice(None), slice(start, stop)))


def embedding(table, ids):
    return take_rows(table, ids)


# reductions --------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy name
    a = tensor(a)
    axis = _norm_axis(axis, a.ndim)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _make(a.values.sum(axis=axis, keepdims=keepdims), (a,), rule)


def mean(a, axis=None, keepdims=False):
    a = tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(x, axis=-1):
    """Max-shifted softmax; ``-inf`` entries map to exactly 0."""
    x = tensor(x)
    axis = _norm_axis(axis, x.ndim)
    m = x.values.max(axis=axis, keepdims=True)
    if np.any(np.isneginf(m)):
        raise DegenerateSliceError("softmax over a slice whose entries are all -inf")
    e = np.exp(x.values - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), rule)


def logsumexp(x, axis=-1, keepdims=False):
    x = tensor(x)
    axis = _norm_axis(axis, x.ndim)
    if x.shape[axis] == 0:
        raise EmptyReductionError("logsumexp over an empty axis")
    m = x.values.max(axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(x.values - m_safe).sum(axis=axis, keepdims=True)
    out_k = m_safe + np.log(s)
    weights = np.exp(x.values - out_k)
    out = out_k if keepdims else np.squeeze(out_k, axis=axis)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    return _make(out, (x,), rule)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis, then affine by ``gamma``/``beta``."""
    x, gamma, beta = tensor(x), tensor(gamma), tensor(beta)
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def rule(g):
        gx_hat = g * gamma.values
        gx = inv / n * (n * gx_hat - gx_hat.sum(-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gamma.shape), _unbroadcast(g, beta.shape)

    return _make(xhat * gamma.values + beta.values, (x, gamma, beta), rule)


# verification --------------------------------------------------------------------

def grad_check(f, x, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor and must be pure. Relative error per
    coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    x = tensor(x)
    x.requires_grad = True
    x.grad = None
    out = f(x)
    backward(out)
    analytic = np.zeros(x.shape) if x.grad is None else x.grad.copy()
    numeric = np.zeros(x.shape)
    x.values = np.ascontiguousarray(x.values)
    flat = x.values.reshape(-1)
    num_flat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(x).item()
            flat[i] = orig - step
            lo = f(x).item()
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2 * step)
    err = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(err.max()) if err.size else 0.0


def params_grad_check(loss_fn, params, step=1e-5, max_coords=None, rng=None, exclude=None):
    """grad_check over several parameter tensors of one scalar loss.

    ``loss_fn()`` closes over ``params``; at most ``max_coords`` coordinates per
    tensor are probed (sampled with ``rng``) to keep big models tractable.
    ``exclude`` maps a position in ``params`` to flat coordinates left out.
    """
    exclude = exclude or {}
    for p in params:
        p.grad = None
    backward(loss_fn())
    worst = 0.0
    with no_grad():
        for pi, p in enumerate(params):
            analytic = np.zeros(p.shape) if p.grad is None else p.grad
            flat = p.values.reshape(-1)
            coords = np.setdiff1d(np.arange(flat.size), np.asarray(list(exclude.get(pi, ())), dtype=int))
            if max_coords is not None and coords.size > max_coords:
                coords = (rng or np.random.default_rng(0)).choice(coords, max_coords, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + step
                hi = loss_fn().item()
                flat[i] = orig - step
                lo = loss_fn().item()
                flat[i] = orig
                num = (hi - lo) / (2 * step)
                a = analytic.reshape(-1)[i]
                worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst
