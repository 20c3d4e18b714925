"""Minimal reverse-mode differentiation over numpy arrays.

Operations record onto the innermost active :class:`Tape`; with no tape
active they compute plain values and nothing is recorded.  Adjoints of
intermediate nodes live only for the duration of one ``backward`` call, so
repeated calls accumulate into leaf ``grad`` arrays and nowhere else.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    pass


class Value:
    __slots__ = ("data", "requires_grad", "name", "_grad", "_node")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._grad = np.zeros_like(self.data) if requires_grad else None
        self._node = None

    @property
    def grad(self):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self._grad = np.zeros_like(self.data)

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Value{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    out: Value
    parents: tuple
    backward: object


_TAPES = []


@dataclass
class Tape:
    nodes: list = field(default_factory=list)

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def backward(self, root):
        backward(self, root)


class no_grad:
    """Suspend recording inside an active tape."""

    def __enter__(self):
        _TAPES.append(None)

    def __exit__(self, *exc):
        _TAPES.pop()
        return False


def active_tape():
    return _TAPES[-1] if _TAPES else None


def zero_grads(params):
    for p in params:
        p.zero_grad()


def detach(v):
    return Value(v.data)


def _const(x):
    return x if isinstance(x, Value) else Value(x)


def _make(data, parents, backward_fn):
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Value(data, requires_grad=needs)
    if needs:
        out._node = Node(out, parents, backward_fn)
        tape.nodes.append(out._node)
    return out


def backward(tape, root):
    """Reverse sweep from scalar ``root``, accumulating into leaf grads."""
    if root.data.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.data.shape}")
    if not root.requires_grad:
        return
    if root._node is None:
        root.grad += 1.0
        return
    adj = {id(root): np.ones_like(root.data)}
    for node in reversed(tape.nodes):
        g = adj.pop(id(node.out), None)
        if g is None:
            continue
        grads = node.backward(g)
        for parent, pg in zip(node.parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._node is None:
                parent.grad += pg
            else:
                key = id(parent)
                if key in adj:
                    adj[key] = adj[key] + pg
                else:
                    adj[key] = pg


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- operations -----------------------------------------------------------

def matmul(a, b):
    a, b = _const(a), _const(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2 and ad.ndim > 2:
                k = ad.shape[-1]
                gb = ad.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), bw)


def add(a, b):
    a, b = _const(a), _const(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(a, bias):
    """``a`` (..., n) plus a length-n bias broadcast over leading axes."""
    a, bias = _const(a), _const(bias)
    if bias.data.ndim != 1 or a.shape[-1] != bias.shape[0]:
        raise ShapeError(f"bias shape {bias.shape} does not match {a.shape}")
    return _make(a.data + bias.data, (a, bias),
                 lambda g: (g, g.reshape(-1, g.shape[-1]).sum(axis=0)))


def scale(a, c):
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a, c):
    return _make(a.data + c, (a,), lambda g: (g,))


def mul_const(a, m):
    m = np.asarray(m, dtype=a.data.dtype)
    if m.shape != a.shape:
        raise ShapeError(f"mask shape {m.shape} does not match {a.shape}")
    return _make(a.data * m, (a,), lambda g: (g * m,))


def tanh_act(a):
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # no overflow for large |a|
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def log(a):
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


def clamp(a, lo, hi):
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _make(np.clip(x, lo, hi), (a,), lambda g: (np.where(inside, g, 0.0),))


def mean(a):
    n = a.data.size
    shape = a.shape
    return _make(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.full(shape, g / n, dtype=a.data.dtype),))


def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def swap_last(a):
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def concat(values, axis=-1):
    values = [_const(v) for v in values]
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([v.data for v in values], axis=axis), tuple(values),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def mse_norm_loss(pred, target, joint_dim=3, squared=False):
    """Mean over joints of ||pred_joint - target_joint|| (squared if asked).

    Joints are consecutive groups of ``joint_dim`` entries along the last
    axis; the mean runs over all joints of all leading indices.
    """
    target = target.data if isinstance(target, Value) else np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[-1] % joint_dim:
        raise ShapeError(f"last axis {pred.shape[-1]} not divisible by joint_dim={joint_dim}")
    loss, grad = _kernels.joint_norm_loss(pred.data - target, joint_dim, squared)
    return _make(np.asarray(loss, dtype=pred.data.dtype), (pred,), lambda g: (g * grad,))


BCE_EPS = 1e-7


def bce_terms(d_real, d_fake, eps=BCE_EPS):
    """Discriminator and generator losses from scores in (0, 1).

    loss_d = -(mean log D(real) + mean log(1 - D(fake))) is minimized by the
    discriminator; loss_g = mean log(1 - D(fake)) is minimized by the
    generator.
    """
    log_real = log(clamp(d_real, eps, 1.0 - eps))
    log_fake = log(add_scalar(scale(clamp(d_fake, eps, 1.0 - eps), -1.0), 1.0))
    m_fake = mean(log_fake)
    loss_d = scale(add(mean(log_real), m_fake), -1.0)
    return loss_d, m_fake


# --- finite-difference verification --------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst: tuple
    n_checked: int


def grad_check(closure, params, eps=1e-5, tol=1e-4, floor=1e-6):
    """Compare analytic grads of ``closure()`` with central differences.

    ``closure`` takes no arguments and returns a scalar Value built from
    ``params``.  Relative error per entry is |a - n| / max(|a|, |n|, floor).
    """
    zero_grads(params)
    with Tape() as tape:
        root = closure()
    tape.backward(root)
    analytic = [p.grad.copy() for p in params]
    worst, worst_at, count = 0.0, None, 0
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = float(closure().data)
            flat[j] = orig - eps
            fm = float(closure().data)
            flat[j] = orig
            num = (fp - fm) / (2.0 * eps)
            a = analytic[pi].reshape(-1)[j]
            rel = abs(a - num) / max(abs(a), abs(num), floor)
            count += 1
            if rel > worst or worst_at is None:
                worst, worst_at = rel, (pi, j)
    zero_grads(params)
    return GradCheckReport(float(worst), bool(worst <= tol), worst_at, count)
