"""A small reverse-mode autodiff engine over numpy arrays.

Graphs are static and feed-forward: every op records its parents and a
closure that maps the output gradient to parent gradients. ``backward``
runs over a topological order so each node is visited exactly once.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.value.shape})"

    def item(self) -> float:
        return float(self.value)

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

    def __truediv__(self, other):
        return mul(self, power(as_tensor(other), -1.0))

    def backward(self, grad=None):
        backward(self, grad)


class Param(Tensor):
    """A trainable leaf. ``value`` is updated in place by optimizers.

    While ``frozen`` is set, layers read the parameter through :func:`use`,
    which hands graphs a constant view so no gradient can reach it.
    """

    __slots__ = ("frozen",)

    def __init__(self, value, name=None):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.frozen = False

    def zero_grad(self):
        self.grad = None


def use(p: Tensor) -> Tensor:
    """``p`` itself, or a constant sharing its storage when ``p`` is a frozen Param."""
    if isinstance(p, Param) and p.frozen:
        return Tensor(p.value, name=p.name)
    return p


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _node(value, parents, fn, name):
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Tensor(value, name=name)
    return Tensor(value, parents, fn, name=name)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.value + b.value, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.value - b.value, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _node(a.value * b.value, (a, b), fn, "mul")


def power(a, p: float) -> Tensor:
    a = as_tensor(a)

    def fn(g):
        return (g * p * a.value ** (p - 1.0),)

    return _node(a.value ** p, (a,), fn, "power")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul expects 2-D operands")

    def fn(g):
        return g @ b.value.T, a.value.T @ g

    return _node(a.value @ b.value, (a, b), fn, "matmul")


def square(a) -> Tensor:
    a = as_tensor(a)

    def fn(g):
        return (2.0 * g * a.value,)

    return _node(a.value * a.value, (a,), fn, "square")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)

    def fn(g):
        return (g * out,)

    return _node(out, (a,), fn, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)

    def fn(g):
        return (g / a.value,)

    return _node(np.log(a.value), (a,), fn, "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)

    def fn(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), fn, "tanh")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    x = a.value
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg)

    def fn(g):
        return (g * np.where(x > 0, 1.0, neg + alpha),)

    return _node(out, (a,), fn, "elu")


def relu(a) -> Tensor:
    a = as_tensor(a)
    x = a.value

    def fn(g):
        return (g * (x > 0),)

    return _node(np.maximum(x, 0.0), (a,), fn, "relu")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    out = np.logaddexp(0.0, x)

    def fn(g):
        return (g / (1.0 + np.exp(-x)),)

    return _node(out, (a,), fn, "softplus")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp with zero gradient outside [lo, hi]."""
    a = as_tensor(a)
    x = a.value
    inside = (x >= lo) & (x <= hi)

    def fn(g):
        return (g * inside,)

    return _node(np.clip(x, lo, hi), (a,), fn, "clip")


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape

    def fn(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.value.sum(axis=axis, keepdims=keepdims), (a,), fn, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / count)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.value for t in ts], axis=axis), ts, fn, "concat")


def stop_gradient(a) -> Tensor:
    """Constant copy of ``a``: the backward pass does not enter it."""
    return Tensor(as_tensor(a).value.copy(), name="stop_gradient")


def topological_order(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, grad=None) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every Param reachable."""
    if grad is None:
        if root.value.size != 1:
            raise ValueError("backward without an explicit grad needs a scalar root")
        grad = np.ones_like(root.value)
    grads = {id(root): np.asarray(grad, dtype=np.float64)}
    for node in reversed(topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient at node {node!r}")
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.grad = None


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Param], eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``loss_fn`` rebuilds the graph from the current parameter values. The
    relative error of each entry uses max(|analytic|, |numeric|, 1e-8) as the
    denominator.
    """
    if not (1e-7 < eps < 1e-3):
        raise ValueError(f"eps must lie in (1e-7, 1e-3), got {eps}")
    zero_grad(params)
    loss = loss_fn()
    if loss.value.size != 1:
        raise ValueError("grad_check needs a scalar loss")
    backward(loss)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.value) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        err = np.abs(analytic - numeric) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    zero_grad(params)
    return worst
