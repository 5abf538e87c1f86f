"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Everything trainable in this package is a leaf `Node` in a dynamically built
graph: each op records its parents together with a vector-Jacobian rule, and
`backward` walks the tape in reverse topological order exactly once.
Broadcasting follows numpy's trailing-dimension rule only; incompatible
shapes are rejected with both shapes in the message.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """Input value outside the op's mathematical domain."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Node:
    """A value in the computation graph.

    `value` is a float64 ndarray and is never mutated by any op (the Adam
    update writes leaf values in place, which is the one sanctioned
    exception). `grad` is allocated lazily by `backward` and accumulates
    across repeated backward calls until `zero_grad`.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad", "lr_scale")

    def __init__(self, value, parents=(), requires_grad=None):
        self.value = _as_array(value)
        self.grad = None
        self.parents = tuple(parents)
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p, _ in self.parents)
        self.requires_grad = requires_grad
        self.lr_scale = 1.0  # per-leaf optimizer step-size multiplier

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # operator sugar; non-Node operands become constants
    def __add__(self, other):
        return add(self, as_node(other))

    def __radd__(self, other):
        return add(as_node(other), self)

    def __sub__(self, other):
        return sub(self, as_node(other))

    def __rsub__(self, other):
        return sub(as_node(other), self)

    def __mul__(self, other):
        return mul(self, as_node(other))

    def __rmul__(self, other):
        return mul(as_node(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_node(other))


def leaf(value, requires_grad=True) -> Node:
    """Create a trainable (by default) graph leaf holding a copy of `value`."""
    return Node(_as_array(value).copy(), requires_grad=requires_grad)


def const(value) -> Node:
    """Create a non-trainable leaf."""
    return Node(value, requires_grad=False)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else const(x)


# ---------------------------------------------------------------------------
# broadcasting (trailing-dimension rule only)

def _check_broadcast(sa, sb):
    for da, db in zip(reversed(sa), reversed(sb)):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"shapes {sa} and {sb} do not broadcast")


def _unbroadcast(g, shape):
    """Sum `g` down to `shape`, undoing trailing-rule broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops

def add(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape)
    return Node(a.value + b.value,
                [(a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(g, b.shape))])


def sub(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape)
    return Node(a.value - b.value,
                [(a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(-g, b.shape))])


def mul(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape)
    return Node(a.value * b.value,
                [(a, lambda g: _unbroadcast(g * b.value, a.shape)),
                 (b, lambda g: _unbroadcast(g * a.value, b.shape))])


def neg(a: Node) -> Node:
    return Node(-a.value, [(a, lambda g: -g)])


def square(a: Node) -> Node:
    return Node(a.value * a.value, [(a, lambda g: g * (2.0 * a.value))])


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return Node(t, [(a, lambda g: g * (1.0 - t * t))])


def relu(a: Node) -> Node:
    mask = a.value > 0
    return Node(np.where(mask, a.value, 0.0), [(a, lambda g: g * mask)])


def exp(a: Node) -> Node:
    e = np.exp(a.value)
    return Node(e, [(a, lambda g: g * e)])


def log(a: Node) -> Node:
    if np.any(a.value <= 0):
        raise DomainError("log of non-positive value")
    return Node(np.log(a.value), [(a, lambda g: g / a.value)])


def _sigmoid(x):
    # overflow-safe logistic, used as softplus' derivative
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(a: Node) -> Node:
    # max(x,0) + log1p(e^{-|x|}) never overflows
    x = a.value
    v = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return Node(v, [(a, lambda g: g * _sigmoid(x))])


# ---------------------------------------------------------------------------
# reductions

def _check_nonempty(a: Node, axis):
    if a.size == 0 or (axis is not None and a.shape[axis] == 0):
        raise DomainError("reduction over empty extent")


def tsum(a: Node, axis=None) -> Node:
    _check_nonempty(a, axis)
    if axis is None:
        return Node(a.value.sum(), [(a, lambda g: np.broadcast_to(g, a.shape))])
    return Node(a.value.sum(axis=axis),
                [(a, lambda g: np.broadcast_to(np.expand_dims(g, axis), a.shape))])


def tmean(a: Node, axis=None) -> Node:
    _check_nonempty(a, axis)
    n = a.size if axis is None else a.shape[axis]
    s = tsum(a, axis=axis)
    return mul(s, const(1.0 / n))


def logsumexp(a: Node, axis=None) -> Node:
    """log Σ e^x with max subtraction for stability."""
    _check_nonempty(a, axis)
    x = a.value
    m = x.max() if axis is None else x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e.sum() if axis is None else e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)) if axis is None else np.squeeze(m + np.log(s), axis=axis)
    w = e / s  # softmax weights, the local Jacobian

    def vjp(g):
        if axis is None:
            return g * w
        return np.expand_dims(g, axis) * w

    return Node(out, [(a, vjp)])


# ---------------------------------------------------------------------------
# structural ops (weight-code assembly and layer algebra)

def matmul(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not agree")
    return Node(a.value @ b.value,
                [(a, lambda g: g @ b.value.T),
                 (b, lambda g: a.value.T @ g)])


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return Node(a.value.T, [(a, lambda g: g.T)])


def reshape(a: Node, shape) -> Node:
    shape = tuple(shape)
    old = a.shape
    return Node(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def concat(nodes, axis=0) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)
    value = np.concatenate([n.value for n in nodes], axis=axis)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        return vjp

    return Node(value, [(n, make_vjp(i)) for i, n in enumerate(nodes)])


def repeat_rows(a: Node, k: int) -> Node:
    """Repeat each row k times: rows become [r0]*k, [r1]*k, ..."""
    n = a.shape[0]
    return Node(np.repeat(a.value, k, axis=0),
                [(a, lambda g: g.reshape(n, k, *a.shape[1:]).sum(axis=1))])


def tile_rows(a: Node, k: int) -> Node:
    """Tile the whole row block k times: rows become r0..rn, r0..rn, ..."""
    n = a.shape[0]
    reps = (k,) + (1,) * (a.value.ndim - 1)
    return Node(np.tile(a.value, reps),
                [(a, lambda g: g.reshape(k, n, *a.shape[1:]).sum(axis=0))])


def broadcast_rows(a: Node, n: int) -> Node:
    """Broadcast a (1, d) row to (n, d)."""
    if a.value.ndim != 2 or a.shape[0] != 1:
        raise ShapeError(f"broadcast_rows expects shape (1, d), got {a.shape}")
    return Node(np.broadcast_to(a.value, (n, a.shape[1])).copy(),
                [(a, lambda g: g.sum(axis=0, keepdims=True))])


def slice_axis(a: Node, axis: int, start: int, stop: int) -> Node:
    """Contiguous slice along one axis; gradient scatters back into zeros."""
    sl = [slice(None)] * a.value.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def vjp(g):
        out = np.zeros(a.shape)
        out[sl] = g
        return out

    return Node(a.value[sl].copy(), [(a, vjp)])


# ---------------------------------------------------------------------------
# backward

def backward(root: Node) -> None:
    """Accumulate d(root)/d(leaf) into .grad for every reachable leaf.

    Requires a scalar root. Repeated calls without zero_grad keep
    accumulating, which is what gradient-accumulation training loops want.
    Interior nodes carry gradient only transiently.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")

    # iterative post-order DFS; recursion would overflow on long op chains
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
        else:
            stack.append((node, True))
            for parent, _ in node.parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))

    grads = {id(root): np.ones(root.shape)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents and node.requires_grad:
            # leaves accumulate; interior grads live only in-flight
            if node.grad is None:
                node.grad = np.array(g)
            else:
                node.grad += g
        for parent, vjp in node.parents:
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + contrib
            else:
                grads[id(parent)] = contrib


def zero_grads(nodes) -> None:
    for n in nodes:
        n.zero_grad()


# ---------------------------------------------------------------------------
# Adam

class AdamState:
    """First/second moment buffers plus the step counter."""

    def __init__(self, leaves):
        self.m = [np.zeros(p.shape) for p in leaves]
        self.v = [np.zeros(p.shape) for p in leaves]
        self.t = 0


def adam_step(leaves, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam descent step, updating leaf values in place."""
    state.t += 1
    t = state.t
    for i, (p, g) in enumerate(zip(leaves, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != leaf shape {p.shape}")
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g * g
        m_hat = state.m[i] / (1 - beta1 ** t)
        v_hat = state.v[i] / (1 - beta2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return leaves, state


class Adam:
    """Convenience wrapper around adam_step that reads .grad off the leaves.

    Honors each leaf's lr_scale by keeping one moment state per distinct
    scale group.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.groups = {}
        for p in self.params:
            self.groups.setdefault(p.lr_scale, []).append(p)
        self.states = {scale: AdamState(group)
                       for scale, group in self.groups.items()}

    def step(self):
        for scale, group in self.groups.items():
            grads = [p.grad if p.grad is not None else np.zeros(p.shape)
                     for p in group]
            adam_step(group, grads, self.states[scale], lr=self.lr * scale,
                      beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def zero_grad(self):
        zero_grads(self.params)
