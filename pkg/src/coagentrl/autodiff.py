"""A small reverse-mode differentiation tape over numpy arrays.

Nodes are appended in evaluation order, so the tape is topologically sorted by
construction and the backward pass simply walks it in reverse.  Broadcasting
follows numpy; gradients are summed back to each input's shape.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Node:
    __slots__ = ("tape", "index", "value", "parents", "vjp", "name")

    def __init__(self, tape, value, parents=(), vjp=None, name=None):
        self.tape = tape
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.add(self, self.tape.neg(self.tape.lift(other)))

    def __rsub__(self, other):
        return self.tape.add(self.tape.neg(self), other)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.neg(self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __repr__(self):
        return f"Node({self.name or self.index}, shape={self.shape})"


class Tape:
    """Append-only record of primitive operations."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.adjoints: list | None = None

    def param(self, value, name=None) -> Node:
        """A differentiable leaf."""
        return Node(self, np.array(value, dtype=float), name=name)

    def const(self, value) -> Node:
        return Node(self, value, name="const")

    def lift(self, x) -> Node:
        return x if isinstance(x, Node) else self.const(x)

    # --- primitives ---------------------------------------------------------

    def add(self, a, b) -> Node:
        a, b = self.lift(a), self.lift(b)
        return Node(self, a.value + b.value, (a, b),
                    lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    def neg(self, a) -> Node:
        return Node(self, -a.value, (a,), lambda g: (-g,))

    def mul(self, a, b) -> Node:
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value
        return Node(self, av * bv, (a, b),
                    lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))

    def matmul(self, a, b) -> Node:
        """Matrix product; either operand may be a vector (numpy ``@`` rules)."""
        a, b = self.lift(a), self.lift(b)
        av, bv = a.value, b.value

        def vjp(g):
            if av.ndim == 1 and bv.ndim == 1:
                return g * bv, g * av
            if av.ndim == 1:
                return bv @ g, np.outer(av, g)
            if bv.ndim == 1:
                return np.outer(g, bv), av.T @ g
            return g @ bv.T, av.T @ g

        return Node(self, av @ bv, (a, b), vjp)

    def sigmoid(self, a) -> Node:
        s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
        return Node(self, s, (a,), lambda g: (g * s * (1.0 - s),))

    def tanh(self, a) -> Node:
        t = np.tanh(a.value)
        return Node(self, t, (a,), lambda g: (g * (1.0 - t * t),))

    def exp(self, a) -> Node:
        e = np.exp(a.value)
        return Node(self, e, (a,), lambda g: (g * e,))

    def log(self, a) -> Node:
        v = a.value
        return Node(self, np.log(v), (a,), lambda g: (g / v,))

    def softmax(self, a, axis=-1) -> Node:
        z = a.value - a.value.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)
        return Node(self, y, (a,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))

    def log_softmax(self, a, axis=-1) -> Node:
        z = a.value - a.value.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        out = z - lse
        p = np.exp(out)
        return Node(self, out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))

    def gather(self, a, index) -> Node:
        """Pick ``a[..., index]`` along the last axis (one index per leading row)."""
        index = np.asarray(index, dtype=int)
        av = a.value
        if av.ndim == 1:
            out = av[index]
        else:
            out = np.take_along_axis(av, index[..., None], axis=-1)[..., 0]

        def vjp(g):
            grad = np.zeros_like(av)
            if av.ndim == 1:
                np.add.at(grad, index, g)
            else:
                np.put_along_axis(grad, index[..., None], np.asarray(g)[..., None], axis=-1)
            return (grad,)

        return Node(self, out, (a,), vjp)

    def sum(self, a, axis=None) -> Node:
        shape = a.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

        return Node(self, a.value.sum(axis=axis), (a,), vjp)

    def reshape(self, a, shape) -> Node:
        old = a.shape
        return Node(self, a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))

    # --- backward -----------------------------------------------------------

    def backward(self, output: Node) -> list:
        """Adjoint of ``output`` with respect to every node on the tape."""
        if output.tape is not self:
            raise ValueError("output node belongs to another tape")
        if output.value.size != 1:
            raise ValueError("backward needs a scalar output")
        adj = [None] * len(self.nodes)
        adj[output.index] = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.index + 1]):
            g = adj[node.index]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                pg = np.asarray(pg, dtype=float).reshape(parent.shape)
                adj[parent.index] = pg if adj[parent.index] is None else adj[parent.index] + pg
        self.adjoints = adj
        return adj


def tape_backward(tape: Tape, output: Node, params=None) -> dict:
    """Gradients of scalar ``output`` for the given leaves (default: all named leaves)."""
    adj = tape.backward(output)
    if params is None:
        params = [n for n in tape.nodes if n.vjp is None and n.name not in (None, "const")]
    grads = {}
    for p in params:
        g = adj[p.index]
        grads[p.name if p.name is not None else p.index] = np.zeros_like(p.value) if g is None else g
    return grads
