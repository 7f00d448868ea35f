"""Tensor wrapper and the reverse-mode tape.

A Graph records every differentiable operation executed while it is active
(dynamic tape). ``backward`` replays the tape once in reverse and then frees
it; running backward twice on the same graph is an error.
"""

from __future__ import annotations

import threading

import numpy as np

from .dtypes import default_dtype


class ShapeError(ValueError):
    pass


class GraphConsumedError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # arithmetic sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops

        return ops.getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


class _Node:
    """One recorded op: inputs, output, and the vector-Jacobian product."""

    __slots__ = ("inputs", "out", "vjp")

    def __init__(self, inputs, out, vjp):
        self.inputs = inputs
        self.out = out
        self.vjp = vjp


_active = threading.local()


def active_graph():
    return getattr(_active, "graph", None)


class Graph:
    """Ordered record of executed ops, replayed in reverse by backward()."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False
        self._produced: set[int] = set()

    def __enter__(self):
        if active_graph() is not None:
            raise RuntimeError("another graph is already recording on this thread")
        _active.graph = self
        return self

    def __exit__(self, *exc):
        _active.graph = None
        return False

    def backward(self, seed: Tensor) -> None:
        backward(self, seed)


def record(inputs, out: Tensor, vjp) -> None:
    """Append a node to the active graph, if recording applies."""
    g = active_graph()
    if g is None or not out.requires_grad:
        return
    g.nodes.append(_Node(inputs, out, vjp))
    g._produced.add(id(out))


def any_requires_grad(*tensors) -> bool:
    return any(isinstance(t, Tensor) and t.requires_grad for t in tensors)


def backward(graph: Graph, seed: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from seed.

    Gradients accumulate additively into existing .grad buffers, so callers
    that reuse parameters across steps must zero them first.
    """
    if graph.consumed:
        raise GraphConsumedError("graph already consumed by a previous backward")
    if not isinstance(seed, Tensor) or seed.size != 1:
        raise ShapeError("backward seed must be a scalar tensor")
    if id(seed) not in graph._produced:
        raise ValueError("seed was not produced by this graph")

    grads: dict[int, list] = {id(seed): [seed, np.ones_like(seed.data)]}
    for node in reversed(graph.nodes):
        entry = grads.pop(id(node.out), None)
        if entry is None:
            continue
        gout = entry[1]
        for t, gin in zip(node.inputs, node.vjp(gout)):
            if gin is None or not isinstance(t, Tensor) or not t.requires_grad:
                continue
            slot = grads.get(id(t))
            if slot is None:
                grads[id(t)] = [t, gin]
            else:
                slot[1] = slot[1] + gin

    produced = graph._produced
    for t, g in grads.values():
        if id(t) in produced:
            continue  # intermediate that nothing below consumes
        t.grad = g if t.grad is None else t.grad + g

    graph.consumed = True
    graph.nodes.clear()
    graph._produced.clear()
