"""Tensor type, graph recording and reverse-mode traversal."""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

_seq = itertools.count()
_grad_enabled = True


class GraphError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def enable_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, True
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Node:
    """One recorded operation.

    Subclasses implement ``forward`` on numpy arrays and ``backward`` in
    terms of Tensor ops, which is what makes double backward possible.
    """

    name = "op"

    def __init__(self):
        self.inputs = ()
        self.consumed = False

    def forward(self, *arrays):
        raise NotImplementedError

    def backward(self, grad, needs):
        raise NotImplementedError

    def release(self):
        self.consumed = True

    @classmethod
    def apply(cls, *inputs, **kwargs):
        node = cls(**kwargs)
        tensors = tuple(as_tensor(x) for x in inputs)
        out = node.forward(*(t.data for t in tensors))
        record = _grad_enabled and any(t.requires_grad for t in tensors)
        result = Tensor(out, requires_grad=record)
        if record:
            node.inputs = tensors
            result._node = node
        return result


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "_seq", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None
        self._seq = next(_seq)

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
    def is_leaf(self):
        return self._node is None

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the implementations live in ops
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

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def backward(self, retain_graph=False):
        backward(self, retain_graph=retain_graph)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def graph_nodes(*outputs):
    """Recorded tensors reachable from ``outputs`` in topological order."""
    seen = {}
    stack = [as_tensor(o) for o in outputs]
    while stack:
        t = stack.pop()
        if id(t) in seen or not t.requires_grad:
            continue
        seen[id(t)] = t
        if t._node is not None:
            if t._node.consumed:
                raise GraphError(
                    "graph already consumed by a previous backward; "
                    "pass retain_graph=True to traverse it twice")
            stack.extend(t._node.inputs)
    return sorted(seen.values(), key=lambda t: t._seq)


def _relevant(order, targets):
    """Ids of tensors lying on some path into ``targets``."""
    target_ids = {id(t) for t in targets}
    keep = set()
    for t in order:  # inputs precede outputs
        if id(t) in target_ids:
            keep.add(id(t))
        elif t._node is not None and any(id(i) in keep for i in t._node.inputs):
            keep.add(id(t))
    return keep


def grad(outputs, inputs, grad_outputs=None, create_graph=False,
         retain_graph=None, allow_unused=True):
    """Gradients of ``outputs`` with respect to ``inputs``.

    With ``create_graph=True`` the returned tensors are themselves recorded,
    so they can be differentiated again (R1, path-length penalties).
    Unused inputs get zero gradients unless ``allow_unused`` is False.
    """
    if retain_graph is None:
        retain_graph = create_graph
    outputs = [as_tensor(o) for o in (outputs if isinstance(outputs, (list, tuple)) else [outputs])]
    single = not isinstance(inputs, (list, tuple))
    inputs = [inputs] if single else list(inputs)
    if grad_outputs is None:
        for o in outputs:
            if o.size != 1:
                raise GraphError(f"grad of non-scalar output {o.shape} needs grad_outputs")
        grad_outputs = [Tensor(np.ones_like(o.data)) for o in outputs]
    elif not isinstance(grad_outputs, (list, tuple)):
        grad_outputs = [grad_outputs]
    grad_outputs = [as_tensor(g) for g in grad_outputs]

    order = graph_nodes(*outputs)
    keep = _relevant(order, inputs)
    grads = {}

    def accumulate(t, g):
        k = id(t)
        grads[k] = g if k not in grads else grads[k] + g

    ctx = enable_grad() if create_graph else no_grad()
    with ctx:
        for o, g in zip(outputs, grad_outputs):
            if o.requires_grad and id(o) in keep:
                accumulate(o, g)
        for t in reversed(order):
            node = t._node
            if node is None or id(t) not in keep:
                continue
            g = grads.get(id(t))
            if g is None:
                continue
            needs = [i.requires_grad and id(i) in keep for i in node.inputs]
            in_grads = node.backward(g, needs)
            for inp, need, ig in zip(node.inputs, needs, in_grads):
                if need and ig is not None:
                    accumulate(inp, ig)
    if not retain_graph:
        for t in order:
            if t._node is not None:
                t._node.release()

    result = []
    for x in inputs:
        g = grads.get(id(x))
        if g is None:
            if not allow_unused:
                raise GraphError("an input is not connected to the outputs")
            g = Tensor(np.zeros_like(x.data))
        result.append(g)
    return result[0] if single else result


def backward(loss, retain_graph=False):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` (numpy) for every leaf."""
    loss = as_tensor(loss)
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor requiring grad")
    leaves = [t for t in graph_nodes(loss) if t._node is None]
    grads = grad(loss, leaves, retain_graph=retain_graph)
    for leaf, g in zip(leaves, grads):
        leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data
