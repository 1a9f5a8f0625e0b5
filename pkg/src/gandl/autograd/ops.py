"""Differentiable operations.

Every backward is written with the public ops below, so gradients can be
differentiated again when ``create_graph=True``.
"""

from __future__ import annotations

import functools

import numpy as np

from .tensor import Node, Tensor, as_tensor

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    pass


def _check(cond, op, msg, *shapes):
    if not cond:
        shapes = " vs ".join(str(tuple(s)) for s in shapes)
        raise ShapeError(f"{op}: {msg} (shapes {shapes})")


# -- broadcasting helpers ---------------------------------------------------

def _reduce_axes(shape, target):
    lead = len(shape) - len(target)
    axes = tuple(range(lead))
    axes += tuple(i + lead for i, n in enumerate(target) if n == 1 and shape[i + lead] != 1)
    return axes


class SumTo(Node):
    name = "sum_to"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        self.in_shape = x.shape
        axes = _reduce_axes(x.shape, self.shape)
        out = x.sum(axis=axes, keepdims=True) if axes else x
        return out.reshape(self.shape)

    def backward(self, g, needs):
        return (broadcast_to(g, self.in_shape),)


class BroadcastTo(Node):
    name = "broadcast_to"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        self.in_shape = x.shape
        try:
            return np.broadcast_to(x, self.shape).copy()
        except ValueError:
            _check(False, self.name, "cannot broadcast", x.shape, self.shape)

    def backward(self, g, needs):
        return (sum_to(g, self.in_shape),)


def sum_to(x, shape):
    x = as_tensor(x)
    if x.shape == tuple(shape):
        return x
    return SumTo.apply(x, shape=shape)


def broadcast_to(x, shape):
    x = as_tensor(x)
    if x.shape == tuple(shape):
        return x
    return BroadcastTo.apply(x, shape=shape)


def _binary_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        _check(False, op, "operands do not broadcast", a.shape, b.shape)


# -- elementwise --------------------------------------------------------------

class Add(Node):
    name = "add"

    def forward(self, a, b):
        _binary_shape(self.name, a, b)
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, g, needs):
        return tuple(sum_to(g, s) if n else None for s, n in zip(self.shapes, needs))


class Mul(Node):
    name = "mul"

    def forward(self, a, b):
        _binary_shape(self.name, a, b)
        return a * b

    def backward(self, g, needs):
        a, b = self.inputs
        ga = sum_to(g * b, a.shape) if needs[0] else None
        gb = sum_to(g * a, b.shape) if needs[1] else None
        return ga, gb


class Neg(Node):
    name = "neg"

    def forward(self, x):
        return -x

    def backward(self, g, needs):
        return (neg(g),)


class Power(Node):
    name = "power"

    def __init__(self, exponent):
        super().__init__()
        self.exponent = float(exponent)

    def forward(self, x):
        return np.power(x, self.exponent)

    def backward(self, g, needs):
        (x,) = self.inputs
        p = self.exponent
        if p == 1.0:
            return (g,)
        if p == 2.0:
            return (g * x * 2.0,)
        return (g * power(x, p - 1.0) * p,)


class Exp(Node):
    name = "exp"

    def forward(self, x):
        return np.exp(x)

    def backward(self, g, needs):
        (x,) = self.inputs
        return (g * exp(x),)


class Log(Node):
    name = "log"

    def forward(self, x):
        return np.log(x)

    def backward(self, g, needs):
        (x,) = self.inputs
        return (g / x,)


class Sigmoid(Node):
    name = "sigmoid"

    def forward(self, x):
        return _np_sigmoid(x)

    def backward(self, g, needs):
        (x,) = self.inputs
        s = sigmoid(x)
        return (g * s * (1.0 - s),)


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Softplus(Node):
    name = "softplus"

    def forward(self, x):
        return np.logaddexp(0.0, x)

    def backward(self, g, needs):
        (x,) = self.inputs
        return (g * sigmoid(x),)


class LeakyRelu(Node):
    name = "leaky_relu"

    def __init__(self, slope):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        # derivative at exactly 0 uses the negative-side slope
        self.scale = np.where(x > 0, 1.0, self.slope)
        return x * self.scale

    def backward(self, g, needs):
        return (g * Tensor(self.scale),)


class Abs(Node):
    name = "abs"

    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, g, needs):
        return (g * Tensor(self.sign),)


class Norm(Node):
    """Euclidean norm over ``axes``; the gradient at a zero vector is 0."""

    name = "norm"

    def __init__(self, axes, keepdims):
        super().__init__()
        self.axes = axes
        self.keepdims = keepdims

    def forward(self, x):
        return np.sqrt(np.sum(x * x, axis=self.axes, keepdims=self.keepdims))

    def backward(self, g, needs):
        (x,) = self.inputs
        n = norm(x, axis=self.axes, keepdims=True)
        zero = Tensor((n.data == 0).astype(np.float64))
        gk = g if self.keepdims else reshape(g, n.shape)
        return (x * (gk / (n + zero)),)


# -- reductions and shape ----------------------------------------------------

class Sum(Node):
    name = "sum"

    def __init__(self, axis, keepdims):
        super().__init__()
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x):
        self.in_shape = x.shape
        return np.sum(x, axis=self.axis, keepdims=self.keepdims)

    def backward(self, g, needs):
        if not self.keepdims and self.axis is not None:
            axes = self.axis if isinstance(self.axis, tuple) else (self.axis,)
            axes = sorted(a % len(self.in_shape) for a in axes)
            shape = list(g.shape)
            for a in axes:
                shape.insert(a, 1)
            g = reshape(g, tuple(shape))
        elif self.axis is None and not self.keepdims:
            g = reshape(g, (1,) * len(self.in_shape))
        return (broadcast_to(g, self.in_shape),)


class Reshape(Node):
    name = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        self.in_shape = x.shape
        try:
            return x.reshape(self.shape)
        except ValueError:
            _check(False, self.name, "size mismatch", x.shape, self.shape)

    def backward(self, g, needs):
        return (reshape(g, self.in_shape),)


class Transpose(Node):
    name = "transpose"

    def __init__(self, axes):
        super().__init__()
        self.axes = tuple(axes)

    def forward(self, x):
        _check(len(self.axes) == x.ndim, self.name, "axes do not match rank", x.shape, self.axes)
        return np.transpose(x, self.axes)

    def backward(self, g, needs):
        return (transpose(g, tuple(np.argsort(self.axes))),)


class GetItem(Node):
    name = "getitem"

    def __init__(self, index):
        super().__init__()
        self.index = index

    def forward(self, x):
        self.in_shape = x.shape
        return np.array(x[self.index])

    def backward(self, g, needs):
        return (SetInto.apply(g, index=self.index, shape=self.in_shape),)


class SetInto(Node):
    """Scatter ``x`` into zeros of ``shape`` at ``index`` (adjoint of getitem)."""

    name = "set_into"

    def __init__(self, index, shape):
        super().__init__()
        self.index = index
        self.shape = shape

    def forward(self, x):
        out = np.zeros(self.shape)
        idx = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(isinstance(i, (slice, int, np.integer)) for i in idx):
            out[self.index] = x
        else:
            np.add.at(out, self.index, x)
        return out

    def backward(self, g, needs):
        return (getitem(g, self.index),)


class Concat(Node):
    name = "concat"

    def __init__(self, axis):
        super().__init__()
        self.axis = axis

    def forward(self, *xs):
        try:
            out = np.concatenate(xs, axis=self.axis)
        except ValueError:
            _check(False, self.name, "incompatible shapes", *(x.shape for x in xs))
        self.bounds = np.cumsum([0] + [x.shape[self.axis] for x in xs])
        return out

    def backward(self, g, needs):
        outs = []
        for i, need in enumerate(needs):
            if not need:
                outs.append(None)
                continue
            index = [slice(None)] * g.ndim
            index[self.axis] = slice(int(self.bounds[i]), int(self.bounds[i + 1]))
            outs.append(getitem(g, tuple(index)))
        return tuple(outs)


# -- contractions -------------------------------------------------------------

@functools.lru_cache(maxsize=4096)
def _einsum_path(subscripts, shapes):
    operands = [np.empty(s) for s in shapes]
    return np.einsum_path(subscripts, *operands, optimize="greedy")[0]


def _np_einsum(subscripts, *arrays):
    path = _einsum_path(subscripts, tuple(a.shape for a in arrays))
    return np.einsum(subscripts, *arrays, optimize=path)


class Einsum(Node):
    name = "einsum"

    def __init__(self, subscripts):
        super().__init__()
        self.subscripts = subscripts.replace(" ", "")
        lhs, self.out = self.subscripts.split("->")
        self.subs = lhs.split(",")

    def forward(self, *arrays):
        _check(len(arrays) == len(self.subs), self.name,
               f"'{self.subscripts}' expects {len(self.subs)} operands", *(a.shape for a in arrays))
        sizes = {}
        for sub, a in zip(self.subs, arrays):
            _check(len(sub) == a.ndim and len(set(sub)) == len(sub), self.name,
                   f"operand does not fit '{sub}' in '{self.subscripts}'", a.shape)
            for c, n in zip(sub, a.shape):
                _check(sizes.setdefault(c, n) == n, self.name,
                       f"index '{c}' has inconsistent sizes in '{self.subscripts}'",
                       *(x.shape for x in arrays))
        self.sizes = sizes
        return _np_einsum(self.subscripts, *arrays)

    def backward(self, g, needs):
        grads = []
        for k, need in enumerate(needs):
            if not need:
                grads.append(None)
                continue
            others = [s for j, s in enumerate(self.subs) if j != k]
            avail = set(self.out).union(*others) if others else set(self.out)
            target = self.subs[k]
            reduced = "".join(c for c in target if c in avail)
            subscripts = ",".join([self.out] + others) + "->" + reduced
            ops_ = [g] + [t for j, t in enumerate(self.inputs) if j != k]
            gk = einsum(subscripts, *ops_)
            if reduced != target:
                shape = tuple(self.sizes[c] if c in avail else 1 for c in target)
                gk = broadcast_to(reshape(gk, shape), tuple(self.sizes[c] for c in target))
            grads.append(gk)
        return tuple(grads)


class Unfold(Node):
    """(B, C, H, W) -> (B, C, k*k, H-k+1, W-k+1) sliding windows, stride 1."""

    name = "unfold"

    def __init__(self, k):
        super().__init__()
        self.k = k

    def forward(self, x):
        _check(x.ndim == 4 and x.shape[2] >= self.k and x.shape[3] >= self.k,
               self.name, f"need 4-D input at least {self.k}x{self.k}", x.shape)
        self.in_shape = x.shape
        k = self.k
        b, c, h, w = x.shape
        oh, ow = h - k + 1, w - k + 1
        out = np.empty((b, c, k * k, oh, ow))
        for i in range(k):
            for j in range(k):
                out[:, :, i * k + j] = x[:, :, i:i + oh, j:j + ow]
        return out

    def backward(self, g, needs):
        return (Fold.apply(g, k=self.k, shape=self.in_shape),)


class Fold(Node):
    """Adjoint of :class:`Unfold` (overlapping windows are summed)."""

    name = "fold"

    def __init__(self, k, shape):
        super().__init__()
        self.k = k
        self.shape = shape

    def forward(self, y):
        k = self.k
        out = np.zeros(self.shape)
        oh, ow = y.shape[3], y.shape[4]
        for i in range(k):
            for j in range(k):
                out[:, :, i:i + oh, j:j + ow] += y[:, :, i * k + j]
        return out

    def backward(self, g, needs):
        return (unfold(g, self.k),)


class Pad2d(Node):
    name = "pad2d"

    def __init__(self, p):
        super().__init__()
        self.p = p

    def forward(self, x):
        p = self.p
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))

    def backward(self, g, needs):
        p = self.p
        h, w = g.shape[2], g.shape[3]
        return (getitem(g, (slice(None), slice(None), slice(p, h - p), slice(p, w - p))),)


# -- public functional surface ---------------------------------------------

def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Add.apply(a, neg(b))


def mul(a, b):
    return Mul.apply(a, b)


def div(a, b):
    return mul(a, power(b, -1.0))


def neg(x):
    return Neg.apply(x)


def power(x, exponent):
    return Power.apply(x, exponent=exponent)


def sqrt(x):
    return power(x, 0.5)


def exp(x):
    return Exp.apply(x)


def log(x):
    return Log.apply(x)


def sigmoid(x):
    return Sigmoid.apply(x)


def softplus(x):
    return Softplus.apply(x)


def leaky_relu(x, slope=LEAKY_SLOPE):
    return LeakyRelu.apply(x, slope=slope)


def abs(x):  # noqa: A001
    return Abs.apply(x)


def norm(x, axis=None, keepdims=False):
    if isinstance(axis, list):
        axis = tuple(axis)
    return Norm.apply(x, axes=axis, keepdims=keepdims)


def sum(x, axis=None, keepdims=False):  # noqa: A001
    if isinstance(axis, list):
        axis = tuple(axis)
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, (tuple, list)) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    if x.shape == tuple(shape):
        return x
    return Reshape.apply(x, shape=shape)


def transpose(x, axes):
    return Transpose.apply(x, axes=axes)


def getitem(x, index):
    return GetItem.apply(x, index=index)


def concat(xs, axis=0):
    return Concat.apply(*xs, axis=axis)


def einsum(subscripts, *operands):
    return Einsum.apply(*operands, subscripts=subscripts)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check(a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0],
           "matmul", "inner dimensions differ", a.shape, b.shape)
    return einsum("ij,jk->ik", a, b)


def unfold(x, k):
    return Unfold.apply(x, k=k)


def pad2d(x, p):
    if p == 0:
        return as_tensor(x)
    return Pad2d.apply(x, p=p)


def linear(x, weight, bias=None):
    """x: (B, in), weight: (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check(x.ndim == 2 and weight.ndim == 2 and x.shape[1] == weight.shape[1],
           "linear", "input width differs from weight fan-in", x.shape, weight.shape)
    out = einsum("bi,oi->bo", x, weight)
    if bias is not None:
        out = out + bias
    return out


def conv2d(x, weight, bias=None, padding="same"):
    """Direct stride-1 convolution (cross-correlation).

    x: (B, C, H, W); weight: (O, C, k, k); ``padding`` is "same" (odd k)
    or "valid".
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check(x.ndim == 4 and weight.ndim == 4 and weight.shape[1] == x.shape[1]
           and weight.shape[2] == weight.shape[3],
           "conv2d", "input channels differ from weight or kernel not square",
           x.shape, weight.shape)
    o, c, k, _ = weight.shape
    if k == 1:
        out = einsum("bchw,oc->bohw", x, reshape(weight, (o, c)))
    else:
        if padding == "same":
            _check(k % 2 == 1, "conv2d", "'same' padding needs an odd kernel", weight.shape)
            x = pad2d(x, k // 2)
        elif padding != "valid":
            raise ValueError(f"conv2d: unknown padding {padding!r}")
        cols = unfold(x, k)
        out = einsum("bckhw,ock->bohw", cols, reshape(weight, (o, c, k * k)))
    if bias is not None:
        out = out + reshape(as_tensor(bias), (1, o, 1, 1))
    return out


@functools.lru_cache(maxsize=32)
def _bilinear_up_matrix(n):
    # 2x upsampling with half-pixel centres and edge clamping
    m = np.zeros((2 * n, n))
    for i in range(2 * n):
        src = (i + 0.5) / 2.0 - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        m[i, min(max(lo, 0), n - 1)] += 1.0 - frac
        m[i, min(max(lo + 1, 0), n - 1)] += frac
    return m


@functools.lru_cache(maxsize=32)
def _bilinear_down_matrix(n):
    # 2x downsampling: average of each 2-pixel pair (bilinear at half-pixel offsets)
    m = np.zeros((n // 2, n))
    for i in range(n // 2):
        m[i, 2 * i] = m[i, 2 * i + 1] = 0.5
    return m


def upsample2x(x):
    x = as_tensor(x)
    _check(x.ndim == 4, "upsample2x", "need (B, C, H, W)", x.shape)
    mh = Tensor(_bilinear_up_matrix(x.shape[2]))
    mw = Tensor(_bilinear_up_matrix(x.shape[3]))
    return einsum("bchw,Hh,Ww->bcHW", x, mh, mw)


def downsample2x(x):
    x = as_tensor(x)
    _check(x.ndim == 4 and x.shape[2] % 2 == 0 and x.shape[3] % 2 == 0,
           "downsample2x", "need (B, C, H, W) with even H, W", x.shape)
    mh = Tensor(_bilinear_down_matrix(x.shape[2]))
    mw = Tensor(_bilinear_down_matrix(x.shape[3]))
    return einsum("bchw,Hh,Ww->bcHW", x, mh, mw)
