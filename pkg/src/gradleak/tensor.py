"""Reverse-mode autodiff on a recorded computation graph.

Every operation appends a node to an append-only :class:`Graph` and returns a
:class:`Tensor` handle into it.  Backward passes emit their vector-Jacobian
products as ordinary graph nodes, so a gradient returned by :func:`backward`
is itself differentiable.  That second-order capability is what the
reconstruction attack optimizes through: the objective is a distance between
model gradients, and we need its gradient with respect to the input.

All values are float64 ndarrays.  Broadcasting is deliberately narrow: binary
elementwise ops accept equal shapes or a scalar () operand, nothing else.
Bias broadcasting for conv layers goes through the dedicated bias_add /
channel_sum primitive pair.
"""

from __future__ import annotations

import builtins
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Node:
    """One recorded operation: op name, input node ids, static params, value."""

    __slots__ = ("op", "inputs", "params", "value")

    def __init__(self, op, inputs, params, value):
        self.op = op
        self.inputs = inputs
        self.params = params
        self.value = value


class Graph:
    """Append-only tape of nodes.  Tensors are handles into one graph."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value) -> "Tensor":
        """Record a constant/input tensor.  Copies, casts to float64."""
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("leaf value contains non-finite entries")
        if arr.size == 0:
            raise ValueError("empty tensors are not supported")
        return self._record("leaf", (), {}, arr)

    def _record(self, op, inputs, params, value) -> "Tensor":
        value.flags.writeable = False
        self.nodes.append(Node(op, tuple(inputs), params, value))
        return Tensor(self, len(self.nodes) - 1)

    def __len__(self):
        return len(self.nodes)

    def replay(self) -> list[np.ndarray]:
        """Re-execute every node from the leaves; returns recomputed values.

        Execution is deterministic, so replayed values match the recorded
        ones bit for bit.  Used by tests to pin that invariant.
        """
        values: list[np.ndarray] = []
        for node in self.nodes:
            if node.op == "leaf":
                values.append(node.value)
            else:
                vals = [values[i] for i in node.inputs]
                values.append(_FORWARD[node.op](node.params, *vals))
        return values


class Tensor:
    """Handle to one node of one graph.  Data is read-only."""

    __slots__ = ("graph", "node_id")

    def __init__(self, graph: Graph, node_id: int):
        self.graph = graph
        self.node_id = node_id

    @property
    def data(self) -> np.ndarray:
        return self.graph.nodes[self.node_id].value

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(node={self.node_id}, shape={self.shape})"

    # arithmetic sugar; python numbers go through scalar_mul / leaf wrapping
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_const(self, p)


# ---------------------------------------------------------------------------
# op plumbing

_FORWARD: dict = {}   # op -> fn(params, *values) -> ndarray
_VJP: dict = {}       # op -> fn(g, inputs, out, params) -> [(input_pos, Tensor)]


def _op(name, forward, vjp):
    _FORWARD[name] = forward
    _VJP[name] = vjp


def _graph_of(*args):
    for a in args:
        if isinstance(a, Tensor):
            return a.graph
    raise TypeError("at least one operand must be a Tensor")


def _wrap(graph, x) -> Tensor:
    if isinstance(x, Tensor):
        if x.graph is not graph:
            raise ValueError("operands belong to different graphs")
        return x
    return graph.leaf(x)


def _emit(graph, op, inputs, params) -> Tensor:
    vals = [graph.nodes[t.node_id].value for t in inputs]
    with np.errstate(all="ignore"):  # the finite check below is the gate
        out = _FORWARD[op](params, *vals)
    out = np.asarray(out, dtype=np.float64)
    if out.base is not None or not out.flags.owndata:
        out = out.copy()
    if not np.all(np.isfinite(out)):
        raise ValueError(f"op '{op}' produced non-finite values")
    return graph._record(op, [t.node_id for t in inputs], params, out)


def _check_elementwise(a, b, op):
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ValueError(
            f"{op}: shapes {a.shape} and {b.shape} differ and neither is scalar"
        )


def _unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    # collapse a gradient back onto a scalar () operand
    if g.shape == shape:
        return g
    if shape == ():
        return sum(g)
    raise AssertionError("unexpected broadcast shape")


# ---------------------------------------------------------------------------
# elementwise and scalar ops

def add(a, b) -> Tensor:
    g = _graph_of(a, b)
    a, b = _wrap(g, a), _wrap(g, b)
    _check_elementwise(a.data, b.data, "add")
    return _emit(g, "add", [a, b], {})


def sub(a, b) -> Tensor:
    g = _graph_of(a, b)
    a, b = _wrap(g, a), _wrap(g, b)
    _check_elementwise(a.data, b.data, "sub")
    return _emit(g, "sub", [a, b], {})


def mul(a, b) -> Tensor:
    g = _graph_of(a, b)
    a, b = _wrap(g, a), _wrap(g, b)
    _check_elementwise(a.data, b.data, "mul")
    return _emit(g, "mul", [a, b], {})


def scalar_mul(a: Tensor, c) -> Tensor:
    return _emit(a.graph, "scalar_mul", [a], {"c": float(c)})


_op("add", lambda p, a, b: a + b,
    lambda g, ins, out, p: [(0, _unbroadcast(g, ins[0].shape)),
                            (1, _unbroadcast(g, ins[1].shape))])

_op("sub", lambda p, a, b: a - b,
    lambda g, ins, out, p: [(0, _unbroadcast(g, ins[0].shape)),
                            (1, _unbroadcast(scalar_mul(g, -1.0), ins[1].shape))])

_op("mul", lambda p, a, b: a * b,
    lambda g, ins, out, p: [(0, _unbroadcast(mul(g, ins[1]), ins[0].shape)),
                            (1, _unbroadcast(mul(g, ins[0]), ins[1].shape))])

_op("scalar_mul", lambda p, a: a * p["c"],
    lambda g, ins, out, p: [(0, scalar_mul(g, p["c"]))])


def relu(a: Tensor) -> Tensor:
    return _emit(a.graph, "relu", [a], {})


def step_mask(a: Tensor) -> Tensor:
    """1 where a > 0 else 0.  Gradient is defined as zero everywhere."""
    return _emit(a.graph, "step_mask", [a], {})


def sign_mask(a: Tensor) -> Tensor:
    """sign(a) with zero gradient; the VJP building block for absolute."""
    return _emit(a.graph, "sign_mask", [a], {})


_op("relu", lambda p, a: np.maximum(a, 0.0),
    lambda g, ins, out, p: [(0, mul(g, step_mask(ins[0])))])
_op("step_mask", lambda p, a: (a > 0.0).astype(np.float64),
    lambda g, ins, out, p: [])
_op("sign_mask", lambda p, a: np.sign(a),
    lambda g, ins, out, p: [])


def _sigmoid_fwd(p, a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def sigmoid(a: Tensor) -> Tensor:
    return _emit(a.graph, "sigmoid", [a], {})


_op("sigmoid", _sigmoid_fwd,
    lambda g, ins, out, p: [(0, mul(g, mul(out, sub(1.0, out))))])


def exp(a: Tensor) -> Tensor:
    return _emit(a.graph, "exp", [a], {})


_op("exp", lambda p, a: np.exp(a),
    lambda g, ins, out, p: [(0, mul(g, out))])


def pow_const(a: Tensor, p) -> Tensor:
    return _emit(a.graph, "pow_const", [a], {"p": float(p)})


_op("pow_const", lambda p, a: a ** p["p"],
    lambda g, ins, out, p: [(0, scalar_mul(mul(g, pow_const(ins[0], p["p"] - 1.0)),
                                           p["p"]))])


def absolute(a: Tensor) -> Tensor:
    return _emit(a.graph, "absolute", [a], {})


_op("absolute", lambda p, a: np.abs(a),
    lambda g, ins, out, p: [(0, mul(g, sign_mask(ins[0])))])


# ---------------------------------------------------------------------------
# reductions

def sum(a: Tensor) -> Tensor:  # noqa: A001 - numpy-style module namespace
    """Full reduction to a scalar."""
    return _emit(a.graph, "sum", [a], {})


def _sum_vjp(g, ins, out, p):
    ones = g.graph.leaf(np.ones(ins[0].shape))
    return [(0, mul(g, ones))]


_op("sum", lambda p, a: np.asarray(np.sum(a)), _sum_vjp)


def mean(a: Tensor) -> Tensor:
    """Full mean; composite of sum and scalar_mul."""
    return scalar_mul(sum(a), 1.0 / a.data.size)


# ---------------------------------------------------------------------------
# linear algebra and convolution

def matmul(a, b) -> Tensor:
    g = _graph_of(a, b)
    a, b = _wrap(g, a), _wrap(g, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    return _emit(g, "matmul", [a, b], {})


def _t(x: Tensor) -> Tensor:
    return permute(x, (1, 0))


_op("matmul", lambda p, a, b: a @ b,
    lambda g, ins, out, p: [(0, matmul(g, _t(ins[1]))),
                            (1, matmul(_t(ins[0]), g))])


def _conv2d_fwd(p, x, w):
    pad = p["padding"]
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, w.shape[2:], axis=(2, 3))
    return np.einsum("nihwkl,oikl->nohw", win, w, optimize=True)


def conv2d(x: Tensor, w: Tensor, padding: int = 0) -> Tensor:
    """Cross-correlation, NCHW input, OIHW kernel, stride 1, zero padding."""
    g = _graph_of(x, w)
    x, w = _wrap(g, x), _wrap(g, w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-D input and kernel, got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    cout, cink, kh, kw = w.shape
    if cin != cink:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if padding < 0:
        raise ValueError("conv2d padding must be non-negative")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ValueError(
            f"conv2d kernel {(kh, kw)} larger than padded input "
            f"{(h + 2 * padding, wd + 2 * padding)}")
    if padding > kh - 1 or padding > kw - 1:
        raise ValueError("conv2d padding must be <= kernel extent - 1")
    return _emit(g, "conv2d", [x, w], {"padding": padding})


def _conv2d_vjp(g, ins, out, p):
    x, w = ins
    pad = p["padding"]
    kh, kw = w.shape[2], w.shape[3]
    # d/dx: full correlation of the cotangent with the flipped kernel,
    # channels swapped.
    gpad = pad_nd(g, ((0, 0), (0, 0), (kh - 1 - pad,) * 2, (kw - 1 - pad,) * 2))
    wflip = permute(flip_spatial(w), (1, 0, 2, 3))
    dx = conv2d(gpad, wflip, padding=0)
    # d/dw: correlate padded input with the cotangent, batch and channel
    # axes exchanged so the batch dim plays the role of input channels.
    xp = pad_nd(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    dw = permute(conv2d(permute(xp, (1, 0, 2, 3)),
                        permute(g, (1, 0, 2, 3)), padding=0),
                 (1, 0, 2, 3))
    return [(0, dx), (1, dw)]


_op("conv2d", _conv2d_fwd, _conv2d_vjp)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias (C,) across an NCHW tensor."""
    g = _graph_of(x, b)
    x, b = _wrap(g, x), _wrap(g, b)
    if x.data.ndim != 4 or b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ValueError(
            f"bias_add expects NCHW and (C,), got {x.shape} and {b.shape}")
    return _emit(g, "bias_add", [x, b], {})


def channel_sum(x: Tensor) -> Tensor:
    """Sum an NCHW tensor over batch and spatial axes, leaving (C,)."""
    if x.data.ndim != 4:
        raise ValueError(f"channel_sum expects NCHW, got {x.shape}")
    return _emit(x.graph, "channel_sum", [x], {})


def _channel_sum_vjp(g, ins, out, p):
    zeros = g.graph.leaf(np.zeros(ins[0].shape))
    return [(0, bias_add(zeros, g))]


_op("bias_add", lambda p, x, b: x + b[None, :, None, None],
    lambda g, ins, out, p: [(0, g), (1, channel_sum(g))])
_op("channel_sum", lambda p, x: x.sum(axis=(0, 2, 3)), _channel_sum_vjp)


# ---------------------------------------------------------------------------
# pooling

def avgpool2x2(x: Tensor) -> Tensor:
    """2x2 average pooling, stride 2; spatial extents must be even."""
    if x.data.ndim != 4:
        raise ValueError(f"avgpool2x2 expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2x2 needs even spatial extents, got {x.shape}")
    return _emit(x.graph, "avgpool2x2", [x], {})


def upsample2x2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x duplication of both spatial axes."""
    if x.data.ndim != 4:
        raise ValueError(f"upsample2x2 expects NCHW, got {x.shape}")
    return _emit(x.graph, "upsample2x2", [x], {})


def _avgpool_fwd(p, v):
    n, c, h, w = v.shape
    return v.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


_op("avgpool2x2", _avgpool_fwd,
    lambda g, ins, out, p: [(0, scalar_mul(upsample2x2(g), 0.25))])
_op("upsample2x2", lambda p, v: np.repeat(np.repeat(v, 2, axis=2), 2, axis=3),
    lambda g, ins, out, p: [(0, scalar_mul(avgpool2x2(g), 4.0))])


# ---------------------------------------------------------------------------
# shape ops

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != x.data.size:
        raise ValueError(f"cannot reshape {x.shape} to {shape}")
    return _emit(x.graph, "reshape", [x], {"shape": shape})


_op("reshape", lambda p, v: v.reshape(p["shape"]),
    lambda g, ins, out, p: [(0, reshape(g, ins[0].shape))])


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ValueError(f"permute axes {axes} invalid for shape {x.shape}")
    return _emit(x.graph, "permute", [x], {"axes": axes})


def _permute_vjp(g, ins, out, p):
    inv = tuple(np.argsort(p["axes"]))
    return [(0, permute(g, inv))]


_op("permute", lambda p, v: np.transpose(v, p["axes"]), _permute_vjp)


def flip_spatial(x: Tensor) -> Tensor:
    """Reverse the last two axes."""
    if x.data.ndim < 2:
        raise ValueError(f"flip_spatial needs >= 2 axes, got {x.shape}")
    return _emit(x.graph, "flip_spatial", [x], {})


_op("flip_spatial", lambda p, v: v[..., ::-1, ::-1],
    lambda g, ins, out, p: [(0, flip_spatial(g))])


def pad_nd(x: Tensor, pad_width) -> Tensor:
    """Zero padding; pad_width is a (before, after) pair per axis."""
    pw = tuple((int(b), int(a)) for b, a in pad_width)
    if len(pw) != x.data.ndim:
        raise ValueError(
            f"pad_nd got {len(pw)} axis pairs for shape {x.shape}")
    if any(b < 0 or a < 0 for b, a in pw):
        raise ValueError("pad_nd pad widths must be non-negative")
    return _emit(x.graph, "pad_nd", [x], {"pad_width": pw})


def _pad_vjp(g, ins, out, p):
    starts = [b for b, _ in p["pad_width"]]
    stops = [b + d for (b, _), d in zip(p["pad_width"], ins[0].shape)]
    return [(0, slice_nd(g, starts, stops))]


_op("pad_nd", lambda p, v: np.pad(v, p["pad_width"]), _pad_vjp)


def slice_nd(x: Tensor, starts, stops) -> Tensor:
    """Rectangular slice [start, stop) along every axis."""
    starts = tuple(int(s) for s in starts)
    stops = tuple(int(s) for s in stops)
    if len(starts) != x.data.ndim or len(stops) != x.data.ndim:
        raise ValueError(
            f"slice_nd needs bounds for all {x.data.ndim} axes of {x.shape}")
    for s, e, d in zip(starts, stops, x.shape):
        if not (0 <= s < e <= d):
            raise ValueError(
                f"out-of-bounds slice [{s}:{e}] for extent {d} in {x.shape}")
    return _emit(x.graph, "slice_nd", [x], {"starts": starts, "stops": stops})


def _slice_vjp(g, ins, out, p):
    pw = [(s, d - e) for s, e, d in zip(p["starts"], p["stops"], ins[0].shape)]
    return [(0, pad_nd(g, pw))]


_op("slice_nd",
    lambda p, v: v[tuple(builtins.slice(s, e)
                         for s, e in zip(p["starts"], p["stops"]))].copy(),
    _slice_vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    g = _graph_of(*tensors)
    tensors = [_wrap(g, t) for t in tensors]
    nd = tensors[0].data.ndim
    if not 0 <= axis < nd:
        raise ValueError(f"concat axis {axis} invalid for {tensors[0].shape}")
    for t in tensors[1:]:
        if t.data.ndim != nd or any(
                i != axis and t.shape[i] != tensors[0].shape[i]
                for i in range(nd)):
            raise ValueError(
                f"concat shapes {tensors[0].shape} and {t.shape} "
                f"differ off axis {axis}")
    return _emit(g, "concat", tensors, {"axis": axis})


def _concat_vjp(g, ins, out, p):
    axis = p["axis"]
    contribs = []
    offset = 0
    for pos, t in enumerate(ins):
        starts = [0] * t.data.ndim
        stops = list(t.shape)
        starts[axis] = offset
        stops[axis] = offset + t.shape[axis]
        contribs.append((pos, slice_nd(g, starts, stops)))
        offset += t.shape[axis]
    return contribs


_op("concat", lambda p, *vs: np.concatenate(vs, axis=p["axis"]), _concat_vjp)


# ---------------------------------------------------------------------------
# softmax

def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log softmax of an (N, C) tensor, computed stably."""
    if x.data.ndim != 2:
        raise ValueError(f"log_softmax expects (N, C), got {x.shape}")
    return _emit(x.graph, "log_softmax", [x], {})


def _log_softmax_fwd(p, v):
    shifted = v - v.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _log_softmax_vjp(g, ins, out, p):
    # dx = g - softmax * rowsum(g); rowsum expanded via a ones matmul
    c = out.shape[1]
    ones = g.graph.leaf(np.ones((c, c)))
    rowsum = matmul(g, ones)
    return [(0, sub(g, mul(exp(out), rowsum)))]


_op("log_softmax", _log_softmax_fwd, _log_softmax_vjp)


# ---------------------------------------------------------------------------
# composites

def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.data.size,))


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dot expects equal-length vectors, got {a.shape} "
                         f"and {b.shape}")
    return sum(mul(a, b))


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm.  Not differentiable at exactly zero."""
    return pow_const(sum(mul(x, x)), 0.5)


def l1_norm(x: Tensor) -> Tensor:
    return sum(absolute(x))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross entropy of (N, C) logits.

    labels may be integer class ids (shape (N,) or scalar) or an (N, C)
    array of soft label weights; rows of soft labels should sum to one.
    Soft labels may be a traced Tensor so loss can flow into them.
    """
    ls = log_softmax(logits)
    n, c = logits.shape
    if isinstance(labels, Tensor):
        weights = labels
        if weights.shape != (n, c):
            raise ValueError(
                f"soft labels shape {weights.shape} != logits {logits.shape}")
    else:
        idx = np.atleast_1d(np.asarray(labels))
        if idx.shape != (n,):
            raise ValueError(f"labels shape {idx.shape} incompatible with "
                             f"logits {logits.shape}")
        if idx.min() < 0 or idx.max() >= c:
            raise ValueError(f"label out of range for {c} classes")
        onehot = np.zeros((n, c))
        onehot[np.arange(n), idx.astype(int)] = 1.0
        weights = logits.graph.leaf(onehot)
    return scalar_mul(sum(mul(ls, weights)), -1.0 / n)


def softmax(x: Tensor) -> Tensor:
    return exp(log_softmax(x))


# ---------------------------------------------------------------------------
# backward

def backward(output: Tensor, wrt) -> list[Tensor]:
    """Gradients of a scalar output w.r.t. each tensor in wrt.

    Returned tensors live on the same graph and are built from ordinary ops,
    so they can be differentiated again.  A wrt tensor must be an ancestor
    of the output; if its gradient path is structurally zero (e.g. it only
    feeds a mask) a zeros tensor is returned.
    """
    if output.data.shape != ():
        raise ValueError(
            f"backward needs a scalar output, got shape {output.shape}")
    graph = output.graph
    wrt = list(wrt)
    for w in wrt:
        if w.graph is not graph:
            raise ValueError("wrt tensor belongs to a different graph")

    ancestors = _ancestors(graph, output.node_id)
    for w in wrt:
        if w.node_id not in ancestors:
            raise ValueError(
                f"tensor at node {w.node_id} (shape {w.shape}) is not an "
                "ancestor of the output")

    cotangents: dict[int, Tensor] = {output.node_id: graph.leaf(1.0)}
    for nid in range(output.node_id, -1, -1):
        g = cotangents.get(nid)
        if g is None:
            continue
        node = graph.nodes[nid]
        if node.op == "leaf":
            continue
        inputs = [Tensor(graph, i) for i in node.inputs]
        out_t = Tensor(graph, nid)
        for pos, contrib in _VJP[node.op](g, inputs, out_t, node.params):
            iid = node.inputs[pos]
            prev = cotangents.get(iid)
            cotangents[iid] = contrib if prev is None else add(prev, contrib)

    grads = []
    for w in wrt:
        got = cotangents.get(w.node_id)
        if got is None:
            got = graph.leaf(np.zeros(w.shape))
        grads.append(got)
    return grads


def _ancestors(graph: Graph, root: int) -> set:
    seen = {root}
    stack = [root]
    while stack:
        nid = stack.pop()
        for i in graph.nodes[nid].inputs:
            if i not in seen:
                seen.add(i)
                stack.append(i)
    return seen


# ---------------------------------------------------------------------------
# finite-difference oracle

def finite_diff_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an ndarray.

    The reference oracle that backward() is tested against.  f must return
    a finite python float for every probe point.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fp, fm = float(f(xp)), float(f(xm))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite probe at index {idx}")
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad
