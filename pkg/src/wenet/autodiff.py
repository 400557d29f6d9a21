"""Dense float64 tensors with a tape for reverse-mode differentiation.

Operations executed while a :class:`ComputationRecord` is active (see
:func:`record`) append a node to the record whenever at least one input is
tracked, i.e. it is a parameter (``requires_grad=True``) or the output of an
earlier recorded node. :func:`backward` then walks the record in reverse and
accumulates vector-Jacobian products.

Outside of a record every operation is a plain numpy computation, which is
what greedy decoding uses.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import ArgumentError, ConsistencyError, DimensionError, OutOfRangeError

__all__ = [
    "Tensor",
    "ComputationRecord",
    "record",
    "no_record",
    "active_record",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "sigmoid",
    "tanh",
    "pointwise_unary",
    "softmax",
    "concat",
    "stack",
    "row",
    "embedding_lookup",
    "cross_entropy_loss",
    "tensor_sum",
    "mean",
    "detach",
    "backward",
    "gradient_check",
]

_local = threading.local()


class _Node:
    __slots__ = ("kind", "inputs", "vjp")

    def __init__(self, kind, inputs, vjp):
        self.kind = kind
        self.inputs = inputs
        self.vjp = vjp


class ComputationRecord:
    """Append-only list of recorded primitives for one forward/backward pass.

    Nodes are appended in execution order, so every node's inputs precede it.
    After :func:`backward`, ``gradients`` maps node ids to gradient arrays.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.gradients: dict[int, np.ndarray] = {}
        self._leaf_ids: dict[int, int] = {}
        # keeps leaves alive so their id() stays unique for the record's lifetime
        self._leaves: list[Tensor] = []

    def __len__(self):
        return len(self.nodes)

    def node_id_of(self, t: "Tensor") -> int:
        """Node id of ``t`` in this record, or -1 when ``t`` is untracked."""
        if t._record is self:
            return t.node_id
        if t.requires_grad:
            key = id(t)
            nid = self._leaf_ids.get(key)
            if nid is None:
                nid = len(self.nodes)
                self.nodes.append(_Node("leaf", (), None))
                self._leaf_ids[key] = nid
                self._leaves.append(t)
            return nid
        return -1


def active_record() -> ComputationRecord | None:
    return getattr(_local, "record", None)


@contextmanager
def record():
    """Activate a fresh :class:`ComputationRecord` for the current thread."""
    previous = active_record()
    rec = ComputationRecord()
    _local.record = rec
    try:
        yield rec
    finally:
        _local.record = previous


@contextmanager
def no_record():
    """Suspend recording; operations inside produce untracked tensors."""
    previous = active_record()
    _local.record = None
    try:
        yield
    finally:
        _local.record = previous


class Tensor:
    """A dense float64 array that may participate in a computation record."""

    __slots__ = ("data", "requires_grad", "node_id", "_record")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._record: ComputationRecord | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return len(self.data)

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return row(self, index)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(kind: str, data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.node_id = None
    out._record = None
    rec = active_record()
    if rec is not None:
        ids = tuple(rec.node_id_of(t) for t in inputs)
        if any(i >= 0 for i in ids):
            out.node_id = len(rec.nodes)
            rec.nodes.append(_Node(kind, ids, vjp))
            out._record = rec
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _elementwise(kind, op, a, b):
    try:
        return op(a.data, b.data)
    except ValueError:
        raise DimensionError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    return _emit("add", _elementwise("add", np.add, a, b), (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    return _emit("sub", _elementwise("sub", np.subtract, a, b), (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _emit("mul", _elementwise("mul", np.multiply, a, b), (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D and 2-D operands (vectors act as rows/columns)."""
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2) or ad.shape[-1] != bd.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {ad.shape} by {bd.shape}")

    def vjp(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, ad[:, None] * g
        if ad.ndim == 2:
            return g[:, None] * bd, ad.T @ g
        return g * bd, g * ad

    return _emit("matmul", ad @ bd, (a, b), vjp)


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    y = _stable_sigmoid(x.data)
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def pointwise_unary(x, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ArgumentError(f"unknown pointwise kind {kind!r}")


def softmax(x) -> Tensor:
    """Softmax over the last axis, with max subtraction."""
    x = _as_tensor(x)
    if x.size == 0:
        raise ArgumentError("softmax of an empty tensor")
    e = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return _emit("softmax", y, (x,),
                 lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ArgumentError("concat of an empty list")
    ndim = parts[0].ndim
    if ndim == 0:
        raise DimensionError("concat: scalars cannot be concatenated")
    axis = axis % ndim
    for p in parts:
        if p.ndim != ndim or any(
            p.shape[i] != parts[0].shape[i] for i in range(ndim) if i != axis
        ):
            shapes = [q.shape for q in parts]
            raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}")
    if len(parts) == 1:
        return parts[0]
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


def stack(parts: Sequence) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ArgumentError("stack of an empty list")
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise DimensionError(f"stack: shapes differ {[p.shape for p in parts]}")
    return _emit("stack", np.stack([p.data for p in parts]), parts, lambda g: tuple(g))


def row(x, index: int) -> Tensor:
    """Select entry ``index`` along the first axis."""
    x = _as_tensor(x)
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[index] = g
        return (out,)

    return _emit("row", x.data[index], (x,), vjp)


def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of ``table``; a scalar id returns a single row vector."""
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    n_rows = table.shape[0]
    bad = idx[(idx < 0) | (idx >= n_rows)]
    if bad.size:
        tid = int(bad.reshape(-1)[0])
        raise OutOfRangeError(f"token id {tid} out of range for table with {n_rows} rows", tid)
    shape = table.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("embedding", table.data[idx], (table,), vjp)


def cross_entropy_loss(logits, targets, ignore_id: int | None = 0) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax(logits).

    Positions whose target equals ``ignore_id`` contribute nothing.
    """
    logits = _as_tensor(logits)
    tgt = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or tgt.ndim != 1 or tgt.shape[0] != logits.shape[0]:
        raise DimensionError(
            f"cross_entropy_loss: logits {logits.shape} do not match targets {tgt.shape}"
        )
    if tgt.shape[0] == 0:
        raise ArgumentError("cross_entropy_loss needs at least one position")
    n_classes = logits.shape[1]
    bad = tgt[(tgt < 0) | (tgt >= n_classes)]
    if bad.size:
        raise OutOfRangeError(f"target id {int(bad[0])} out of range for {n_classes} classes",
                              int(bad[0]))
    keep = np.ones(tgt.shape[0], dtype=bool) if ignore_id is None else tgt != ignore_id
    count = int(keep.sum())
    if count == 0:
        raise ArgumentError("cross_entropy_loss: every position is ignored")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.nonzero(keep)[0]
    nll = log_norm[rows] - z[rows, tgt[rows]]
    loss = nll.sum() / count

    def vjp(g):
        p = np.exp(z - log_norm[:, None])
        p[rows, tgt[rows]] -= 1.0
        p[~keep] = 0.0
        return (p * (g / count),)

    return _emit("cross_entropy", np.asarray(loss), (logits,), vjp)


def tensor_sum(x) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    return _emit("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, g),))


def mean(x) -> Tensor:
    x = _as_tensor(x)
    shape, n = x.shape, x.size
    return _emit("mean", np.asarray(x.data.mean()), (x,),
                 lambda g: (np.full(shape, g / n),))


def detach(x) -> Tensor:
    """Copy of ``x`` cut off from the record (a stop-gradient)."""
    return Tensor(_as_tensor(x).data)


def backward(root: Tensor, params=None):
    """Reverse-accumulate gradients of the scalar ``root``.

    With ``params`` given as a mapping of name to tensor, returns a dict of
    gradient arrays keyed by name; parameters not reachable from ``root`` get
    zero arrays. A sequence of tensors gives a list in the same order. Without
    ``params``, returns the record's full ``{node_id: gradient}`` map.
    """
    if not isinstance(root, Tensor) or root.size != 1:
        shape = getattr(root, "shape", None)
        raise ArgumentError(f"backward needs a scalar root, got shape {shape}")
    rec = root._record
    if rec is None:
        raise ArgumentError("backward root is not part of any computation record")
    nodes = rec.nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    grads[root.node_id] = np.ones(root.shape)
    for k in range(root.node_id, -1, -1):
        g = grads[k]
        node = nodes[k]
        if g is None or node.vjp is None:
            continue
        for nid, ig in zip(node.inputs, node.vjp(g)):
            if nid < 0 or ig is None:
                continue
            prev = grads[nid]
            grads[nid] = ig if prev is None else prev + ig
    rec.gradients = {k: g for k, g in enumerate(grads) if g is not None}

    def grad_of(t: Tensor) -> np.ndarray:
        nid = rec._leaf_ids.get(id(t)) if t._record is not rec else t.node_id
        g = rec.gradients.get(nid) if nid is not None else None
        return np.zeros(t.shape) if g is None else g

    if params is None:
        return rec.gradients
    if isinstance(params, Mapping):
        return {name: grad_of(t) for name, t in params.items()}
    return [grad_of(t) for t in params]


def gradient_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    samples: int = 50,
    seed: int = 0,
) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` evaluates a scalar from the current values of ``params``; the check
    perturbs parameter entries in place. Tensors with more than ``samples``
    entries are checked on a random subset of ``samples`` coordinates.
    """
    if eps <= 0:
        raise ArgumentError("eps must be positive")
    with record():
        grads = backward(f(), params)
    with no_record():
        first, second = f().item(), f().item()
    if first != second:
        raise ConsistencyError(f"f is not deterministic: {first!r} != {second!r}")

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_record():
        for name, p in params.items():
            if not p.data.flags.c_contiguous:
                raise ArgumentError(f"parameter {name} is not contiguous")
            flat = p.data.reshape(-1)
            if flat.size <= samples:
                coords = range(flat.size)
            else:
                coords = rng.choice(flat.size, size=samples, replace=False)
            g_ad = grads[name].reshape(-1)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = f().item()
                flat[i] = orig - eps
                f_minus = f().item()
                flat[i] = orig
                g_fd = (f_plus - f_minus) / (2.0 * eps)
                err = abs(g_ad[i] - g_fd) / max(1e-8, abs(g_ad[i]) + abs(g_fd))
                worst = max(worst, err)
    return worst
