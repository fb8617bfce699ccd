"""Tensor storage and the reverse-mode tape.

Every differentiable operation produces a :class:`Tensor` whose ``node``
records the inputs and a closure mapping the output gradient to input
gradients. Node ids come from a global counter, so sorting the nodes
reachable from a loss by id gives a valid topological order.
"""

import contextlib
import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ShapeError

_node_ids = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, frozen nets)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple
    output_id: int  # id() of the result; holding the tensor itself would form a cycle
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    id: int = field(default_factory=lambda: next(_node_ids))


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar over the primitives defined below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """Named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, requires_grad: bool = True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=requires_grad)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(op: str, data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    """Wrap ``data`` and record a node when any input needs a gradient."""
    out = Tensor(data)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, id(out), backward_fn)
    return out


class Graph:
    """Nodes reachable from an output, in insertion (topological) order."""

    def __init__(self, nodes: Sequence[Node]):
        self.nodes = list(nodes)

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        seen = {}
        stack = [output]
        while stack:
            t = stack.pop()
            n = t.node
            if n is None or n.id in seen:
                continue
            seen[n.id] = n
            stack.extend(n.inputs)
        return cls(sorted(seen.values(), key=lambda n: n.id))

    def __len__(self):
        return len(self.nodes)

    def check_acyclic(self) -> bool:
        pos = {n.id: i for i, n in enumerate(self.nodes)}
        for i, n in enumerate(self.nodes):
            for t in n.inputs:
                if t.node is not None and pos[t.node.id] >= i:
                    return False
        return True


def backward(loss: Tensor, graph: Optional[Graph] = None) -> Graph:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Leaf contributions are summed per traversal before being added to the
    accumulator, so running backward twice doubles each gradient exactly.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if graph is None:
        graph = Graph.from_output(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    leaf_grads = {}
    leaves = {}
    if loss.node is None and loss.requires_grad:
        leaf_grads[id(loss)] = grads[id(loss)]
        leaves[id(loss)] = loss
    for node in reversed(graph.nodes):
        g = grads.pop(node.output_id, None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if t.node is None:
                leaves[key] = t
                target = leaf_grads
            else:
                target = grads
            prev = target.get(key)
            target[key] = gi if prev is None else prev + gi
    for key, g in leaf_grads.items():
        t = leaves[key]
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g
    return graph


# --- elementwise and structural primitives -------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def neg(a: Tensor) -> Tensor:
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result("mul", ad * bd, (a, b), bw)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return make_result(
        "sum", np.asarray(a.data.sum()), (a,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return make_result(
        "mean", np.asarray(a.data.mean()), (a,),
        lambda g: (np.full(shape, float(g) / n),),
    )


def sum_rows(a: Tensor) -> Tensor:
    """Sum over the last axis: [N, K] -> [N]."""
    shape = a.shape
    return make_result(
        "sum_rows", a.data.sum(axis=-1), (a,),
        lambda g: (np.broadcast_to(g[..., None], shape).copy(),),
    )


def reshape(a: Tensor, shape: tuple) -> Tensor:
    old = a.shape
    return make_result(
        "reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),),
    )


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return make_result("getitem", np.array(a.data[index]), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def log(p: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log of a probability, argument clamped to at least ``floor``."""
    pd = p.data
    clamped = np.maximum(pd, floor)

    def bw(g):
        return (np.where(pd > floor, g / clamped, 0.0),)

    return make_result("log", np.log(clamped), (p,), bw)
