"""Define-by-run computation graph with reverse-mode differentiation.

Every differentiable op appends one :class:`Node` to the active :class:`Graph`
(the tape).  Nodes are only recorded when at least one input requires a
gradient, so evaluation outside a graph, or on constants, costs nothing
beyond the numpy work itself.
"""
from __future__ import annotations

import threading

import numpy as np


class GraphError(RuntimeError):
    """Misuse of the graph: backward without forward, non-scalar loss, etc."""


class ShapeError(ValueError):
    """Operand shapes incompatible with an op signature."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf reached a place where finite values are required."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def validate(self) -> None:
        """Raise :class:`NonFiniteError` if any value is NaN or infinite."""
        if not np.all(np.isfinite(self.data)):
            label = self.name or "tensor"
            raise NonFiniteError(f"{label} of shape {self.shape} holds non-finite values")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; the ops module installs the implementations
    def __add__(self, other):
        return _ops().add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __neg__(self):
        return _ops().neg(self)

    def __matmul__(self, other):
        return _ops().matmul(self, other)


def _ops():
    from . import ops

    return ops


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Node:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn

    def __repr__(self) -> str:
        return f"Node({self.op}, inputs={self.inputs})"


_LOCAL = threading.local()   # each thread records onto its own graph stack


def _stack() -> list:
    st = getattr(_LOCAL, "stack", None)
    if st is None:
        st = _LOCAL.stack = []
    return st


def active_graph() -> "Graph | None":
    st = _stack()
    return st[-1] if st else None


class Graph:
    """Tape of operation records, in creation (hence topological) order.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded on this graph::

        with Graph() as g:
            loss = mean_reduce(leaky_relu(x @ w))
        grads = g.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._index: dict[int, int] = {}

    def __enter__(self) -> "Graph":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def node_id(self, t: Tensor) -> int | None:
        return self._index.get(id(t))

    def _ref(self, t: Tensor) -> int:
        idx = self._index.get(id(t))
        if idx is None:
            if not np.all(np.isfinite(t.data)):
                raise NonFiniteError(
                    f"leaf node #{len(self.nodes)} ({t.name or 'unnamed'}, shape {t.shape}) "
                    "holds non-finite values")
            idx = len(self.nodes)
            self.nodes.append(Node("leaf", (), t, None))
            self._index[id(t)] = idx
        return idx

    def record(self, op: str, inputs, out: Tensor, backward_fn) -> None:
        ids = tuple(self._ref(t) for t in inputs)
        self._index[id(out)] = len(self.nodes)
        self.nodes.append(Node(op, ids, out, backward_fn))

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        return backward(self, loss)


def record(op: str, inputs, value: np.ndarray, backward_fn) -> Tensor:
    """Wrap ``value`` as the output of ``op`` and tape it if needed.

    ``backward_fn(g, needs)`` receives the upstream gradient and a tuple of
    booleans telling which inputs require a gradient; it returns one array
    (or None) per input.
    """
    needs = tuple(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=any(needs))
    g = active_graph()
    if g is not None and out.requires_grad:
        g.record(op, inputs, out, lambda grad: backward_fn(grad, needs))
    return out


def next_node_label(op: str) -> str:
    g = active_graph()
    return f"{op} (node #{len(g.nodes)})" if g is not None else f"{op} (untaped)"


def backward(graph: Graph, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar ``loss``.

    Returns ``{tensor: gradient}`` for every leaf that requires a gradient
    and reached the loss; those leaves also get ``.grad`` set.  Fan-out
    gradients are summed.
    """
    idx = graph.node_id(loss)
    if idx is None:
        raise GraphError("loss was not produced by a forward pass on this graph")
    if loss.data.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.shape}")
    pending: dict[int, np.ndarray] = {idx: np.ones_like(loss.data)}
    result: dict[Tensor, np.ndarray] = {}
    nodes = graph.nodes
    for i in range(idx, -1, -1):
        g = pending.pop(i, None)
        if g is None:
            continue
        node = nodes[i]
        if node.backward_fn is None:
            if node.output.requires_grad:
                result[node.output] = g
            continue
        for j, gj in zip(node.inputs, node.backward_fn(g)):
            if gj is None:
                continue
            prev = pending.get(j)
            pending[j] = gj if prev is None else prev + gj
    for t, g in result.items():
        t.grad = g
    return result


def forward(fn, inputs: dict[str, Tensor]) -> tuple[Graph, dict[str, Tensor]]:
    """Evaluate ``fn(**inputs)`` on a fresh graph.

    ``fn`` returns a Tensor or a dict of Tensors; the result is normalized to
    a dict (a single output is named ``"out"``).
    """
    for name, t in inputs.items():
        if not np.all(np.isfinite(as_tensor(t).data)):
            raise NonFiniteError(f"input {name!r} holds non-finite values")
    with Graph() as g:
        out = fn(**inputs)
    if isinstance(out, Tensor):
        out = {"out": out}
    return g, out
