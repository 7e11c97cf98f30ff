"""Reverse-mode automatic differentiation over dense float64 tensors.

A :class:`Graph` is an append-only list of op records; parents always precede
children, so node order doubles as topological order. :func:`forward`
evaluates the graph for a set of leaf bindings, :func:`backward` returns
d(output)/d(leaf) for a scalar output, and :func:`backward_rescale` runs the
same sweep with every nonlinearity's local derivative replaced by its finite
difference between an actual and a reference evaluation (falling back to the
true derivative where the input difference is below ``RESCALE_EPS``).

The op set is intentionally small: exactly what the attention classifier
needs, with no implicit broadcasting (use ``reshape``/``transpose``). The
softmax rescale rule is applied per output element against its own
pre-activation element; that diagonal treatment is an approximation and is
the one knob :func:`backward_rescale` does not expose.

Graphs are immutable once built and hold no evaluation state, so a single
graph may be evaluated concurrently on disjoint bindings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import GraphError

RESCALE_EPS = 1e-7

_BINARY = ("add", "mul", "matmul")
_KINDS = (
    "leaf",
    "const",
    "add",
    "mul",
    "matmul",
    "relu",
    "softmax",
    "gather",
    "scale",
    "mean",
    "reshape",
    "transpose",
    "cross_entropy",
)


def as_tensor(value, context="tensor"):
    """Coerce to a finite float64 ndarray; reject NaN/inf."""
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise GraphError(f"{context}: non-finite values")
    return arr


@dataclass(frozen=True)
class Node:
    kind: str
    parents: tuple[int, ...] = ()
    name: str | None = None          # leaf
    value: np.ndarray | None = None  # const payload
    shape: tuple[int, ...] | None = None  # leaf declared shape / reshape target
    axes: tuple[int, ...] | None = None   # transpose
    axis: int | None = None               # mean (None = all elements)
    factor: float = 1.0                   # scale
    indices: np.ndarray | None = None     # gather (int64, 1-D)
    label: int | None = None              # cross_entropy target, 0-based


class Graph:
    """Computation graph builder. Methods append a node and return its index."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[str, int] = {}

    def __len__(self):
        return len(self.nodes)

    @property
    def leaves(self) -> dict[str, int]:
        return dict(self._leaves)

    def _push(self, node: Node) -> int:
        for p in node.parents:
            if not 0 <= p < len(self.nodes):
                raise GraphError(f"parent {p} out of range for new node {len(self.nodes)}")
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, name: str, shape) -> int:
        if name in self._leaves:
            raise GraphError(f"duplicate leaf name {name!r}")
        idx = self._push(Node("leaf", name=name, shape=tuple(int(s) for s in shape)))
        self._leaves[name] = idx
        return idx

    def const(self, value) -> int:
        # freeze a view so the graph cannot mutate the caller's array, while
        # the caller's own handle (e.g. live model parameters) stays writable
        arr = as_tensor(value, "const").view()
        arr.setflags(write=False)
        return self._push(Node("const", value=arr))

    def add(self, a: int, b: int) -> int:
        return self._push(Node("add", (a, b)))

    def mul(self, a: int, b: int) -> int:
        return self._push(Node("mul", (a, b)))

    def matmul(self, a: int, b: int) -> int:
        return self._push(Node("matmul", (a, b)))

    def relu(self, a: int) -> int:
        return self._push(Node("relu", (a,)))

    def softmax(self, a: int) -> int:
        """Softmax over the last axis."""
        return self._push(Node("softmax", (a,)))

    def gather(self, table: int, indices) -> int:
        idx = np.asarray(indices, dtype=np.int64).view()
        if idx.ndim != 1:
            raise GraphError("gather indices must be 1-D")
        idx.setflags(write=False)
        return self._push(Node("gather", (table,), indices=idx))

    def scale(self, a: int, factor: float) -> int:
        return self._push(Node("scale", (a,), factor=float(factor)))

    def mean(self, a: int, axis: int | None = None) -> int:
        return self._push(Node("mean", (a,), axis=axis))

    def reshape(self, a: int, shape) -> int:
        return self._push(Node("reshape", (a,), shape=tuple(int(s) for s in shape)))

    def transpose(self, a: int, axes) -> int:
        return self._push(Node("transpose", (a,), axes=tuple(int(s) for s in axes)))

    def cross_entropy(self, logits: int, label: int) -> int:
        return self._push(Node("cross_entropy", (logits,), label=int(label)))

    # Conveniences built from the core ops (shapes are known at build time).

    def sum(self, a: int, count: int, axis: int | None = None) -> int:
        """Sum over `axis` expressed as mean * count; `count` is the reduced size."""
        return self.scale(self.mean(a, axis), float(count))

    def pick(self, vec: int, index: int, length: int) -> int:
        """Scalar element of a 1-D node via one-hot mask + mean + scale."""
        onehot = np.zeros(length)
        onehot[index] = 1.0
        masked = self.mul(vec, self.const(onehot))
        return self.scale(self.mean(masked), float(length))


def forward(graph: Graph, bindings: dict[str, np.ndarray]) -> list[np.ndarray]:
    """Evaluate every node; returns per-node values in node order."""
    for name in graph.leaves:
        if name not in bindings:
            raise GraphError(f"leaf {name!r} not bound")
    values: list[np.ndarray] = []
    for i, node in enumerate(graph.nodes):
        try:
            values.append(_eval_node(node, values, bindings))
        except GraphError:
            raise
        except ValueError as exc:
            raise GraphError(f"node {i} ({node.kind}): {exc}") from exc
        v = values[-1]
        if not np.all(np.isfinite(v)):
            raise GraphError(f"node {i} ({node.kind}): non-finite intermediate")
    return values


def _eval_node(node: Node, values, bindings):
    kind = node.kind
    if kind == "leaf":
        arr = as_tensor(bindings[node.name], f"leaf {node.name!r}")
        if arr.shape != node.shape:
            raise GraphError(
                f"leaf {node.name!r}: bound shape {arr.shape} != declared {node.shape}"
            )
        return arr
    if kind == "const":
        return node.value
    if kind in _BINARY:
        a, b = values[node.parents[0]], values[node.parents[1]]
        if kind == "add" or kind == "mul":
            if a.shape != b.shape:
                raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
            return a + b if kind == "add" else a * b
        if a.ndim not in (2, 3) or a.ndim != b.ndim:
            raise ValueError(f"matmul needs two 2-D or two 3-D operands, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
            raise ValueError(f"matmul shapes incompatible: {a.shape} @ {b.shape}")
        return a @ b
    x = values[node.parents[0]]
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "softmax":
        n = x.shape[-1]
        return _kernels.softmax_rows(np.ascontiguousarray(x.reshape(-1, n))).reshape(x.shape)
    if kind == "gather":
        if x.ndim != 2:
            raise ValueError(f"gather table must be 2-D, got {x.shape}")
        idx = node.indices
        if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
            raise ValueError(f"gather index out of range for table of {x.shape[0]} rows")
        return x[idx]
    if kind == "scale":
        return x * node.factor
    if kind == "mean":
        return np.asarray(x.mean(axis=node.axis))
    if kind == "reshape":
        if int(np.prod(node.shape)) != x.size:
            raise ValueError(f"cannot reshape {x.shape} to {node.shape}")
        return x.reshape(node.shape)
    if kind == "transpose":
        return np.ascontiguousarray(np.transpose(x, node.axes))
    if kind == "cross_entropy":
        if x.ndim != 1:
            raise ValueError(f"cross_entropy expects 1-D logits, got {x.shape}")
        if not 0 <= node.label < x.shape[0]:
            raise ValueError(f"label {node.label} out of range for {x.shape[0]} classes")
        m = x.max()
        lse = m + np.log(np.exp(x - m).sum())
        return np.asarray(lse - x[node.label])
    raise GraphError(f"unknown op kind {kind!r}")


def _softmax_1d(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def _needs_grad(graph: Graph) -> list[bool]:
    needs = [False] * len(graph.nodes)
    for i, node in enumerate(graph.nodes):
        if node.kind == "leaf":
            needs[i] = True
        else:
            needs[i] = any(needs[p] for p in node.parents)
    return needs


def backward(graph: Graph, values, output: int) -> dict[str, np.ndarray]:
    """d(output)/d(leaf) for every leaf; unused leaves get zero tensors."""
    return _backprop(graph, values, output, None)


def backward_rescale(
    graph: Graph, values, output: int, reference_values
) -> dict[str, np.ndarray]:
    """Like :func:`backward`, but relu/softmax propagate finite-difference
    multipliers between the actual and reference evaluations."""
    if reference_values is None or len(reference_values) != len(values):
        raise GraphError("reference values missing or mismatched")
    return _backprop(graph, values, output, reference_values)


def _backprop(graph, values, output, ref):
    if not 0 <= output < len(graph.nodes):
        raise GraphError(f"output node {output} out of range")
    out_val = values[output]
    if out_val.size != 1:
        raise GraphError(f"output node must be scalar, has shape {out_val.shape}")
    needs = _needs_grad(graph)
    grads: list[np.ndarray | None] = [None] * len(graph.nodes)
    grads[output] = np.ones_like(out_val)

    def push(parent, grad):
        if not needs[parent]:
            return
        if grads[parent] is None:
            grads[parent] = grad
        else:
            grads[parent] = grads[parent] + grad

    for i in range(len(graph.nodes) - 1, -1, -1):
        g = grads[i]
        node = graph.nodes[i]
        if g is None or not needs[i] or node.kind in ("leaf", "const"):
            continue
        kind = node.kind
        if kind == "add":
            push(node.parents[0], g)
            push(node.parents[1], g)
        elif kind == "mul":
            a, b = node.parents
            push(a, g * values[b])
            push(b, g * values[a])
        elif kind == "matmul":
            a, b = node.parents
            va, vb = values[a], values[b]
            if va.ndim == 2:
                push(a, g @ vb.T)
                push(b, va.T @ g)
            else:
                push(a, g @ vb.transpose(0, 2, 1))
                push(b, va.transpose(0, 2, 1) @ g)
        elif kind == "relu":
            p = node.parents[0]
            x = values[p]
            exact = (x > 0).astype(np.float64)
            if ref is None:
                push(p, g * exact)
            else:
                mult = _kernels.rescale_multipliers(
                    np.maximum(x, 0.0) - np.maximum(ref[p], 0.0),
                    x - ref[p],
                    exact,
                    RESCALE_EPS,
                )
                push(p, g * mult)
        elif kind == "softmax":
            p = node.parents[0]
            s = values[i]
            if ref is None:
                n = s.shape[-1]
                gx = _kernels.softmax_grad_rows(
                    np.ascontiguousarray(s.reshape(-1, n)),
                    np.ascontiguousarray(g.reshape(-1, n)),
                ).reshape(s.shape)
                push(p, gx)
            else:
                mult = _kernels.rescale_multipliers(
                    s - ref[i], values[p] - ref[p], s * (1.0 - s), RESCALE_EPS
                )
                push(p, g * mult)
        elif kind == "gather":
            p = node.parents[0]
            table_grad = np.zeros_like(values[p])
            _kernels.scatter_add_rows(
                table_grad, node.indices, np.ascontiguousarray(g)
            )
            push(p, table_grad)
        elif kind == "scale":
            push(node.parents[0], g * node.factor)
        elif kind == "mean":
            p = node.parents[0]
            shape = values[p].shape
            if node.axis is None:
                push(p, np.full(shape, float(g) / values[p].size))
            else:
                n = shape[node.axis]
                push(p, np.broadcast_to(np.expand_dims(g / n, node.axis), shape).copy())
        elif kind == "reshape":
            push(node.parents[0], g.reshape(values[node.parents[0]].shape))
        elif kind == "transpose":
            push(node.parents[0], np.transpose(g, np.argsort(node.axes)))
        elif kind == "cross_entropy":
            p = node.parents[0]
            probs = _softmax_1d(values[p])
            onehot = np.zeros_like(probs)
            onehot[node.label] = 1.0
            push(p, float(g) * (probs - onehot))
        else:
            raise GraphError(f"no backward rule for {kind!r}")

    result = {}
    for name, idx in graph.leaves.items():
        if grads[idx] is None:
            result[name] = np.zeros(graph.nodes[idx].shape)
        else:
            result[name] = grads[idx]
    return result


def finite_diff_check(
    graph: Graph,
    bindings: dict[str, np.ndarray],
    output: int,
    leaf: str,
    eps: float = 1e-4,
) -> float:
    """Max relative error of `backward` against central differences on `leaf`."""
    if eps <= 0:
        raise GraphError("eps must be positive")
    if leaf not in graph.leaves:
        raise GraphError(f"unknown leaf {leaf!r}")
    values = forward(graph, bindings)
    analytic = backward(graph, values, output)[leaf]
    x = as_tensor(bindings[leaf], f"leaf {leaf!r}").copy()
    probe = dict(bindings)
    worst = 0.0
    for k in range(x.size):
        orig = x.flat[k]
        x.flat[k] = orig + eps
        probe[leaf] = x
        hi = float(forward(graph, probe)[output])
        x.flat[k] = orig - eps
        lo = float(forward(graph, probe)[output])
        x.flat[k] = orig
        numeric = (hi - lo) / (2.0 * eps)
        a = float(analytic.flat[k])
        err = abs(numeric - a) / max(abs(numeric), abs(a), 1e-8)
        worst = max(worst, err)
    return worst
