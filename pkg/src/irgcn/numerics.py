"""Minimal reverse-mode differentiation over dense float64 matrices.

Expressions are built symbolically from a closed set of operations and are
evaluated with :func:`forward`. Every value is a 2-D ``float64`` array, scalars
are ``(1, 1)``. Leaves are bound to concrete arrays when created and can be
rebound with :meth:`Node.bind`, so an expression graph can be evaluated
repeatedly (this is what :func:`grad_check` relies on).

>>> x = leaf([[2.0, 3.0]])
>>> y = const([[5.0, 7.0]])
>>> root = sum_all(mul(x, y))
>>> forward(root)
array([[31.]])
>>> backward(root)[x]
array([[5., 7.]])
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import ContractError, DimensionError

__all__ = [
    "Node",
    "leaf",
    "const",
    "matmul",
    "add",
    "relu",
    "concat_cols",
    "slice_cols",
    "mean_rows",
    "mul",
    "sum_all",
    "softplus",
    "row_lookup",
    "scale",
    "cos",
    "sin",
    "sqrt",
    "forward",
    "backward",
    "grad_check",
    "GradCheckReport",
]


def _as_matrix(value):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


class Node:
    """One vertex of an expression graph."""

    __slots__ = ("op", "inputs", "attrs", "shape", "value", "grad", "requires_grad", "name")

    def __init__(self, op, inputs, shape, attrs=None, requires_grad=False, name=None):
        self.op = op
        self.inputs = tuple(inputs)
        self.attrs = attrs or {}
        self.shape = shape
        self.value = None
        self.grad = None
        self.requires_grad = requires_grad or any(n.requires_grad for n in self.inputs)
        self.name = name

    def bind(self, value):
        if self.op != "input":
            raise ContractError("only input leaves can be rebound")
        arr = _as_matrix(value)
        if arr.shape != self.shape:
            raise DimensionError(f"cannot rebind leaf of shape {self.shape} to shape {arr.shape}")
        self.value = arr
        return self

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node({self.op}{label}, shape={self.shape})"


def leaf(value, requires_grad=True, name=None):
    arr = _as_matrix(value)
    node = Node("input", (), arr.shape, requires_grad=requires_grad, name=name)
    node.value = arr
    return node


def const(value, name=None):
    return leaf(value, requires_grad=False, name=name)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: operand shapes {a.shape} and {b.shape} are not aligned")
    return Node("matmul", (a, b), (a.shape[0], b.shape[1]))


def add(a, b):
    _same_shape("add", a, b)
    return Node("add", (a, b), a.shape)


def mul(a, b):
    """Elementwise product."""
    _same_shape("mul", a, b)
    return Node("mul", (a, b), a.shape)


def relu(a):
    return Node("relu", (a,), a.shape)


def concat_cols(*nodes):
    if not nodes:
        raise ContractError("concat_cols needs at least one operand")
    rows = nodes[0].shape[0]
    for n in nodes[1:]:
        if n.shape[0] != rows:
            raise DimensionError(
                f"concat_cols: operand shapes {nodes[0].shape} and {n.shape} differ in rows"
            )
    return Node("concat_cols", nodes, (rows, sum(n.shape[1] for n in nodes)))


def slice_cols(a, start, stop):
    if not 0 <= start <= stop <= a.shape[1]:
        raise DimensionError(f"slice_cols: [{start}:{stop}] out of range for shape {a.shape}")
    return Node("slice_cols", (a,), (a.shape[0], stop - start), {"start": start, "stop": stop})


def mean_rows(a):
    if a.shape[0] == 0:
        raise ContractError("mean_rows of an empty matrix")
    return Node("mean_rows", (a,), (1, a.shape[1]))


def sum_all(a):
    return Node("sum", (a,), (1, 1))


def softplus(a):
    return Node("softplus", (a,), a.shape)


def row_lookup(a, index):
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"row_lookup: index out of range for {a.shape[0]} rows")
    return Node("row_lookup", (a,), (idx.size, a.shape[1]), {"index": idx})


def scale(a, factor):
    return Node("scale", (a,), a.shape, {"factor": float(factor)})


def cos(a):
    return Node("cos", (a,), a.shape)


def sin(a):
    return Node("sin", (a,), a.shape)


def sqrt(a):
    """Square root of nonnegative entries; the derivative at 0 is taken as 0."""
    return Node("sqrt", (a,), a.shape)


def _eval(node):
    v = [n.value for n in node.inputs]
    op = node.op
    if op == "matmul":
        return v[0] @ v[1]
    if op == "add":
        return v[0] + v[1]
    if op == "mul":
        return v[0] * v[1]
    if op == "relu":
        return np.maximum(v[0], 0.0)
    if op == "concat_cols":
        return np.concatenate(v, axis=1)
    if op == "slice_cols":
        return v[0][:, node.attrs["start"]:node.attrs["stop"]].copy()
    if op == "mean_rows":
        # shifted by the first row so k identical rows average to that row exactly
        first = v[0][:1]
        return first + (v[0] - first).mean(axis=0, keepdims=True)
    if op == "sum":
        return np.array([[v[0].sum()]])
    if op == "softplus":
        return np.logaddexp(0.0, v[0])
    if op == "row_lookup":
        return v[0][node.attrs["index"]]
    if op == "scale":
        return v[0] * node.attrs["factor"]
    if op == "cos":
        return np.cos(v[0])
    if op == "sin":
        return np.sin(v[0])
    if op == "sqrt":
        if np.any(v[0] < 0):
            raise ValueError("sqrt of a negative entry")
        return np.sqrt(v[0])
    raise ContractError(f"unknown op {op!r}")


def _vjp(node, g):
    """Gradient contributions to each input of ``node`` given upstream ``g``."""
    v = [n.value for n in node.inputs]
    op = node.op
    if op == "matmul":
        return [g @ v[1].T, v[0].T @ g]
    if op == "add":
        return [g, g]
    if op == "mul":
        return [g * v[1], g * v[0]]
    if op == "relu":
        return [g * (v[0] > 0.0)]
    if op == "concat_cols":
        out, start = [], 0
        for x in v:
            out.append(g[:, start:start + x.shape[1]])
            start += x.shape[1]
        return out
    if op == "slice_cols":
        full = np.zeros_like(v[0])
        full[:, node.attrs["start"]:node.attrs["stop"]] = g
        return [full]
    if op == "mean_rows":
        return [np.repeat(g / v[0].shape[0], v[0].shape[0], axis=0)]
    if op == "sum":
        return [np.full_like(v[0], g[0, 0])]
    if op == "softplus":
        return [g * expit(v[0])]
    if op == "row_lookup":
        full = np.zeros_like(v[0])
        np.add.at(full, node.attrs["index"], g)
        return [full]
    if op == "scale":
        return [g * node.attrs["factor"]]
    if op == "cos":
        return [-g * np.sin(v[0])]
    if op == "sin":
        return [g * np.cos(v[0])]
    if op == "sqrt":
        out = node.value
        safe = np.where(out > 0.0, out, 1.0)
        return [np.where(out > 0.0, 0.5 * g / safe, 0.0)]
    raise ContractError(f"unknown op {op!r}")


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node.inputs:
            if id(child) not in seen:
                stack.append((child, False))
    return order


def forward(root):
    """Evaluate ``root``, caching the value of every node on the way."""
    for node in _topo_order(root):
        if node.op == "input":
            if node.value is None:
                raise ContractError(f"unbound leaf {node!r}")
            continue
        node.value = _eval(node)
    return root.value


def backward(root):
    """Reverse accumulation from a scalar root.

    Returns a dict mapping every gradient-requiring leaf to its gradient and
    stores the same arrays on ``leaf.grad``.
    """
    if root.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1, 1) root, got shape {root.shape}")
    if root.value is None:
        raise ContractError("forward must run before backward")
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones((1, 1))
    grads = {}
    for node in reversed(order):
        if node.grad is None or not node.requires_grad:
            continue
        if node.op == "input":
            grads[node] = node.grad
            continue
        for child, g in zip(node.inputs, _vjp(node, node.grad)):
            if not child.requires_grad:
                continue
            child.grad = g.copy() if child.grad is None else child.grad + g
    for node in order:
        if node.op == "input" and node.requires_grad and node not in grads:
            node.grad = np.zeros(node.shape)
            grads[node] = node.grad
    return grads


def leaves(root):
    """Gradient-requiring leaves reachable from ``root``, in a stable order."""
    return [n for n in _topo_order(root) if n.op == "input" and n.requires_grad]


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    max_rel_error: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(err < self.tol for err in self.max_rel_error.values())

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)


def grad_check(root, eps=1e-5, tol=1e-5, wrt=None):
    """Compare :func:`backward` against central finite differences.

    The error of one entry is ``|analytic - numeric| / max(1, |analytic|, |numeric|)``,
    i.e. relative for gradients larger than one and absolute below that, so
    entries that are zero both ways report zero.
    """
    if not 0.0 < eps <= 1e-3:
        raise ContractError(f"eps must lie in (0, 1e-3], got {eps}")
    if root.shape != (1, 1):
        raise ContractError(f"grad_check needs a scalar root, got shape {root.shape}")
    targets = leaves(root) if wrt is None else list(wrt)
    forward(root)
    analytic = backward(root)
    report = GradCheckReport(eps=eps, tol=tol)
    for i, node in enumerate(targets):
        base = node.value
        numeric = np.zeros(node.shape)
        for idx in np.ndindex(*node.shape):
            bumped = base.copy()
            bumped[idx] = base[idx] + eps
            node.value = bumped
            up = forward(root)[0, 0]
            bumped[idx] = base[idx] - eps
            down = forward(root)[0, 0]
            numeric[idx] = (up - down) / (2.0 * eps)
        node.value = base
        a = analytic.get(node, np.zeros(node.shape))
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
        err = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
        key = node.name or f"leaf{i}"
        if key in report.max_rel_error:
            key = f"{key}#{i}"
        report.max_rel_error[key] = err
    forward(root)
    return report
