"""Reverse-mode differentiation over dense 2-D float64 arrays.

Graphs are built define-by-run: every operation evaluates immediately and
records closures that push gradients back to its parents.  The op vocabulary
is deliberately small -- matmul, add (plain or row-bias broadcast), relu,
column concatenation, row softmax, scalar scaling and summation -- which is
exactly what the fusion network and its two loss heads need.  Loss modules
attach their own hand-derived backward rules by constructing ``Var`` nodes
directly; ``grad_check`` exists to validate those rules against central
finite differences.

Everything is double precision.  ReLU's gradient at exactly zero is taken
as zero so repeated runs are bit-identical.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, DimensionError, NumericError


def as_matrix(value) -> np.ndarray:
    """Coerce to a float64 2-D array, rejecting other ranks."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {arr.shape}")
    return arr


class Var:
    """One node of the computation graph: a value plus backward plumbing.

    ``pushes`` holds one callable per parent; each maps the gradient at this
    node to the gradient contribution for that parent.  Leaves have none.
    Gradients accumulate into ``grad`` when ``backward`` runs; building a
    fresh graph per step (the intended usage) makes accumulation a non-issue.
    """

    __slots__ = ("value", "op", "name", "parents", "pushes", "requires_grad", "grad")

    def __init__(self, value, *, op="leaf", name=None, parents=(), pushes=None,
                 requires_grad=False):
        self.value = as_matrix(value)
        self.op = op
        self.name = name
        self.parents: tuple[Var, ...] = tuple(parents)
        self.pushes: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = pushes
        if parents:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self):
        label = self.name or self.op
        return f"Var({label}, shape={self.value.shape})"


def constant(value, name=None) -> Var:
    """Leaf that never receives a gradient."""
    var = Var(value, op="const", name=name)
    if not np.all(np.isfinite(var.value)):
        raise NumericError(f"constant {name or ''} contains non-finite values")
    return var


def parameter(value, name=None) -> Var:
    """Learnable leaf; ``backward`` accumulates into its ``grad``."""
    var = Var(value, op="param", name=name, requires_grad=True)
    if not np.all(np.isfinite(var.value)):
        raise NumericError(f"parameter {name or ''} contains non-finite values")
    return var


def _describe(node_or_name) -> str:
    if isinstance(node_or_name, Var):
        return node_or_name.name or node_or_name.op
    return str(node_or_name)


def matmul(a: Var, b: Var) -> Var:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dims differ, {a.shape} @ {b.shape} "
            f"(operands {_describe(a)}, {_describe(b)})")
    out = a.value @ b.value
    pushes = (lambda g: g @ b.value.T, lambda g: a.value.T @ g)
    return Var(out, op="matmul", parents=(a, b), pushes=pushes)


def add(a: Var, b: Var) -> Var:
    """Elementwise addition; ``b`` may be a 1-row bias broadcast over rows."""
    if a.shape == b.shape:
        pushes = (lambda g: g, lambda g: g)
    elif b.shape == (1, a.shape[1]):
        pushes = (lambda g: g, lambda g: g.sum(axis=0, keepdims=True))
    else:
        raise DimensionError(
            f"add: incompatible shapes {a.shape} + {b.shape} "
            f"(operands {_describe(a)}, {_describe(b)})")
    return Var(a.value + b.value, op="add", parents=(a, b), pushes=pushes)


def relu(a: Var) -> Var:
    mask = a.value > 0.0
    return Var(np.where(mask, a.value, 0.0), op="relu", parents=(a,),
               pushes=(lambda g: g * mask,))


def concat_cols(items: Iterable[Var]) -> Var:
    items = list(items)
    if not items:
        raise ContractError("concat_cols: need at least one operand")
    rows = items[0].shape[0]
    for it in items:
        if it.shape[0] != rows:
            raise DimensionError(
                f"concat_cols: row counts differ ({[i.shape for i in items]})")
    widths = [it.shape[1] for it in items]
    offsets = np.cumsum([0] + widths)
    out = np.concatenate([it.value for it in items], axis=1)

    def make_push(k):
        return lambda g: g[:, offsets[k]:offsets[k + 1]]

    return Var(out, op="concat_cols", parents=tuple(items),
               pushes=tuple(make_push(k) for k in range(len(items))))


def softmax_rows(a: Var) -> Var:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    return Var(y, op="softmax_rows", parents=(a,),
               pushes=(lambda g: y * (g - (g * y).sum(axis=1, keepdims=True)),))


def scale(a: Var, alpha: float) -> Var:
    alpha = float(alpha)
    return Var(a.value * alpha, op="scale", parents=(a,),
               pushes=(lambda g: g * alpha,))


def sum_all(a: Var) -> Var:
    """Reduce every entry to a single 1x1 scalar node."""
    out = np.array([[a.value.sum()]])
    shape = a.shape
    return Var(out, op="sum", parents=(a,),
               pushes=(lambda g: np.full(shape, g[0, 0]),))


def _topo_order(root: Var) -> list[Var]:
    """Deterministic post-order over the DAG (parents before children)."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        # reversed keeps visiting order equal to recursive left-to-right DFS
        for parent in reversed(node.parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Var) -> None:
    """Accumulate reverse-mode gradients from a scalar root into the leaves."""
    if root.shape != (1, 1):
        raise ContractError(
            f"backward: root must be a 1x1 scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topo_order(root)
    root.grad = np.ones((1, 1)) if root.grad is None else root.grad + np.ones((1, 1))
    for node in reversed(order):
        if node.grad is None or node.pushes is None:
            continue
        g = node.grad
        for parent, push in zip(node.parents, node.pushes):
            if not parent.requires_grad:
                continue
            contrib = push(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


def grad_check(build, params: dict[str, np.ndarray], step: float = 1e-4) -> float:
    """Max relative disagreement between ``backward`` and central differences.

    ``build`` maps a dict of named leaf ``Var``s to a scalar root and is
    invoked fresh for every probe, so it must reconstruct the whole graph
    from its arguments (define-by-run).  The relative error for one entry is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)``; the maximum
    over all entries of all parameters is returned.
    """
    if step <= 0:
        raise ContractError("grad_check: step must be positive")

    leaves = {k: parameter(v, name=k) for k, v in params.items()}
    root = build(leaves)
    backward(root)
    analytic = {k: (leaves[k].grad if leaves[k].grad is not None
                    else np.zeros_like(v))
                for k, v in params.items()}

    def value_with(probe: str, idx, delta: float) -> float:
        vs = {}
        for k, v in params.items():
            if k == probe:
                shifted = v.copy()
                shifted[idx] += delta
                vs[k] = parameter(shifted, name=k)
            else:
                vs[k] = parameter(v, name=k)
        return float(build(vs).value[0, 0])

    worst = 0.0
    for name, base in params.items():
        ana = analytic[name]
        for idx in np.ndindex(base.shape):
            plus = value_with(name, idx, +step)
            minus = value_with(name, idx, -step)
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(ana[idx]), abs(numeric), 1e-12)
            worst = max(worst, abs(ana[idx] - numeric) / denom)
    return worst
