"""Dense float64 tensors with a per-step reverse-mode tape.

Values live in numpy arrays; the tape records one vjp closure per input of
every recorded operation. A tape is built for a single training step and
discarded after ``backward``, so memory stays bounded without checkpointing.

There is no implicit broadcasting: binary elementwise ops require equal
shapes, the only sanctioned exceptions being ``scale`` (tensor times python
scalar) and ``add_bias`` (matrix plus explicit bias row).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray


class Tensor:
    """A value recorded on a tape."""

    __slots__ = ("tape", "node_id", "value")

    def __init__(self, tape: "Tape", node_id: int, value: Array):
        self.tape = tape
        self.node_id = node_id
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(node_id={self.node_id}, shape={self.shape})"


class Tape:
    """Append-only record of operations; inputs always precede outputs."""

    def __init__(self) -> None:
        # edges[i] is a list of (parent_node_id, vjp) pairs for node i
        self._edges: list[list[tuple[int, Callable[[Array], Array]]]] = []

    def __len__(self) -> int:
        return len(self._edges)

    def leaf(self, value) -> Tensor:
        arr = np.asarray(value, dtype=np.float64)
        return self._record(arr, [])

    def _record(self, value: Array, edges) -> Tensor:
        node_id = len(self._edges)
        self._edges.append(edges)
        return Tensor(self, node_id, value)


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ContractError("operands live on different tapes")
    return tape


def _check_equal_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_equal_shapes(a, b, "add")
    tape = _same_tape(a, b)
    return tape._record(a.value + b.value, [(a.node_id, lambda g: g), (b.node_id, lambda g: g)])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_equal_shapes(a, b, "sub")
    tape = _same_tape(a, b)
    return tape._record(a.value - b.value, [(a.node_id, lambda g: g), (b.node_id, lambda g: -g)])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_equal_shapes(a, b, "mul")
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    return tape._record(av * bv, [(a.node_id, lambda g: g * bv), (b.node_id, lambda g: g * av)])


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape._record(a.value * c, [(a.node_id, lambda g: g * c)])


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.value))
    return a.tape._record(out, [(a.node_id, lambda g: g * out * (1.0 - out))])


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return a.tape._record(out, [(a.node_id, lambda g: g * (1.0 - out * out))])


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return a.tape._record(out, [(a.node_id, lambda g: g * out)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    return tape._record(
        av @ bv,
        [(a.node_id, lambda g: g @ bv.T), (b.node_id, lambda g: av.T @ g)],
    )


def add_bias(mat: Tensor, bias: Tensor) -> Tensor:
    """Matrix plus a bias row, broadcast over rows (the one sanctioned broadcast)."""
    if bias.value.ndim != 1 or mat.value.ndim != 2 or mat.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_bias: shapes {mat.shape} and {bias.shape} incompatible")
    tape = _same_tape(mat, bias)
    return tape._record(
        mat.value + bias.value,
        [(mat.node_id, lambda g: g), (bias.node_id, lambda g: g.sum(axis=0))],
    )


def log_softmax(a: Tensor) -> Tensor:
    """Numerically stable log-softmax over the last axis."""
    if a.value.shape[-1] < 1:
        raise DimensionError("log_softmax: empty last axis")
    x = a.value
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    sm = np.exp(out)

    def vjp(g: Array) -> Array:
        return g - sm * g.sum(axis=-1, keepdims=True)

    return a.tape._record(out, [(a.node_id, vjp)])


def tsum(a: Tensor) -> Tensor:
    """Full reduction to a scalar."""
    shape = a.shape
    return a.tape._record(
        np.asarray(a.value.sum()),
        [(a.node_id, lambda g: np.broadcast_to(g, shape).copy() if g.ndim else np.full(shape, float(g)))],
    )


def slice_rows(a: Tensor, i0: int, i1: int) -> Tensor:
    if a.value.ndim != 2 or not (0 <= i0 <= i1 <= a.shape[0]):
        raise DimensionError(f"slice_rows: [{i0}:{i1}] invalid for shape {a.shape}")
    shape = a.shape

    def vjp(g: Array) -> Array:
        out = np.zeros(shape)
        out[i0:i1] = g
        return out

    return a.tape._record(a.value[i0:i1].copy(), [(a.node_id, vjp)])


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if a.value.ndim != 2 or not (0 <= j0 <= j1 <= a.shape[1]):
        raise DimensionError(f"slice_cols: [{j0}:{j1}] invalid for shape {a.shape}")
    shape = a.shape

    def vjp(g: Array) -> Array:
        out = np.zeros(shape)
        out[:, j0:j1] = g
        return out

    return a.tape._record(a.value[:, j0:j1].copy(), [(a.node_id, vjp)])


def rowsum(a: Tensor) -> Tensor:
    """Sum over columns, keeping a (rows, 1) shape."""
    if a.value.ndim != 2:
        raise DimensionError(f"rowsum: expected 2-D tensor, got shape {a.shape}")
    cols = a.shape[1]
    return a.tape._record(
        a.value.sum(axis=1, keepdims=True),
        [(a.node_id, lambda g: np.repeat(g, cols, axis=1))],
    )


def mul_cols(mat: Tensor, col: Tensor) -> Tensor:
    """Matrix times a column vector, broadcast across columns."""
    if mat.value.ndim != 2 or col.value.ndim != 2 or col.shape != (mat.shape[0], 1):
        raise DimensionError(f"mul_cols: shapes {mat.shape} and {col.shape} incompatible")
    tape = _same_tape(mat, col)
    mv, cv = mat.value, col.value
    return tape._record(
        mv * cv,
        [
            (mat.node_id, lambda g: g * cv),
            (col.node_id, lambda g: (g * mv).sum(axis=1, keepdims=True)),
        ],
    )


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_cols: no parts")
    tape = _same_tape(*parts)
    rows = parts[0].shape[0]
    for p in parts:
        if p.value.ndim != 2 or p.shape[0] != rows:
            raise DimensionError("concat_cols: row counts differ")
    edges = []
    off = 0
    for p in parts:
        n = p.shape[1]
        edges.append((p.node_id, (lambda o, k: lambda g: g[:, o:o + k])(off, n)))
        off += n
    return tape._record(np.hstack([p.value for p in parts]), edges)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_rows: no parts")
    tape = _same_tape(*parts)
    cols = parts[0].shape[1]
    for p in parts:
        if p.value.ndim != 2 or p.shape[1] != cols:
            raise DimensionError("concat_rows: column counts differ")
    edges = []
    off = 0
    for p in parts:
        n = p.shape[0]
        edges.append((p.node_id, (lambda o, k: lambda g: g[o:o + k])(off, n)))
        off += n
    return tape._record(np.vstack([p.value for p in parts]), edges)


# name -> (function, arity); used by tests that sweep every registered op
ELEMENTWISE = {
    "add": (add, 2),
    "sub": (sub, 2),
    "mul": (mul, 2),
    "sigmoid": (sigmoid, 1),
    "tanh": (tanh, 1),
    "exp": (exp, 1),
    "scale": (lambda a: scale(a, 1.7), 1),
}


def elementwise(op: str, *operands: Tensor) -> Tensor:
    """Dispatch an elementwise op by name (scale uses a fixed factor here)."""
    if op not in ELEMENTWISE:
        raise ContractError(f"unknown elementwise op {op!r}")
    fn, arity = ELEMENTWISE[op]
    if len(operands) != arity:
        raise ContractError(f"{op} expects {arity} operands, got {len(operands)}")
    return fn(*operands)


def backward(loss: Tensor) -> dict[int, Array]:
    """Reverse accumulation from a scalar loss; returns node_id -> gradient."""
    if loss.value.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss.tape
    grads: dict[int, Array] = {loss.node_id: np.ones_like(loss.value)}
    for nid in range(loss.node_id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        for parent, vjp in tape._edges[nid]:
            contrib = vjp(g)
            if parent in grads:
                grads[parent] = grads[parent] + contrib
            else:
                grads[parent] = contrib
    return grads


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must build a scalar loss from a single leaf tensor; it is re-run on
    a fresh tape for every finite-difference evaluation.
    """
    x = np.asarray(x, dtype=np.float64)

    def value_at(arr: Array) -> float:
        out = f(Tape().leaf(arr))
        if out.value.size != 1:
            raise ContractError("grad_check: f must be scalar-valued")
        return float(out.value.reshape(()))

    tape = Tape()
    leaf = tape.leaf(x)
    out = f(leaf)
    if out.value.size != 1:
        raise ContractError("grad_check: f must be scalar-valued")
    analytic = backward(out).get(leaf.node_id, np.zeros_like(x))

    worst = 0.0
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        numeric = (value_at(xp) - value_at(xm)) / (2.0 * eps)
        a = float(analytic[idx])
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, err)
    return worst
