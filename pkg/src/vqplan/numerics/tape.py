"""Reverse-mode differentiation on a flat operation tape.

Tensors are dense float64 arrays (0-d scalars, 1-d vectors, or 2-d
row-batched matrices; no general broadcasting). Every primitive appends
one record to a :class:`GraphTape`; :func:`backward` replays the tape in
reverse, visiting each record exactly once. Passing ``tape=None`` runs
the same primitive without recording, which is the inference fast path.

Thread safety: forward evaluation over read-only parameters is safe from
many threads as long as each thread owns its tape. Anything that mutates
gradients (``backward``) is single-threaded per tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ContractError, NonFiniteError, ShapeError

Array = np.ndarray


def _as_f64(values) -> Array:
    out = np.asarray(values, dtype=np.float64)
    if out.ndim > 2:
        raise ShapeError(f"tensors are at most 2-d, got shape {out.shape}")
    return out


def _check_finite(data: Array, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by '{op}'")


class Tensor:
    """A float64 array plus an optional gradient buffer of the same size."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.data = _as_f64(values)
        _check_finite(self.data, "tensor-init")
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def values(self) -> Array:
        """Flat view of the entries, length == product of shape."""
        return self.data.reshape(-1)

    @property
    def gradient(self) -> Optional[Array]:
        return None if self.grad is None else self.grad.reshape(-1)

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: Array) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(values) -> Tensor:
    """A tensor that never receives gradient."""
    return Tensor(values, requires_grad=False)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple
    backward: Callable[[Array], Sequence[Optional[Array]]]
    name: str


@dataclass
class GraphTape:
    """Ordered list of recorded primitives; replayed once, in reverse."""

    records: list = field(default_factory=list)

    def _emit(self, name, out_data, inputs, backward_fn) -> Tensor:
        _check_finite(out_data, name)
        out = Tensor(out_data)
        out.requires_grad = any(t.requires_grad for t in inputs)
        if out.requires_grad:
            self.records.append(_Record(out, tuple(inputs), backward_fn, name))
        return out


def _result(tape: Optional[GraphTape], name, out_data, inputs, backward_fn) -> Tensor:
    if tape is None:
        _check_finite(out_data, name)
        return Tensor(out_data)
    return tape._emit(name, out_data, inputs, backward_fn)


def backward(tape: GraphTape, loss: Tensor) -> None:
    """Populate ``.grad`` of every tensor the scalar ``loss`` depends on."""
    if loss.data.shape != ():
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.accumulate_grad(np.ones((), dtype=np.float64))
    for rec in reversed(tape.records):
        g = rec.out.grad
        if g is None:
            continue
        grads = rec.backward(g)
        for t, gi in zip(rec.inputs, grads):
            if gi is not None and t.requires_grad:
                t.accumulate_grad(gi)


# ---------------------------------------------------------------------------
# primitives


def matmul(tape: Optional[GraphTape], x: Tensor, w: Tensor) -> Tensor:
    """``x @ w`` with x of shape [i] or [B, i] and w of shape [i, o]."""
    if w.data.ndim != 2 or x.data.ndim not in (1, 2):
        raise ShapeError(f"matmul expects (1|2-d) @ 2-d, got {x.shape} @ {w.shape}")
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {x.shape} @ {w.shape}")
    out = x.data @ w.data

    def back(g):
        gx = g @ w.data.T
        if x.data.ndim == 1:
            gw = np.outer(x.data, g)
        else:
            gw = x.data.T @ g
        return gx, gw

    return _result(tape, "matmul", out, (x, w), back)


def add(tape: Optional[GraphTape], a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    return _result(tape, "add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(tape: Optional[GraphTape], a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    return _result(tape, "sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(tape: Optional[GraphTape], a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product (same shapes)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    return _result(
        tape, "mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data)
    )


def add_bias(tape: Optional[GraphTape], x: Tensor, b: Tensor) -> Tensor:
    """Add a 1-d bias to each row of x ([B, o] or [o])."""
    if b.data.ndim != 1 or x.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"bias {b.shape} does not fit activations {x.shape}")
    if x.data.ndim == 1:
        back = lambda g: (g, g)
    else:
        back = lambda g: (g, g.sum(axis=0))
    return _result(tape, "add_bias", x.data + b.data, (x, b), back)


def scale(tape: Optional[GraphTape], x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(tape, "scale", x.data * c, (x,), lambda g: (g * c,))


def tanh(tape: Optional[GraphTape], x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _result(tape, "tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(tape: Optional[GraphTape], x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    return _result(tape, "relu", out, (x,), lambda g: (g * (x.data > 0.0),))


def square(tape: Optional[GraphTape], x: Tensor) -> Tensor:
    return _result(tape, "square", x.data * x.data, (x,), lambda g: (g * 2.0 * x.data,))


def sum_all(tape: Optional[GraphTape], x: Tensor) -> Tensor:
    def back(g):
        return (np.full(x.data.shape, float(g)),)

    return _result(tape, "sum_all", np.asarray(x.data.sum()), (x,), back)


def mean_all(tape: Optional[GraphTape], x: Tensor) -> Tensor:
    n = x.data.size

    def back(g):
        return (np.full(x.data.shape, float(g) / n),)

    return _result(tape, "mean_all", np.asarray(x.data.mean()), (x,), back)


def concat_cols(tape: Optional[GraphTape], parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis; all parts share the other axis."""
    if not parts:
        raise ContractError("concat_cols needs at least one part")
    ndim = parts[0].data.ndim
    if any(p.data.ndim != ndim for p in parts):
        raise ShapeError("concat_cols parts must have equal rank")
    widths = [p.data.shape[-1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=-1)
    offsets = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[..., offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _result(tape, "concat_cols", out, tuple(parts), back)


def slice_cols(tape: Optional[GraphTape], x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.data.shape[-1]):
        raise ShapeError(f"slice [{start}:{stop}] out of range for {x.shape}")
    out = x.data[..., start:stop].copy()

    def back(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return _result(tape, "slice_cols", out, (x,), back)


def gather_rows(tape: Optional[GraphTape], table: Tensor, indices) -> Tensor:
    """Select rows of a [K, D] table; backward scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"gather_rows needs a 2-d table, got {table.shape}")
    if idx.ndim != 1:
        raise ShapeError("gather_rows indices must be 1-d")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ContractError("gather_rows index out of range")
    out = table.data[idx]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _result(tape, "gather_rows", out, (table,), back)


def straight_through(tape: Optional[GraphTape], quantized: Array, z_u: Tensor) -> Tensor:
    """Forward the quantized values; backward is the identity onto ``z_u``.

    The quantized side is a plain array (codebooks learn by EMA, not by
    gradient), so no gradient ever reaches it through this op.
    """
    q = _as_f64(quantized)
    if q.shape != z_u.data.shape:
        raise ShapeError(f"quantized {q.shape} vs unquantized {z_u.data.shape}")
    return _result(tape, "straight_through", q.copy(), (z_u,), lambda g: (g,))


def softmax_cross_entropy_rows(
    tape: Optional[GraphTape], logits: Tensor, targets
) -> Tensor:
    """Per-row ``-log softmax(logits)[target]`` for [B, K] logits.

    Stabilized by max subtraction; gradient per row is softmax - one_hot.
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"expected [B, K] logits, got {logits.shape}")
    idx = np.asarray(targets, dtype=np.int64)
    n, k = logits.data.shape
    if idx.shape != (n,):
        raise ShapeError(f"targets shape {idx.shape} does not match batch {n}")
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise ContractError("cross entropy target index out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    losses = np.log(denom[:, 0]) - z[np.arange(n), idx]

    def back(g):
        gl = probs * g[:, None]
        gl[np.arange(n), idx] -= g
        return (gl,)

    return _result(tape, "softmax_ce", losses, (logits,), back)


def softmax_cross_entropy(tape: Optional[GraphTape], logits: Tensor, target: int) -> Tensor:
    """Scalar cross entropy for a single 1-d logit vector."""
    if logits.data.ndim != 1:
        raise ShapeError(f"expected 1-d logits, got {logits.shape}")
    target = int(target)
    if not 0 <= target < logits.data.shape[0]:
        raise ContractError(
            f"target {target} out of range for {logits.data.shape[0]} logits"
        )
    z = logits.data - logits.data.max()
    ez = np.exp(z)
    denom = ez.sum()
    probs = ez / denom
    loss = np.asarray(np.log(denom) - z[target])

    def back(g):
        gl = probs * float(g)
        gl[target] -= float(g)
        return (gl,)

    return _result(tape, "softmax_ce_1d", loss, (logits,), back)


def softmax(logits: Array) -> Array:
    """Plain (non-tape) stabilized softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)
