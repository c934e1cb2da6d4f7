"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the attention networks need are implemented. Values
are float64 arrays; "matrices" are 2-D row-major arrays, and most ops also
accept a leading batch dimension so a whole minibatch differentiates as
one trace. Traces are confined to a single thread.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable trace recording inside the block (pure inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A trace node: value, accumulated gradient, and parent links."""

    __slots__ = ("value", "grad", "op", "requires_grad", "_parents", "_vjp")

    def __init__(self, value, requires_grad: bool = False, op: str = "leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.op = op
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"


def parameter(value) -> Tensor:
    t = Tensor(value, requires_grad=True, op="param")
    if not np.isfinite(t.value).all():
        raise DimensionError("parameters must be finite")
    return t


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def detach(t: Tensor) -> Tensor:
    return Tensor(t.value)


def _make(value, parents: tuple[Tensor, ...], vjp, op: str) -> Tensor:
    out = Tensor(value, op=op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape numpy broadcast it up from."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return _make(a.value + b.value, (a, b), vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return _make(a.value - b.value, (a, b), vjp, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return _make(a.value * b.value, (a, b), vjp, "mul")


def neg(a: Tensor) -> Tensor:
    return _make(-a.value, (a,), lambda g: (-g,), "neg")


def scale(a: Tensor, s: float) -> Tensor:
    return _make(a.value * s, (a,), lambda g: (g * s,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise DimensionError("matmul operands must be at least 2-D")
    if a.value.shape[-1] != b.value.shape[-2]:
        raise DimensionError(
            f"matmul shape mismatch {a.value.shape} @ {b.value.shape}"
        )

    if a.value.ndim > 2 and b.value.ndim == 2:
        # single flattened GEMM instead of a strided batch of small ones
        lead = a.value.shape[:-1]
        flat = a.value.reshape(-1, a.value.shape[-1])
        out = (flat @ b.value).reshape(*lead, b.value.shape[-1])

        def vjp_flat(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.value.T).reshape(a.value.shape)
            gb = flat.T @ g2
            return ga, gb

        return _make(out, (a, b), vjp_flat, "matmul")

    def vjp(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.value.shape), _unbroadcast(gb, b.value.shape)

    return _make(a.value @ b.value, (a, b), vjp, "matmul")


def transpose_last2(a: Tensor) -> Tensor:
    if a.value.ndim < 2:
        raise DimensionError("transpose needs at least 2-D input")

    def vjp(g):
        return (np.swapaxes(g, -1, -2),)

    return _make(np.swapaxes(a.value, -1, -2), (a,), vjp, "transpose")


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape[:-1] != b.value.shape[:-1]:
        raise DimensionError(
            f"concat operands disagree outside the last axis: "
            f"{a.value.shape} vs {b.value.shape}"
        )
    split = a.value.shape[-1]

    def vjp(g):
        return g[..., :split], g[..., split:]

    return _make(np.concatenate([a.value, b.value], axis=-1), (a, b), vjp, "concat")


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice along the first axis (used to split stacked parameter vectors)."""

    def vjp(g):
        full = np.zeros_like(a.value)
        full[start:stop] = g
        return (full,)

    return _make(a.value[start:stop], (a,), vjp, "rows")


def take_node(a: Tensor, index: int) -> Tensor:
    """Select one entry along the node axis (second to last)."""
    if not 0 <= index < a.value.shape[-2]:
        raise DimensionError(
            f"node index {index} outside 0..{a.value.shape[-2] - 1}"
        )

    def vjp(g):
        full = np.zeros_like(a.value)
        full[..., index, :] = g
        return (full,)

    return _make(a.value[..., index, :], (a,), vjp, "take_node")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    positive = a.value > 0
    out = np.where(positive, a.value, slope * a.value)

    def vjp(g):
        return (g * np.where(positive, 1.0, slope),)

    return _make(out, (a,), vjp, "leaky_relu")


def elu(a: Tensor) -> Tensor:
    positive = a.value > 0
    expm1 = np.expm1(np.minimum(a.value, 0.0))
    out = np.where(positive, a.value, expm1)

    def vjp(g):
        return (g * np.where(positive, 1.0, expm1 + 1.0),)

    return _make(out, (a,), vjp, "elu")


def softmax_last(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis, optionally restricted to a 0/1 mask.

    Masked-out entries get probability exactly 0. Each row must keep at
    least one admissible entry. The row max is treated as constant, which
    leaves gradients unchanged because softmax is shift invariant.
    """
    x = a.value
    if mask is not None:
        keep = mask > 0
        if not keep.any(axis=-1).all():
            raise DimensionError("softmax mask leaves an empty row")
        x = np.where(keep, x, -np.inf)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)

    return _make(p, (a,), vjp, "softmax")


def attention_softmax(
    src: Tensor, dst: Tensor, mask: np.ndarray, slope: float
) -> Tensor:
    """Pairwise attention rows from per-node scores, in one trace node.

    Computes softmax_j over each masked row of LeakyReLU(src_i + dst_j);
    equivalent to composing add, transpose, leaky_relu and softmax_last
    but without their intermediates. ``src`` and ``dst`` are (..., N, 1);
    the result is (..., N, N). ``mask`` may be a 0/1 matrix or an additive
    bias holding 0 on edges and -inf off them.
    """
    if src.value.shape != dst.value.shape or src.value.shape[-1] != 1:
        raise DimensionError(
            f"attention scores must both be (..., N, 1), got "
            f"{src.value.shape} and {dst.value.shape}"
        )
    if np.isneginf(mask).any():
        bias = mask
    else:
        if not (mask > 0).any(axis=-1).all():
            raise DimensionError("attention mask leaves an empty row")
        bias = np.where(mask > 0, 0.0, -np.inf)
    scores = src.value + np.swapaxes(dst.value, -1, -2)
    positive = scores > 0
    np.multiply(scores, slope, out=scores, where=~positive)
    scores += bias
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    p = scores

    def vjp(g):
        dscore = p * (g - (g * p).sum(axis=-1, keepdims=True))
        np.multiply(dscore, slope, out=dscore, where=~positive)
        g_src = dscore.sum(axis=-1, keepdims=True)
        g_dst = np.swapaxes(dscore.sum(axis=-2, keepdims=True), -1, -2)
        return _unbroadcast(g_src, src.value.shape), _unbroadcast(g_dst, dst.value.shape)

    return _make(p, (src, dst), vjp, "attention_softmax")


def mean_nodes(a: Tensor) -> Tensor:
    """Mean over the node axis (second to last), keeping the axis."""
    n = a.value.shape[-2]

    def vjp(g):
        return (np.broadcast_to(g / n, a.value.shape).copy(),)

    return _make(a.value.mean(axis=-2, keepdims=True), (a,), vjp, "mean_nodes")


def mean_all(a: Tensor) -> Tensor:
    size = a.value.size

    def vjp(g):
        return (np.full_like(a.value, float(g) / size),)

    return _make(a.value.mean(), (a,), vjp, "mean_all")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def vjp(g):
        return (g.reshape(a.value.shape),)

    return _make(a.value.reshape(shape), (a,), vjp, "reshape")


def backward(root: Tensor) -> None:
    """Reverse-mode accumulation from a scalar root into ``.grad`` fields."""
    if root.value.shape != ():
        raise ContractError(
            f"backward root must be a scalar, got shape {root.value.shape}"
        )
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))

    root.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                # vjp outputs are fresh or views of fresh arrays and are
                # never mutated afterward, so aliasing is safe here
                parent.grad = np.asarray(g, dtype=np.float64)
            else:
                parent.grad = parent.grad + g


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def sgd_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | Tensor] | None = None,
    lr: float = 1e-3,
) -> Sequence[Tensor]:
    """In-place p <- p - lr * g for every parameter; returns the params.

    When ``grads`` is omitted the gradients accumulated by
    :func:`backward` are used.
    """
    if lr <= 0:
        raise ContractError(f"learning rate must be > 0, got {lr}")
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise DimensionError(
            f"{len(params)} params but {len(grads)} gradients"
        )
    for p, g in zip(params, grads):
        g_arr = g.value if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        if g_arr.shape != p.value.shape:
            raise DimensionError(
                f"gradient shape {g_arr.shape} does not match parameter "
                f"shape {p.value.shape}"
            )
        p.value = p.value - lr * g_arr
    return params
