"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation records a backward closure on the result node; calling
``backward()`` on a scalar runs the tape in reverse topological order and
accumulates into the ``grad`` arrays of all reachable nodes that require
gradients.  Wrap inference-only code in ``no_grad()`` to skip the tape.
"""

from __future__ import annotations

import contextlib
from typing import Sequence

import numpy as np

from ..errors import ContractError, DistributionError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        """Reverse accumulation from a scalar root; grads add up across calls."""
        if self.data.ndim != 0 and self.data.size != 1:
            raise ContractError("backward() requires a scalar root")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        # Stored gradient arrays may alias each other or views of upstream
        # gradients, so accumulation always allocates instead of mutating.
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad += g
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if parent._backward is None and not parent.requires_grad:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar used by model code
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    if _grad_enabled and any(
        p.requires_grad or p._backward is not None for p in parents
    ):
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` along the axes numpy broadcast over."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from None

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _node(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}") from None

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape)))

    return _node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from None

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape)),
            (b, _unbroadcast(g * a.data, b.shape)),
        )

    return _node(data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        return ((a, g * c),)

    return _node(a.data * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError("matmul supports 1-D and 2-D operands")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 2:
            return ((a, g @ bd.T), (b, np.outer(ad, g)))
        if ad.ndim == 2 and bd.ndim == 1:
            return ((a, np.outer(g, bd)), (b, ad.T @ g))
        if ad.ndim == 1 and bd.ndim == 1:
            return ((a, g * bd), (b, g * ad))
        return ((a, g @ bd.T), (b, ad.T @ g))

    return _node(data, (a, b), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        return ((a, g * (1.0 - data * data)),)

    return _node(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return ((a, g * data * (1.0 - data)),)

    return _node(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        return ((a, g * (a.data > 0.0)),)

    return _node(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            out.append((t, g[tuple(index)]))
        return tuple(out)

    return _node(data, tuple(tensors), backward)


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=0)

    def backward(g):
        return tuple((t, g[i]) for i, t in enumerate(tensors))

    return _node(data, tuple(tensors), backward)


def take_rows(a: Tensor, indices) -> Tensor:
    """Row gather (embedding lookup); gradient scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.intp)
    if a.data.ndim < 1:
        raise ShapeError("take_rows needs at least 1-D input")
    data = a.data[idx]

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return ((a, out),)

    return _node(data, (a,), backward)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    """Contiguous column slice of a 2-D tensor (or element slice of 1-D)."""
    data = a.data[..., lo:hi]

    def backward(g):
        out = np.zeros_like(a.data)
        out[..., lo:hi] = g
        return ((a, out),)

    return _node(data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def backward(g):
        return ((a, np.broadcast_to(g, a.data.shape)),)

    return _node(data, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean())

    def backward(g):
        return ((a, np.broadcast_to(g / n, a.data.shape)),)

    return _node(data, (a,), backward)


def _log_softmax_data(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    data = np.exp(_log_softmax_data(a.data, axis))

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((a, data * (g - dot)),)

    return _node(data, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    data = _log_softmax_data(a.data, axis)
    probs = np.exp(data)

    def backward(g):
        return ((a, g - probs * g.sum(axis=axis, keepdims=True)),)

    return _node(data, (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate {rate} outside [0, 1)")
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    data = a.data * mask

    def backward(g):
        return ((a, g * mask),)

    return _node(data, (a,), backward)


def attend(h: Tensor, keys: Tensor, values: Tensor) -> Tensor:
    """Dot-product attention pooling of ``values`` by similarity of ``h``
    to ``keys``; softmax over the leading (time) axis.

    Single query: h (D,), keys (T, D), values (T, H) -> (H,).
    Batched: h (B, D), keys (T, B, D), values (T, B, H) -> (B, H).
    """
    if h.data.ndim == 1:
        scores = keys.data @ h.data
        alpha = np.exp(_log_softmax_data(scores, axis=0))
        data = alpha @ values.data

        def backward(g):
            d_alpha = values.data @ g
            ds = alpha * (d_alpha - float(d_alpha @ alpha))
            return (
                (h, keys.data.T @ ds),
                (keys, np.outer(ds, h.data)),
                (values, np.outer(alpha, g)),
            )

    elif h.data.ndim == 2:
        scores = np.einsum("bd,tbd->bt", h.data, keys.data)
        alpha = np.exp(_log_softmax_data(scores, axis=1))
        data = np.einsum("bt,tbh->bh", alpha, values.data)

        def backward(g):
            d_alpha = np.einsum("bh,tbh->bt", g, values.data)
            ds = alpha * (d_alpha - (d_alpha * alpha).sum(axis=1, keepdims=True))
            return (
                (h, np.einsum("bt,tbd->bd", ds, keys.data)),
                (keys, np.einsum("bt,bd->tbd", ds, h.data)),
                (values, np.einsum("bt,bh->tbh", alpha, g)),
            )

    else:
        raise ShapeError(f"attend: query must be 1-D or 2-D, got {h.shape}")
    return _node(data, (h, keys, values), backward)


def nll_sum(log_probs: Tensor, targets) -> Tensor:
    """Sum of negative picked log-probabilities over the rows of a 2-D
    log-distribution (typically the output of log_softmax)."""
    idx = np.asarray(targets, dtype=np.intp)
    rows = np.arange(log_probs.data.shape[0])
    data = np.asarray(-log_probs.data[rows, idx].sum())

    def backward(g):
        out = np.zeros_like(log_probs.data)
        out[rows, idx] = -g
        return ((log_probs, out),)

    return _node(data, (log_probs,), backward)


def cross_entropy_logits_sum(logits: Tensor, targets) -> Tensor:
    """Fused softmax cross-entropy, summed over rows; grad is q - onehot."""
    idx = np.asarray(targets, dtype=np.intp)
    ls = _log_softmax_data(logits.data, axis=-1)
    rows = np.arange(logits.data.shape[0])
    data = np.asarray(-ls[rows, idx].sum())
    probs = np.exp(ls)

    def backward(g):
        out = probs.copy()
        out[rows, idx] -= 1.0
        return ((logits, out * g),)

    return _node(data, (logits,), backward)


def soft_cross_entropy_logits_sum(logits: Tensor, target_probs: np.ndarray) -> Tensor:
    """Fused soft-target cross-entropy -sum_k p_k log q_k, summed over rows.

    Target rows may be scaled (row sum s encodes a per-row weight, zero
    rows contribute nothing); the gradient per row is s*q - p.
    """
    p = np.asarray(target_probs, dtype=np.float64)
    if p.shape != logits.data.shape:
        raise ShapeError(f"soft targets {p.shape} vs logits {logits.shape}")
    ls = _log_softmax_data(logits.data, axis=-1)
    data = np.asarray(-(np.where(p > 0.0, p * ls, 0.0)).sum())
    probs = np.exp(ls)
    row_mass = p.sum(axis=-1, keepdims=True)

    def backward(g):
        return ((logits, (probs * row_mass - p) * g),)

    return _node(data, (logits,), backward)


# ---------------------------------------------------------------------------
# Value-level distribution math (no tape)
# ---------------------------------------------------------------------------

def _check_distribution(p: np.ndarray, name: str) -> None:
    if np.any(p < 0.0):
        raise DistributionError(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise DistributionError(f"{name} sums to {float(p.sum())!r}, not 1")


def cross_entropy(one_hot, q) -> float:
    """-sum_k y_k log q_k for a one-hot y and a probability vector q."""
    y = np.asarray(one_hot, dtype=np.float64)
    qv = np.asarray(q, dtype=np.float64)
    _check_distribution(y, "one-hot target")
    _check_distribution(qv, "q")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > 0.0, -y * np.log(qv), 0.0)
    return float(terms.sum())


def kl_divergence(p, q) -> float:
    """sum_k p_k (log p_k - log q_k); zero p entries contribute nothing."""
    pv = np.asarray(p, dtype=np.float64)
    qv = np.asarray(q, dtype=np.float64)
    _check_distribution(pv, "p")
    _check_distribution(qv, "q")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pv > 0.0, pv * (np.log(pv) - np.log(qv)), 0.0)
    return float(terms.sum())


def entropy(p) -> float:
    pv = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pv > 0.0, -pv * np.log(pv), 0.0)
    return float(terms.sum())
