"""Recurrent building blocks on top of the autodiff tensor.

Weight matrices are initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
biases zero except the LSTM forget gate, which gets +1.  Gate layout in the
fused matrices is (input, forget, candidate, output).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def init_matrix(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "LinearParams":
        return cls(
            w=Tensor(init_matrix(rng, in_dim, out_dim), requires_grad=True),
            b=Tensor(np.zeros(out_dim), requires_grad=True),
        )

    def apply(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


@dataclass
class LstmParams:
    w_x: Tensor  # (input_dim, 4*hidden)
    w_h: Tensor  # (hidden, 4*hidden)
    b: Tensor    # (4*hidden,)

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden_dim: int) -> "LstmParams":
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim : 2 * hidden_dim] = 1.0  # forget-gate offset
        return cls(
            w_x=Tensor(init_matrix(rng, input_dim, hidden_dim * 4), requires_grad=True),
            w_h=Tensor(init_matrix(rng, hidden_dim, hidden_dim * 4), requires_grad=True),
            b=Tensor(b, requires_grad=True),
        )

    @property
    def hidden_dim(self) -> int:
        return self.w_h.data.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w_x": self.w_x, f"{prefix}.w_h": self.w_h, f"{prefix}.b": self.b}


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: LstmParams) -> tuple[Tensor, Tensor]:
    """One cell update; ``x`` is (D,) or (B, D), state shapes match."""
    hd = params.hidden_dim
    gates = T.add(T.add(T.matmul(x, params.w_x), T.matmul(h, params.w_h)), params.b)
    i = T.sigmoid(T.slice_cols(gates, 0, hd))
    f = T.sigmoid(T.slice_cols(gates, hd, 2 * hd))
    g = T.tanh(T.slice_cols(gates, 2 * hd, 3 * hd))
    o = T.sigmoid(T.slice_cols(gates, 3 * hd, 4 * hd))
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new


def _zero_state(like: Tensor, hidden_dim: int) -> tuple[Tensor, Tensor]:
    if like.data.ndim == 2:
        shape = (like.data.shape[0], hidden_dim)
    else:
        shape = (hidden_dim,)
    return Tensor(np.zeros(shape)), Tensor(np.zeros(shape))


def run_lstm(
    inputs: Sequence[Tensor],
    params: LstmParams,
    reverse: bool = False,
    state: tuple[Tensor, Tensor] | None = None,
) -> list[Tensor]:
    """Hidden state per step, returned in input order regardless of direction."""
    if state is None:
        h, c = _zero_state(inputs[0], params.hidden_dim)
    else:
        h, c = state
    order = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    outputs: list[Tensor | None] = [None] * len(inputs)
    for t in order:
        h, c = lstm_step(inputs[t], h, c, params)
        outputs[t] = h
    return outputs  # type: ignore[return-value]


def bilstm(
    inputs: Sequence[Tensor], fwd: LstmParams, bwd: LstmParams
) -> list[Tensor]:
    """Per-position concatenation of the forward and backward passes."""
    f = run_lstm(inputs, fwd, reverse=False)
    b = run_lstm(inputs, bwd, reverse=True)
    axis = 1 if inputs[0].data.ndim == 2 else 0
    return [T.concat([hf, hb], axis=axis) for hf, hb in zip(f, b)]


def bilstm_final(
    inputs: Sequence[Tensor], fwd: LstmParams, bwd: LstmParams
) -> Tensor:
    """Concatenation of the forward pass's last state and the backward
    pass's first-position state (its last computed)."""
    f = run_lstm(inputs, fwd, reverse=False)
    b = run_lstm(inputs, bwd, reverse=True)
    axis = 1 if inputs[0].data.ndim == 2 else 0
    return T.concat([f[-1], b[0]], axis=axis)
