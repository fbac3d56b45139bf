"""From-scratch autodiff, recurrent layers, losses, and AdamW."""

from .tensor import (
    Tensor,
    add,
    attend,
    concat,
    cross_entropy,
    cross_entropy_logits_sum,
    dropout,
    entropy,
    grad_enabled,
    kl_divergence,
    log_softmax,
    matmul,
    mean_all,
    mul,
    nll_sum,
    no_grad,
    relu,
    scale,
    sigmoid,
    slice_cols,
    soft_cross_entropy_logits_sum,
    softmax,
    stack_rows,
    sub,
    sum_all,
    take_rows,
    tanh,
)
from .layers import (
    LinearParams,
    LstmParams,
    bilstm,
    bilstm_final,
    init_matrix,
    lstm_step,
    run_lstm,
)
from .optim import AdamW, AdamWConfig, clip_grad_norm
from .store import ParamStore
from .gradcheck import check_gradients, finite_difference, max_relative_error

__all__ = [
    "Tensor", "add", "attend", "concat", "cross_entropy", "cross_entropy_logits_sum",
    "dropout", "entropy", "grad_enabled", "kl_divergence", "log_softmax",
    "matmul", "mean_all", "mul", "nll_sum", "no_grad", "relu", "scale",
    "sigmoid", "slice_cols", "soft_cross_entropy_logits_sum", "softmax",
    "stack_rows", "sub", "sum_all", "take_rows", "tanh",
    "LinearParams", "LstmParams", "bilstm", "bilstm_final", "init_matrix",
    "lstm_step", "run_lstm",
    "AdamW", "AdamWConfig", "clip_grad_norm", "ParamStore",
    "check_gradients", "finite_difference", "max_relative_error",
]
