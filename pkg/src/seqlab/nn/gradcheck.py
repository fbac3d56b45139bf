"""Central finite-difference gradient verification.

The checker only ever evaluates the forward pass, so it is independent of
the reverse-mode implementation it is used to verify.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor, no_grad


def finite_difference(
    loss_fn: Callable[[], float], values: np.ndarray, epsilon: float = 1e-5
) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``values``
    (perturbed in place and restored)."""
    grad = np.zeros_like(values)
    flat = values.reshape(-1)
    out = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn()
            flat[i] = orig - epsilon
            down = loss_fn()
            flat[i] = orig
            out[i] = (up - down) / (2.0 * epsilon)
    return grad


def max_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, clamp: float = 1e-8
) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), clamp)
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradients(
    build_loss: Callable[[], Tensor],
    params: dict[str, Tensor] | Iterable[tuple[str, Tensor]],
    epsilon: float = 1e-5,
    rtol: float = 1e-4,
    noise_floor: float | None = None,
) -> dict[str, float]:
    """Compare reverse-mode gradients of ``build_loss()`` against central
    finite differences for every named parameter.

    ``noise_floor`` clamps the relative-error denominator.  Central
    differences in float64 carry about ``|loss| * 2^-52 / epsilon`` of
    cancellation noise, so gradient entries below that cannot be certified
    to ``rtol`` relative no matter how correct they are; by default the
    floor is set to four times that noise divided by ``rtol`` (and at
    least 1e-8).  Wrong gradients show O(1) errors on ordinary-sized
    entries and are still caught.

    Returns the max relative error per parameter; raises AssertionError on
    the first parameter exceeding ``rtol``.
    """
    named = dict(params)
    for p in named.values():
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    if noise_floor is None:
        fd_noise = abs(loss.item()) * 2.0**-52 / epsilon
        noise_floor = max(1e-8, 4.0 * fd_noise / rtol)

    def forward() -> float:
        return build_loss().item()

    errors: dict[str, float] = {}
    for name, p in named.items():
        numeric = finite_difference(forward, p.data, epsilon)
        err = max_relative_error(p.grad, numeric, clamp=noise_floor)
        errors[name] = err
        assert err <= rtol, f"gradient check failed for {name}: rel err {err:.3e}"
    return errors
