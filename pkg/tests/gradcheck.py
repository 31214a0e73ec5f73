"""Central finite-difference gradient oracle used across the test suite.

This module must stay independent of the autodiff engine's internals: it only
calls a black-box scalar function of plain numpy arrays, so agreement between
the two is a real two-route check.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from crossing_profiler.autodiff import Tensor, backward


def numeric_gradients(
    f: Callable[[Sequence[np.ndarray]], float],
    arrays: Sequence[np.ndarray],
    h: float = 1e-5,
) -> list[np.ndarray]:
    """Central differences of f at arrays, one entry at a time."""
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a, dtype=np.float64)
        flat = g.reshape(-1)
        for idx in range(a.size):
            bumped = [arr.copy() for arr in arrays]
            bumped[k].reshape(-1)[idx] += h
            up = f(bumped)
            bumped = [arr.copy() for arr in arrays]
            bumped[k].reshape(-1)[idx] -= h
            down = f(bumped)
            flat[idx] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(1, |a|, |n|)."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(
    build: Callable[..., Tensor],
    arrays: Sequence[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Compare analytic gradients of build(*tensors) against central differences.

    build receives one Tensor per input array and must return a scalar Tensor.
    Returns the worst relative error over every input entry.
    """
    tensors = [Tensor(a.copy()) for a in arrays]
    loss = build(*tensors)
    backward(loss)
    analytic = [t.grad.copy() for t in tensors]

    def value(arrs: Sequence[np.ndarray]) -> float:
        return build(*[Tensor(a) for a in arrs]).item()

    numeric = numeric_gradients(value, arrays, h=h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
