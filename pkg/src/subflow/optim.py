"""Adam on flat parameter vectors, the temperature schedule, and a
finite-difference gradient checker used as the oracle for every analytic
gradient in the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteGradientError


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, size: int, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, beta1, beta2, eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Returns fresh arrays; inputs are
    never mutated, so the caller can replay or fork optimizer states."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and state must have matching shapes")
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if not np.all(np.isfinite(grads)):
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        raise NonFiniteGradientError(
            f"{bad} non-finite gradient component(s) at step {state.step_count + 1}")

    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


def anneal_temperature(epoch: int, total_epochs: int, t: float) -> float:
    """Halve the temperature at the half and three-quarter marks of the
    schedule, otherwise return it unchanged."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside schedule of {total_epochs}")
    if epoch == total_epochs // 2 or epoch == (3 * total_epochs) // 4:
        return t / 2.0
    return t


def finite_diff_check(loss_fn, grad_fn, params: np.ndarray,
                      h: float = 1e-5) -> float:
    """Max relative error between central finite differences of ``loss_fn``
    and the gradient reported by ``grad_fn``, both evaluated at ``params``.

    The relative error per coordinate is |fd - g| / (|g| + 1e-8).
    """
    params = np.asarray(params, dtype=float)
    analytic = np.asarray(grad_fn(params), dtype=float)
    if analytic.shape != params.shape:
        raise ValueError("gradient shape does not match parameter shape")
    worst = 0.0
    for i in range(params.size):
        step = np.zeros_like(params)
        step[i] = h
        fd = (loss_fn(params + step) - loss_fn(params - step)) / (2.0 * h)
        err = abs(fd - analytic[i]) / (abs(analytic[i]) + 1e-8)
        worst = max(worst, err)
    return worst
