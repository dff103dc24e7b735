"""Adam with bias correction and decoupled weight decay.

State mirrors the parameter tree key-for-key. The decay is applied after
the moment update as ``p <- p * (1 - lr * weight_decay)``, so it never
enters the moment estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor

__all__ = ["AdamState", "Adam", "adam_step", "clip_grad_norm"]


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
    """One in-place Adam update of ``params`` from ``grads``."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data = p.data - update
        if state.weight_decay:
            p.data = p.data * (1.0 - state.learning_rate * state.weight_decay)


class Adam:
    """Object wrapper around :func:`adam_step` bound to one parameter dict."""

    def __init__(self, params: dict[str, Tensor], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.state = AdamState(learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                               eps=eps, weight_decay=weight_decay)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        adam_step(self.state, self.params, grads)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    """Scale the whole gradient dict so its global L2 norm is <= ``max_norm``."""
    total = 0.0
    for g in grads.values():
        if g is not None:
            total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        grads = {k: (g * scale if g is not None else None) for k, g in grads.items()}
    return grads, norm
