"""Adam optimizer steps for :class:`~ela.nn.layers.ParamStore` parameters."""

from __future__ import annotations

import numpy as np


def adam_update(
    store,
    lr: float = 0.0005,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    step: int | None = None,
) -> None:
    """One Adam step with bias correction over every parameter in the store.

    Every parameter must carry a populated gradient (``zero_grad`` before
    the backward pass guarantees this even for unreachable parameters).
    ``step`` overrides the store's internal step counter, which otherwise
    increments by one per call.
    """
    if step is None:
        store.step_count += 1
        t = store.step_count
    else:
        t = int(step)
        store.step_count = t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, param in store.items():
        if param.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        g = param.grad
        m, v = store.moments(name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param.data = param.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


class RowAdam:
    """Adam over the rows of one matrix, stepping only the touched rows.

    Used for the per-trajectory representation vectors: a minibatch only
    updates the vectors of the trajectories it contains, so each row keeps
    its own step counter for bias correction.
    """

    def __init__(self, shape: tuple[int, int], beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = np.zeros(shape[0], dtype=np.int64)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, data: np.ndarray, rows: np.ndarray, grad_rows: np.ndarray, lr: float) -> None:
        self.t[rows] += 1
        t = self.t[rows][:, None].astype(np.float64)
        m = self.m[rows] * self.beta1 + (1.0 - self.beta1) * grad_rows
        v = self.v[rows] * self.beta2 + (1.0 - self.beta2) * grad_rows * grad_rows
        self.m[rows] = m
        self.v[rows] = v
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        data[rows] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
