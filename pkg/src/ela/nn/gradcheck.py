"""Central finite-difference verification of analytic gradients.

The loss under test is rebuilt from scratch on every evaluation, so the
checker is independent of the taped backward pass it validates.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor


def fd_gradient(
    loss_fn: Callable[[], float],
    array: np.ndarray,
    coords: Iterable[int] | None = None,
    rel_step: float = 1e-3,
    richardson: bool = False,
) -> dict[int, float]:
    """Central finite differences of ``loss_fn`` w.r.t. flat entries of ``array``.

    ``loss_fn`` must read ``array`` afresh on each call (the entries are
    perturbed in place and restored). The step is relative:
    ``h = rel_step * max(1, |x|)``. With ``richardson`` the h and h/2
    estimates are extrapolated, dropping the truncation error from
    O(h^2) to O(h^4) (needed when gradients near zero are compared
    against a tight absolute floor).
    """
    flat = array.reshape(-1)
    indices = range(flat.size) if coords is None else coords

    def central(i: int, h: float) -> float:
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn()
        flat[i] = orig - h
        f_minus = loss_fn()
        flat[i] = orig
        return (f_plus - f_minus) / (2.0 * h)

    grads: dict[int, float] = {}
    for i in indices:
        h = rel_step * max(1.0, abs(flat[i]))
        d = central(i, h)
        if richardson:
            d = (4.0 * central(i, h / 2.0) - d) / 3.0
        grads[i] = d
    return grads


def max_gradient_error(
    loss_builder: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
    rel_step: float = 1e-3,
) -> float:
    """Worst relative error between taped and finite-difference gradients.

    Args:
        loss_builder: builds a fresh scalar loss from current tensor data.
        tensors: named tensors to check (must require grad).
        coords_per_tensor: if set, check a random coordinate subset of each
            tensor instead of every entry.
        rng: source for the coordinate subsets.

    Returns:
        ``max |analytic - numeric| / max(|numeric|, 1)`` over all checked
        coordinates (an absolute floor of 1 in the denominator makes the
        measure behave like allclose(rtol, atol) at small magnitudes).
    """
    loss = loss_builder()
    for t in tensors.values():
        t.grad = None
    loss.backward()
    analytic = {name: np.array(t.grad, copy=True) for name, t in tensors.items()}

    worst = 0.0
    for name, t in tensors.items():
        size = t.data.size
        if coords_per_tensor is None or coords_per_tensor >= size:
            coords = list(range(size))
        else:
            if rng is None:
                raise ValueError("rng required when sampling coordinates")
            coords = sorted(rng.choice(size, size=coords_per_tensor, replace=False))
        numeric = fd_gradient(
            lambda: loss_builder().item(), t.data, coords, rel_step=rel_step
        )
        a = analytic[name].reshape(-1)
        for i, n in numeric.items():
            err = abs(a[i] - n) / max(abs(n), 1.0)
            worst = max(worst, err)
    return worst
