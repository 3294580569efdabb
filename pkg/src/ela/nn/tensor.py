"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A :class:`Tensor` wraps an ndarray and remembers the op that produced it,
so calling :meth:`Tensor.backward` on a scalar loss fills the ``grad``
field of every reachable tensor with ``requires_grad=True``.

Conventions:
  * everything is float64; finite-ness is checked on construction and a
    ``FloatingPointError`` is raised the moment a NaN/Inf appears,
  * gradient accumulation never mutates arrays in place, so aliased
    gradients are safe,
  * batched values live in ``[batch, features]`` layout.

Besides the elementwise/linear-algebra primitives there are three fused
ops with hand-derived backward passes (``softmax_cross_entropy``,
``diag_gaussian_kl`` and ``gru_cell``) to keep graphs for recurrent
models small. All of them are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

# Set to False to skip the per-op finite-ness check (not recommended).
CHECK_FINITE = True

_BackwardFn = Callable[[np.ndarray], tuple]


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: _BackwardFn | None = None,
    ):
        arr = np.asarray(data, dtype=np.float64)
        if CHECK_FINITE and not np.isfinite(arr.sum()):
            # One cheap reduction catches NaN/Inf via propagation; the sum
            # of huge-but-finite values can overflow, so confirm precisely.
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError("non-finite value produced in tensor op")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Backpropagate from a scalar loss through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in order:
            fn = node._backward_fn
            if fn is None or node.grad is None:
                continue
            grads = fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # Arithmetic sugar; the free functions below do the work.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reverse topological order of the subgraph that needs gradients."""
    order: list[Tensor] = []
    done: set[int] = set()
    in_progress: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            in_progress.discard(id(node))
            done.add(id(node))
            order.append(node)
            continue
        if id(node) in done:
            continue
        if id(node) in in_progress:
            raise ValueError("cycle detected in computation graph")
        in_progress.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in done:
                stack.append((parent, False))
    return order[::-1]


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(a.data + b.data, parents=(a, b), backward_fn=bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return Tensor(a.data - b.data, parents=(a, b), backward_fn=bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return Tensor(a.data * b.data, parents=(a, b), backward_fn=bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g):
        return (g * c,)

    return Tensor(a.data * c, parents=(a,), backward_fn=bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor(a.data @ b.data, parents=(a, b), backward_fn=bw)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` with ``x: [B, in]``, ``w: [in, out]``, ``b: [out]``."""
    if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ValueError(
            f"affine shape mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )

    def bw(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return Tensor(x.data @ w.data + b.data, parents=(x, w, b), backward_fn=bw)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, parents=(x,), backward_fn=bw)


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, parents=(x,), backward_fn=bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return Tensor(out, parents=(x,), backward_fn=bw)


def log(x: Tensor) -> Tensor:
    def bw(g):
        return (g / x.data,)

    return Tensor(np.log(x.data), parents=(x,), backward_fn=bw)


def softplus(x: Tensor) -> Tensor:
    # Stable softplus: max(x, 0) + log1p(exp(-|x|)).
    out = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def bw(g):
        return (g / (1.0 + np.exp(-x.data)),)

    return Tensor(out, parents=(x,), backward_fn=bw)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    widths = [t.data.shape[1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def bw(g):
        return tuple(
            g[:, offsets[i] : offsets[i + 1]] if t.requires_grad else None
            for i, t in enumerate(tensors)
        )

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=1),
        parents=tuple(tensors),
        backward_fn=bw,
    )


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return Tensor(x.data[:, start:stop].copy(), parents=(x,), backward_fn=bw)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows ``x[idx]``; backward scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(x.data[idx], parents=(x,), backward_fn=bw)


def sum_all(x: Tensor) -> Tensor:
    def bw(g):
        return (np.full_like(x.data, float(g)),)

    return Tensor(x.data.sum(), parents=(x,), backward_fn=bw)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def bw(g):
        return (np.full_like(x.data, float(g) / n),)

    return Tensor(x.data.mean(), parents=(x,), backward_fn=bw)


# Floor for predicted class probabilities inside the cross-entropy loss.
CROSS_ENTROPY_PROB_FLOOR = 1e-12


def softmax_cross_entropy(logits: Tensor, target_onehot: Tensor) -> Tensor:
    """Per-row ``-log softmax(logits)[target]`` for one-hot targets.

    Returns a ``[B]`` tensor. The predicted probability of the target
    class is floored at ``CROSS_ENTROPY_PROB_FLOOR``; inside the floored
    region the loss is constant, so its gradient is zero there.
    """
    t = target_onehot.data
    if t.shape != logits.data.shape:
        raise ValueError(
            f"cross-entropy shape mismatch: {logits.data.shape} vs {t.shape}"
        )
    is_onehot = np.all((t == 0.0) | (t == 1.0)) and np.all(t.sum(axis=1) == 1.0)
    if not is_onehot:
        raise ValueError("cross-entropy target must be one-hot rows")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    lse = np.log(ez.sum(axis=1)) + zmax[:, 0]
    raw = lse - (z * t).sum(axis=1)  # -log p[target]
    ceiling = -np.log(CROSS_ENTROPY_PROB_FLOOR)
    clamped = raw > ceiling
    out = np.where(clamped, ceiling, raw)
    softmax = ez / ez.sum(axis=1, keepdims=True)

    def bw(g):
        gl = g[:, None] * (softmax - t)
        if np.any(clamped):
            gl = np.where(clamped[:, None], 0.0, gl)
        return gl if logits.requires_grad else None, None

    return Tensor(out, parents=(logits, target_onehot), backward_fn=bw)


def diag_gaussian_kl(
    mu_q: Tensor, log_std_q: Tensor, mu_p: Tensor, log_std_p: Tensor
) -> Tensor:
    """Per-row ``KL(N(mu_q, diag(exp(log_std_q)^2)) || N(mu_p, ...))``.

    Closed form per dimension:
        log(sp/sq) + (sq^2 + (mu_q - mu_p)^2) / (2 sp^2) - 1/2
    Returns a ``[B]`` tensor; exactly zero when q == p.
    """
    shapes = {t.data.shape for t in (mu_q, log_std_q, mu_p, log_std_p)}
    if len(shapes) != 1:
        raise ValueError(f"KL dimension mismatch: {sorted(shapes)}")
    vq = np.exp(2.0 * log_std_q.data)
    vp = np.exp(2.0 * log_std_p.data)
    d = mu_q.data - mu_p.data
    per_dim = log_std_p.data - log_std_q.data + (vq + d * d) / (2.0 * vp) - 0.5
    out = per_dim.sum(axis=1)

    def bw(g):
        gcol = g[:, None]
        g_mu_q = gcol * (d / vp) if mu_q.requires_grad else None
        g_mu_p = -gcol * (d / vp) if mu_p.requires_grad else None
        g_ls_q = gcol * (vq / vp - 1.0) if log_std_q.requires_grad else None
        g_ls_p = gcol * (1.0 - (vq + d * d) / vp) if log_std_p.requires_grad else None
        return g_mu_q, g_ls_q, g_mu_p, g_ls_p

    return Tensor(out, parents=(mu_q, log_std_q, mu_p, log_std_p), backward_fn=bw)


def mlp2_tanh(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Fused one-hidden-layer perceptron: ``tanh(x w1 + b1) w2 + b2``.

    Semantically identical to composing two affine ops around a tanh; one
    node keeps recurrent graphs small.
    """
    if x.data.ndim != 2 or x.data.shape[1] != w1.data.shape[0]:
        raise ValueError(
            f"mlp2 layer 0 shape mismatch: input {x.data.shape} vs weight {w1.data.shape}"
        )
    hidden = np.tanh(x.data @ w1.data + b1.data)
    out = hidden @ w2.data + b2.data

    def bw(g):
        dh = g @ w2.data.T
        da = dh * (1.0 - hidden * hidden)
        gx = da @ w1.data.T if x.requires_grad else None
        gw1 = x.data.T @ da if w1.requires_grad else None
        gb1 = da.sum(axis=0) if b1.requires_grad else None
        gw2 = hidden.T @ g if w2.requires_grad else None
        gb2 = g.sum(axis=0) if b2.requires_grad else None
        return gx, gw1, gb1, gw2, gb2

    return Tensor(out, parents=(x, w1, b1, w2, b2), backward_fn=bw)


def gru_cell(x: Tensor, h: Tensor, w: Tensor, u: Tensor, b: Tensor) -> Tensor:
    """One fused GRU step.

    Gate layout along the last axis of ``w: [in, 3H]``, ``u: [H, 3H]`` and
    ``b: [3H]`` is ``[reset | update | candidate]``:

        r = sigmoid(x Wr + h Ur + br)
        z = sigmoid(x Wz + h Uz + bz)
        n = tanh(x Wn + r * (h Un) + bn)
        h' = z * h + (1 - z) * n

    so a saturated update gate (z -> 1) carries the state through.
    """
    hid = h.data.shape[1]
    if w.data.shape != (x.data.shape[1], 3 * hid) or u.data.shape != (hid, 3 * hid):
        raise ValueError(
            f"gru shape mismatch: x {x.data.shape}, h {h.data.shape}, "
            f"w {w.data.shape}, u {u.data.shape}"
        )
    xw = x.data @ w.data + b.data
    hu = h.data @ u.data
    r = 1.0 / (1.0 + np.exp(-(xw[:, :hid] + hu[:, :hid])))
    z = 1.0 / (1.0 + np.exp(-(xw[:, hid : 2 * hid] + hu[:, hid : 2 * hid])))
    hun = hu[:, 2 * hid :]
    n = np.tanh(xw[:, 2 * hid :] + r * hun)
    out = z * h.data + (1.0 - z) * n

    def bw(g):
        dz = g * (h.data - n)
        dn = g * (1.0 - z)
        da_n = dn * (1.0 - n * n)
        dr = da_n * hun
        da_z = dz * z * (1.0 - z)
        da_r = dr * r * (1.0 - r)
        # Pre-activation gradients in packed [r|z|n] layout.
        da_w = np.concatenate([da_r, da_z, da_n], axis=1)
        da_u = np.concatenate([da_r, da_z, da_n * r], axis=1)
        gx = da_w @ w.data.T if x.requires_grad else None
        gh = (da_u @ u.data.T + g * z) if h.requires_grad else None
        gw = x.data.T @ da_w if w.requires_grad else None
        gu = h.data.T @ da_u if u.requires_grad else None
        gb = da_w.sum(axis=0) if b.requires_grad else None
        return gx, gh, gw, gu, gb

    return Tensor(out, parents=(x, h, w, u, b), backward_fn=bw)
