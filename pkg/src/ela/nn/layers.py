"""Parameter storage and the two network primitives (MLP, GRU cell).

A :class:`ParamStore` owns named parameter tensors together with their
Adam moment buffers. Networks register their weights in a shared store
under a dotted prefix, which makes checkpointing and optimizer steps
uniform across models.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

_ACTIVATIONS = {"tanh": T.tanh, "sigmoid": T.sigmoid, "softplus": T.softplus}


def _obtain(store: "ParamStore", name: str, init_fn) -> Tensor:
    """Reuse an existing parameter (checkpoint reload) or initialize it."""
    if name in store:
        return store[name]
    return store.add(name, init_fn())


class ParamStore:
    """Named parameters with paired gradient and Adam moment buffers."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        param = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = param
        self._m[name] = np.zeros_like(param.data)
        self._v[name] = np.zeros_like(param.data)
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = np.zeros_like(p.data)

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._m[name], self._v[name]

    def set_trainable(self, trainable: bool) -> None:
        for p in self._params.values():
            p.requires_grad = trainable

    def num_values(self) -> int:
        return sum(p.data.size for p in self._params.values())


class Mlp:
    """Fully connected stack: affine layers with an activation between them.

    ``sizes`` lists every layer width including input and output, e.g.
    ``[4, 8, 3]`` is one hidden layer of width 8. The final layer is
    linear; with ``zero_final=True`` its weights and bias start at zero,
    which puts Gaussian heads at (mu=0, sigma=1) and logit heads at a
    uniform distribution before training.
    """

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        sizes: list[int],
        rng: np.random.Generator | None = None,
        activation: str = "tanh",
        zero_final: bool = False,
    ):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = list(sizes)
        self.activation = activation
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        last = len(sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):

            def init_w(fan_in=fan_in, fan_out=fan_out, i=i):
                if zero_final and i == last:
                    return np.zeros((fan_in, fan_out))
                if rng is None:
                    raise ValueError(f"parameter {prefix}.w{i} missing and no rng given")
                return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))

            self.weights.append(_obtain(store, f"{prefix}.w{i}", init_w))
            self.biases.append(
                _obtain(store, f"{prefix}.b{i}", lambda fan_out=fan_out: np.zeros(fan_out))
            )
            w = self.weights[-1]
            if w.data.shape != (fan_in, fan_out):
                raise ValueError(
                    f"parameter {prefix}.w{i} has shape {w.data.shape}, "
                    f"expected {(fan_in, fan_out)}"
                )

    @property
    def in_width(self) -> int:
        return self.sizes[0]

    @property
    def out_width(self) -> int:
        return self.sizes[-1]

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.sizes[0]:
            raise ValueError(
                f"MLP layer 0 expects input width {self.sizes[0]}, got {x.data.shape}"
            )
        if len(self.weights) == 2 and self.activation == "tanh":
            return T.mlp2_tanh(
                x, self.weights[0], self.biases[0], self.weights[1], self.biases[1]
            )
        act = _ACTIVATIONS[self.activation]
        out = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out = T.affine(out, w, b)
            if i != last:
                out = act(out)
        return out


class GruCell:
    """Gated recurrent unit; see :func:`ela.nn.tensor.gru_cell` for equations."""

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        input_width: int,
        hidden_width: int,
        rng: np.random.Generator | None = None,
    ):
        self.input_width = input_width
        self.hidden_width = hidden_width

        def init(shape, fan_in):
            if rng is None:
                raise ValueError(f"parameters under {prefix!r} missing and no rng given")
            return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

        self.w = _obtain(
            store, f"{prefix}.w", lambda: init((input_width, 3 * hidden_width), input_width)
        )
        self.u = _obtain(
            store, f"{prefix}.u", lambda: init((hidden_width, 3 * hidden_width), hidden_width)
        )
        self.b = _obtain(store, f"{prefix}.b", lambda: np.zeros(3 * hidden_width))

    def step(self, h_prev: Tensor, x: Tensor) -> Tensor:
        return T.gru_cell(x, h_prev, self.w, self.u, self.b)
