"""Exploited-level estimation from representations and terminal rewards.

Two routes:

  * the nonparametric neighborhood estimate ``el_delta``: around a query
    trajectory, sum the clipped losses of all representation-space
    neighbors within ``delta`` and divide by the number of losing
    (reward <= 0) neighbors,
  * a learned regressor: a two-layer MLP with a softplus head fit by Adam
    on the pairs (representation, -reward) of the losing trajectories, so
    its prediction approximates the local mean loss and is non-negative
    by construction.

Scaled values come from min-max normalization over a dataset's
estimates, mapping them onto [0, 1] for thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import rng as rng_mod
from .nn import adam as adam_mod
from .nn import checkpoint
from .nn import tensor as T
from .nn.layers import GruCell, Mlp, ParamStore


@dataclass
class ElSample:
    key: tuple[int, int]
    l: np.ndarray
    reward: float
    tag: str | None = None


def el_delta(key: tuple[int, int], samples: list[ElSample], delta: float) -> float:
    """Neighborhood exploited level of the sample identified by ``key``.

    numerator:   sum of (-reward)+ over samples with distance < delta
    denominator: count of those samples with reward <= 0

    The query's own sample is part of its neighborhood (distance 0).
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    by_key = {s.key: s for s in samples}
    if key not in by_key:
        raise KeyError(f"no sample with key {key}")
    query = by_key[key].l
    numerator = 0.0
    losing = 0
    for s in samples:
        if np.linalg.norm(s.l - query) < delta:
            numerator += max(-s.reward, 0.0)
            if s.reward <= 0.0:
                losing += 1
    if losing == 0:
        raise ValueError("EL_delta undefined: no losing neighbors within delta")
    return numerator / losing


def el_delta_all(samples: list[ElSample], delta: float) -> dict[tuple[int, int], float]:
    """Vectorized ``el_delta`` for every sample at once.

    Samples whose neighborhood has no losing member (where the pointwise
    estimate is an error) map to NaN so the rest of a batch stays usable.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    vectors = np.stack([s.l for s in samples])
    rewards = np.array([s.reward for s in samples])
    clipped = np.maximum(-rewards, 0.0)
    losing = rewards <= 0.0
    out: dict[tuple[int, int], float] = {}
    for i, s in enumerate(samples):
        dist = np.linalg.norm(vectors - vectors[i], axis=1)
        near = dist < delta
        denom = int(np.count_nonzero(near & losing))
        out[s.key] = float(clipped[near].sum() / denom) if denom else float("nan")
    return out


def default_delta(vectors: np.ndarray, fraction: float = 0.2, max_probe: int = 1024) -> float:
    """Default neighborhood size: ``fraction`` of the median pairwise distance.

    For large sets the median is taken over an evenly spaced subsample.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) < 2:
        raise ValueError("need at least two vectors to pick a scale")
    if len(vectors) > max_probe:
        stride = int(np.ceil(len(vectors) / max_probe))
        vectors = vectors[::stride]
    diff = vectors[:, None, :] - vectors[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    upper = dist[np.triu_indices(len(vectors), k=1)]
    return float(fraction * np.median(upper))


def normalize_el(values, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Affine min-max rescaling onto [0, 1]; a degenerate range maps to 0."""
    values = np.asarray(values, dtype=np.float64)
    lo = float(values.min()) if lo is None else lo
    hi = float(values.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros_like(values)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


class ExploitedLevelRegressor(BaseEstimator, RegressorMixin):
    """Two-layer MLP mapping a representation to an estimated exploited level.

    ``fit(X, y)`` takes representations and the trajectories' terminal
    rewards; only losing trajectories (reward <= 0) enter the squared
    error, with target ``-reward``. The softplus head keeps predictions
    non-negative. ``train_min_`` / ``train_max_`` hold the prediction
    range over the full fit set for later normalization.

    Because the targets are single-episode losses, their noise dwarfs the
    structure (an exact least-squares fit would spend its capacity on
    noise). Training therefore standardizes inputs and adds Gaussian
    input jitter sized as ``jitter`` times the median distance to the
    10th nearest neighbor, which makes the fit behave like a local
    average over that neighborhood scale. Well-separated clusters see
    almost no jitter.
    """

    def __init__(
        self,
        hidden_width: int = 64,
        epochs: int = 2000,
        learning_rate: float = 0.001,
        batch_size: int = 256,
        jitter: float = 0.75,
        random_state: int = 0,
    ):
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.jitter = jitter
        self.random_state = random_state

    @staticmethod
    def _neighbor_scale(Z: np.ndarray, k: int = 10, max_probe: int = 1024) -> float:
        if len(Z) <= k:
            return 0.0
        probe = Z
        if len(Z) > max_probe:
            probe = Z[:: int(np.ceil(len(Z) / max_probe))]
        sq = np.maximum(
            (probe**2).sum(axis=1)[:, None] + (Z**2).sum(axis=1)[None, :]
            - 2.0 * probe @ Z.T,
            0.0,
        )
        kth = np.sqrt(np.sort(sq, axis=1)[:, k])  # column 0 is the point itself
        return float(np.median(kth))

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be [n, dim] with one reward per row")
        losing = y <= 0.0
        if not losing.any():
            raise ValueError("no losing trajectories (reward <= 0) to fit on")
        raw_inputs = X[losing]
        targets = (-y[losing])[:, None]
        # Standardization stats come from the actual training rows, so
        # winning trajectories cannot influence the fit.
        self.in_mean_ = raw_inputs.mean(axis=0)
        self.in_std_ = np.maximum(raw_inputs.std(axis=0), 1e-12)
        inputs = (raw_inputs - self.in_mean_) / self.in_std_
        self.jitter_scale_ = self.jitter * self._neighbor_scale(inputs)
        self.store_ = ParamStore()
        self.mlp_ = Mlp(
            self.store_,
            "el",
            [X.shape[1], self.hidden_width, 1],
            rng=rng_mod.generator(self.random_state, "el-init"),
            zero_final=True,
        )
        rng = rng_mod.generator(self.random_state, "el-epochs")
        chunks = max(1, int(np.ceil(len(inputs) / self.batch_size)))
        self.loss_history_ = []
        for _ in range(self.epochs):
            perm = rng.permutation(len(inputs))
            epoch_loss = 0.0
            for chunk in np.array_split(perm, chunks):
                x = inputs[chunk]
                if self.jitter_scale_ > 0.0:
                    x = x + self.jitter_scale_ * rng.standard_normal(x.shape)
                self.store_.zero_grad()
                pred = T.softplus(self.mlp_.forward(T.constant(x)))
                diff = T.sub(pred, T.constant(targets[chunk]))
                loss = T.mean_all(T.mul(diff, diff))
                loss.backward()
                adam_mod.adam_update(self.store_, lr=self.learning_rate)
                epoch_loss += loss.item() * len(chunk)
            self.loss_history_.append(epoch_loss / len(inputs))
        predictions = self.predict(X)
        self.train_min_ = float(predictions.min())
        self.train_max_ = float(predictions.max())
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "store_"):
            raise NotFittedError("fit must run before predict")
        X = (np.asarray(X, dtype=np.float64) - self.in_mean_) / self.in_std_
        return T.softplus(self.mlp_.forward(T.constant(X))).data[:, 0].copy()

    def predict_scaled(self, X) -> np.ndarray:
        """Predictions min-max scaled by the fit set's range."""
        return normalize_el(self.predict(X), self.train_min_, self.train_max_)

    def save(self, path) -> None:
        if not hasattr(self, "store_"):
            raise NotFittedError("fit must run before save")
        checkpoint.save_params(
            self.store_,
            path,
            {
                "kind": "el-mlp",
                "in_width": self.mlp_.in_width,
                "hidden_width": self.hidden_width,
                "in_mean": self.in_mean_.tolist(),
                "in_std": self.in_std_.tolist(),
                "train_min": self.train_min_,
                "train_max": self.train_max_,
            },
        )

    @classmethod
    def load(cls, path) -> "ExploitedLevelRegressor":
        store, meta = checkpoint.load_params(path)
        if meta.get("kind") != "el-mlp":
            raise ValueError(f"checkpoint at {path} is not an EL regressor")
        model = cls(hidden_width=meta["hidden_width"])
        model.store_ = store
        model.mlp_ = Mlp(store, "el", [meta["in_width"], meta["hidden_width"], 1])
        model.in_mean_ = np.array(meta["in_mean"])
        model.in_std_ = np.array(meta["in_std"])
        model.train_min_ = meta["train_min"]
        model.train_max_ = meta["train_max"]
        return model


class RecurrentExploitedLevelEstimator(BaseEstimator, RegressorMixin):
    """Alternative estimator reading raw trajectories through a GRU.

    The final recurrent state feeds a linear + softplus head. Same
    training target as the MLP route (losing trajectories, ``-reward``);
    selected with ``--estimator gru`` on the command line. Trajectories
    are batched by equal length.
    """

    def __init__(
        self,
        hidden_width: int = 16,
        epochs: int = 200,
        learning_rate: float = 0.001,
        num_actions: int | None = None,
        random_state: int = 0,
    ):
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.num_actions = num_actions
        self.random_state = random_state

    def _encode(self, sequences) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        groups: dict[int, list[int]] = {}
        for i, (obs, _) in enumerate(sequences):
            groups.setdefault(len(obs), []).append(i)
        encoded = {}
        for length, idx in sorted(groups.items()):
            xs = []
            for i in idx:
                obs, act = sequences[i]
                onehot = np.zeros((len(act), self.num_actions_))
                onehot[np.arange(len(act)), np.asarray(act, dtype=np.int64)] = 1.0
                xs.append(np.concatenate([np.asarray(obs, dtype=np.float64), onehot], axis=1))
            encoded[length] = (np.array(idx, dtype=np.intp), np.stack(xs))
        return encoded

    def _final_state(self, batch: np.ndarray) -> T.Tensor:
        h = T.constant(np.zeros((batch.shape[0], self.hidden_width)))
        for t in range(batch.shape[1]):
            h = self.gru_.step(h, T.constant(batch[:, t]))
        return h

    def fit(self, sequences, y):
        y = np.asarray(y, dtype=np.float64)
        losing = y <= 0.0
        if not losing.any():
            raise ValueError("no losing trajectories (reward <= 0) to fit on")
        sequences = list(sequences)
        self.num_actions_ = (
            int(max(np.max(act) for _, act in sequences)) + 1
            if self.num_actions is None
            else self.num_actions
        )
        in_width = sequences[0][0].shape[1] + self.num_actions_
        rng = rng_mod.generator(self.random_state, "el-gru-init")
        self.store_ = ParamStore()
        self.gru_ = GruCell(self.store_, "gru", in_width, self.hidden_width, rng)
        self.head_w_ = self.store_.add("head.w", np.zeros((self.hidden_width, 1)))
        self.head_b_ = self.store_.add("head.b", np.zeros(1))
        train = [s for s, keep in zip(sequences, losing) if keep]
        targets = (-y[losing])[:, None]
        encoded = self._encode(train)
        for _ in range(self.epochs):
            self.store_.zero_grad()
            losses = []
            for length in sorted(encoded):
                idx, batch = encoded[length]
                pred = T.softplus(T.affine(self._final_state(batch), self.head_w_, self.head_b_))
                diff = T.sub(pred, T.constant(targets[idx]))
                losses.append(T.sum_all(T.mul(diff, diff)))
            total = losses[0]
            for extra in losses[1:]:
                total = T.add(total, extra)
            loss = T.scale(total, 1.0 / len(train))
            loss.backward()
            adam_mod.adam_update(self.store_, lr=self.learning_rate)
        return self

    def predict(self, sequences) -> np.ndarray:
        if not hasattr(self, "store_"):
            raise NotFittedError("fit must run before predict")
        sequences = list(sequences)
        out = np.zeros(len(sequences))
        for length, (idx, batch) in self._encode(sequences).items():
            pred = T.softplus(T.affine(self._final_state(batch), self.head_w_, self.head_b_))
            out[idx] = pred.data[:, 0]
        return out
