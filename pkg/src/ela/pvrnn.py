"""Variational recurrent sequence model with a trainable per-trajectory
condition vector (the strategy representation).

Each trajectory ``(o_0, a_0), ..., (o_T, a_T)`` owns a trainable vector
``l`` that conditions every component of the model. Per step:

    encoder   (h_prev, feat(o_t), feat(a_t), l) -> N(mu_z, sigma_z)
    prior     (h_prev, feat(o_t), l)            -> N(mu_hat, sigma_hat)
    z_t       = mu_z + sigma_z * eps            (reparameterized sample)
    decoder   (h_prev, z_t, feat(o_t), l)       -> action logits
    recurrence(h_prev, [feat(a_t), z_t, feat(o_t), l]) -> h_t   (GRU)

with ``h_0 = 0``. The step loss is the action cross-entropy plus
``KL(encoder || prior)``; the total is the sum over steps. Training
optimizes the network weights and all the ``l``'s jointly with Adam;
because the condition pathway is free of any KL cost, the stable part of
a demonstrator's behavior settles into ``l``.

Training reads only observation/action sequences: rewards and
demonstrator tags never enter this module's optimization.

Input concatenation orders (used by tests that tie encoder and prior
weights together): encoder ``[h, obs_feat, act_feat, l]``, prior
``[h, obs_feat, l]``, decoder ``[h, z, obs_feat, l]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import rng as rng_mod
from .games.types import Trajectory
from .nn import adam as adam_mod
from .nn import checkpoint
from .nn import tensor as T
from .nn.layers import GruCell, Mlp, ParamStore
from .nn.tensor import Tensor


@dataclass
class PvrnnHyper:
    """Model and optimization sizes; defaults are the stock configuration."""

    z_dim: int = 8
    h_dim: int = 8
    r_dim: int = 8
    l_dim: int = 8
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.0005
    repr_learning_rate: float | None = None  # None: same as learning_rate
    repr_init_std: float = 0.1  # l ~ N(0, 0.01 I)
    infer_steps: int = 200
    infer_learning_rate: float = 0.01

    def __post_init__(self):
        for name in ("z_dim", "h_dim", "r_dim", "l_dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def effective_repr_lr(self) -> float:
        return self.learning_rate if self.repr_learning_rate is None else self.repr_learning_rate


class PvrnnNetworks:
    """The parameter bundle: featurizers, encoder, prior, decoder, GRU."""

    def __init__(
        self,
        obs_width: int,
        num_actions: int,
        hyper: PvrnnHyper,
        rng: np.random.Generator | None = None,
        store: ParamStore | None = None,
    ):
        self.obs_width = obs_width
        self.num_actions = num_actions
        self.hyper = hyper
        self.store = store if store is not None else ParamStore()
        h, z, r, l = hyper.h_dim, hyper.z_dim, hyper.r_dim, hyper.l_dim
        self.psi_o = Mlp(self.store, "psi_o", [obs_width, h, h], rng)
        self.psi_a = Mlp(self.store, "psi_a", [num_actions, h, h], rng)
        self.encoder = Mlp(self.store, "encoder", [r + h + h + l, h, 2 * z], rng, zero_final=True)
        self.prior = Mlp(self.store, "prior", [r + h + l, h, 2 * z], rng, zero_final=True)
        self.decoder = Mlp(self.store, "decoder", [r + z + h + l, h, num_actions], rng, zero_final=True)
        self.gru = GruCell(self.store, "gru", h + z + h + l, r, rng)

    # -- per-step components (batched; every argument is [B, .]) --

    def observation_features(self, obs: Tensor) -> Tensor:
        return self.psi_o.forward(obs)

    def action_features(self, act_onehot: Tensor) -> Tensor:
        return self.psi_a.forward(act_onehot)

    def _split_gaussian(self, out: Tensor) -> tuple[Tensor, Tensor]:
        z = self.hyper.z_dim
        return T.slice_cols(out, 0, z), T.slice_cols(out, z, 2 * z)

    def encoder_step(self, h_prev, obs, act_onehot, l) -> tuple[Tensor, Tensor]:
        """Posterior (mu, log_std) over z_t given the current action."""
        fo = self.observation_features(obs)
        fa = self.action_features(act_onehot)
        return self._encoder_from_features(h_prev, fo, fa, l)

    def _encoder_from_features(self, h_prev, fo, fa, l):
        out = self.encoder.forward(T.concat_cols([h_prev, fo, fa, l]))
        return self._split_gaussian(out)

    def prior_step(self, h_prev, obs, l) -> tuple[Tensor, Tensor]:
        """Prior (mu, log_std) over z_t from past information only."""
        fo = self.observation_features(obs)
        return self._prior_from_features(h_prev, fo, l)

    def _prior_from_features(self, h_prev, fo, l):
        out = self.prior.forward(T.concat_cols([h_prev, fo, l]))
        return self._split_gaussian(out)

    def decoder_step(self, h_prev, z, obs, l) -> Tensor:
        """Action logits from the latent sample and past information."""
        fo = self.observation_features(obs)
        return self._decoder_from_features(h_prev, z, fo, l)

    def _decoder_from_features(self, h_prev, z, fo, l):
        return self.decoder.forward(T.concat_cols([h_prev, z, fo, l]))

    def recurrence_step(self, h_prev, act_onehot, z, obs, l) -> Tensor:
        fa = self.action_features(act_onehot)
        fo = self.observation_features(obs)
        return self._recurrence_from_features(h_prev, fa, z, fo, l)

    def _recurrence_from_features(self, h_prev, fa, z, fo, l):
        return self.gru.step(h_prev, T.concat_cols([fa, z, fo, l]))

    def initial_state(self, batch: int) -> Tensor:
        return T.constant(np.zeros((batch, self.hyper.r_dim)))

    # -- persistence --

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "kind": "pvrnn",
            "obs_width": self.obs_width,
            "num_actions": self.num_actions,
            "z_dim": self.hyper.z_dim,
            "h_dim": self.hyper.h_dim,
            "r_dim": self.hyper.r_dim,
            "l_dim": self.hyper.l_dim,
        }
        meta.update(extra_meta or {})
        checkpoint.save_params(self.store, path, meta)

    @classmethod
    def load(cls, path) -> "PvrnnNetworks":
        store, meta = checkpoint.load_params(path)
        hyper = PvrnnHyper(
            z_dim=meta["z_dim"], h_dim=meta["h_dim"], r_dim=meta["r_dim"], l_dim=meta["l_dim"]
        )
        return cls(meta["obs_width"], meta["num_actions"], hyper, store=store)


@dataclass
class BatchLoss:
    objective: Tensor  # scalar: mean per-trajectory total loss
    per_trajectory: np.ndarray  # [B] totals
    recon_sum: float  # summed over batch and time
    kl_sum: float


def _one_hot(actions: np.ndarray, num_actions: int) -> np.ndarray:
    out = np.zeros((len(actions), num_actions))
    out[np.arange(len(actions)), actions] = 1.0
    return out


def batch_loss(
    nets: PvrnnNetworks,
    obs: np.ndarray,  # [B, T, obs_width]
    act_onehot: np.ndarray,  # [B, T, num_actions]
    l_rows: Tensor,  # [B, l_dim]
    noise: np.ndarray,  # [B or 1, T, z_dim]
) -> BatchLoss:
    """Run the step pipeline over a batch of equal-length trajectories."""
    batch, steps, _ = obs.shape
    h = nets.initial_state(batch)
    recon_vec: Tensor | None = None
    kl_vec: Tensor | None = None
    noise = np.broadcast_to(noise, (batch, steps, nets.hyper.z_dim))
    for t in range(steps):
        o_t = T.constant(obs[:, t])
        a_t = T.constant(act_onehot[:, t])
        fo = nets.observation_features(o_t)
        fa = nets.action_features(a_t)
        mu_q, log_std_q = nets._encoder_from_features(h, fo, fa, l_rows)
        mu_p, log_std_p = nets._prior_from_features(h, fo, l_rows)
        kl_t = T.diag_gaussian_kl(mu_q, log_std_q, mu_p, log_std_p)
        eps = T.constant(noise[:, t])
        z = T.add(mu_q, T.mul(T.exp(log_std_q), eps))
        logits = nets._decoder_from_features(h, z, fo, l_rows)
        ce_t = T.softmax_cross_entropy(logits, a_t)
        h = nets._recurrence_from_features(h, fa, z, fo, l_rows)
        recon_vec = ce_t if recon_vec is None else T.add(recon_vec, ce_t)
        kl_vec = kl_t if kl_vec is None else T.add(kl_vec, kl_t)
    total_vec = T.add(recon_vec, kl_vec)
    objective = T.scale(T.sum_all(total_vec), 1.0 / batch)
    return BatchLoss(
        objective=objective,
        per_trajectory=total_vec.data.copy(),
        recon_sum=float(recon_vec.data.sum()),
        kl_sum=float(kl_vec.data.sum()),
    )


def trajectory_loss(
    nets: PvrnnNetworks,
    observations: np.ndarray,
    actions: np.ndarray,
    l: Tensor | np.ndarray,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> tuple[Tensor, float, float]:
    """Total, reconstruction and KL loss sums for a single trajectory.

    ``noise`` fixes the reparameterization draws (one [T, z] array) for
    gradient checking; otherwise they come from ``rng``.
    """
    observations = np.asarray(observations, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    if len(observations) == 0:
        raise ValueError("trajectory must have at least one step")
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise must be given")
        noise = rng.standard_normal((len(actions), nets.hyper.z_dim))
    l_rows = l if isinstance(l, Tensor) else T.constant(np.asarray(l).reshape(1, -1))
    result = batch_loss(
        nets,
        observations[None],
        _one_hot(actions, nets.num_actions)[None],
        l_rows,
        np.asarray(noise)[None],
    )
    return result.objective, result.recon_sum, result.kl_sum


Sequence = tuple[np.ndarray, np.ndarray]  # (observations [T, O], actions [T])


def _length_groups(sequences: list[Sequence]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, (obs, _) in enumerate(sequences):
        groups.setdefault(len(obs), []).append(i)
    return groups


def train_pvrnn(
    sequences: list[Sequence],
    num_actions: int,
    hyper: PvrnnHyper,
    seed: int,
) -> tuple[PvrnnNetworks, np.ndarray, list[float]]:
    """Jointly train the networks and one representation per sequence.

    Minibatches group sequences of equal length (so the per-step loss sum
    runs over real steps only) and are reshuffled every epoch. Returns
    ``(networks, representations [N, l_dim], per-epoch mean loss)``;
    everything is deterministic given the seed.
    """
    if not sequences:
        raise ValueError("training requires a nonempty dataset")
    obs_width = sequences[0][0].shape[1]
    nets = PvrnnNetworks(
        obs_width, num_actions, hyper, rng=rng_mod.generator(seed, "pvrnn-init")
    )
    reprs = rng_mod.generator(seed, "pvrnn-repr-init").normal(
        0.0, hyper.repr_init_std, size=(len(sequences), hyper.l_dim)
    )
    onehots = [_one_hot(act, num_actions) for _, act in sequences]
    groups = _length_groups(sequences)
    row_adam = adam_mod.RowAdam(reprs.shape)
    rng = rng_mod.generator(seed, "pvrnn-epochs")
    repr_lr = hyper.effective_repr_lr
    history: list[float] = []
    for _ in range(hyper.epochs):
        batches: list[np.ndarray] = []
        for length in sorted(groups):
            perm = rng.permutation(np.array(groups[length], dtype=np.intp))
            batches.extend(
                perm[i : i + hyper.batch_size] for i in range(0, len(perm), hyper.batch_size)
            )
        order = rng.permutation(len(batches))
        epoch_total = 0.0
        for batch_idx in order:
            idx = batches[batch_idx]
            obs = np.stack([sequences[i][0] for i in idx])
            act = np.stack([onehots[i] for i in idx])
            noise = rng.standard_normal((len(idx), obs.shape[1], hyper.z_dim))
            nets.store.zero_grad()
            l_tensor = Tensor(reprs, requires_grad=True)
            result = batch_loss(nets, obs, act, T.gather_rows(l_tensor, idx), noise)
            result.objective.backward()
            adam_mod.adam_update(nets.store, lr=hyper.learning_rate)
            row_adam.step(reprs, idx, l_tensor.grad[idx], repr_lr)
            epoch_total += float(result.per_trajectory.sum())
        history.append(epoch_total / len(sequences))
    return nets, reprs, history


def infer_representations(
    nets: PvrnnNetworks,
    sequences: list[Sequence],
    seed: int,
    steps: int | None = None,
    learning_rate: float | None = None,
    chunk_size: int = 256,
) -> np.ndarray:
    """Optimize fresh representations for held-out sequences.

    Network weights stay frozen; each sequence's ``l`` is optimized by
    Adam on its own loss. All sequences share one initial vector and, per
    optimization step, one reparameterization draw (keyed by sequence
    length), so the result for a given sequence does not depend on what
    else is in the batch.
    """
    hyper = nets.hyper
    steps = hyper.infer_steps if steps is None else steps
    lr = hyper.infer_learning_rate if learning_rate is None else learning_rate
    init = rng_mod.generator(seed, "pvrnn-infer-init").normal(
        0.0, hyper.repr_init_std, size=hyper.l_dim
    )
    out = np.zeros((len(sequences), hyper.l_dim))
    groups = _length_groups(sequences)
    nets.store.set_trainable(False)
    try:
        for length in sorted(groups):
            for start in range(0, len(groups[length]), chunk_size):
                idx = np.array(groups[length][start : start + chunk_size], dtype=np.intp)
                obs = np.stack([np.asarray(sequences[i][0], dtype=np.float64) for i in idx])
                act = np.stack(
                    [_one_hot(np.asarray(sequences[i][1], dtype=np.int64), nets.num_actions) for i in idx]
                )
                l_data = np.tile(init, (len(idx), 1))
                noise_rng = rng_mod.generator(seed, f"pvrnn-infer-noise-{length}")
                adam = adam_mod.RowAdam(l_data.shape)
                rows = np.arange(len(idx))
                for _ in range(steps):
                    noise = noise_rng.standard_normal((1, length, hyper.z_dim))
                    l_tensor = Tensor(l_data, requires_grad=True)
                    result = batch_loss(nets, obs, act, l_tensor, noise)
                    result.objective.backward()
                    # The objective averages over the chunk; scale back to
                    # per-sequence gradients so chunking is invisible.
                    adam.step(l_data, rows, l_tensor.grad * len(idx), lr)
                out[idx] = l_data
    finally:
        nets.store.set_trainable(True)
    return out


@dataclass
class RepresentationTable:
    """One learned vector per training trajectory, keyed like the dataset."""

    keys: list[tuple[int, int]]
    vectors: np.ndarray  # [N, l_dim]
    index: dict[tuple[int, int], int] = field(init=False)

    def __post_init__(self):
        self.index = {key: i for i, key in enumerate(self.keys)}
        if len(self.index) != len(self.keys):
            raise ValueError("duplicate trajectory keys in representation table")
        if len(self.keys) != len(self.vectors):
            raise ValueError("keys and vectors disagree in length")

    def __len__(self) -> int:
        return len(self.keys)

    def vector(self, key: tuple[int, int]) -> np.ndarray:
        return self.vectors[self.index[key]]


def _extract_sequences(X) -> tuple[list[Sequence], list[tuple[int, int]]]:
    sequences: list[Sequence] = []
    keys: list[tuple[int, int]] = []
    for i, item in enumerate(X):
        if isinstance(item, Trajectory):
            sequences.append((item.observations, item.actions))
            keys.append(item.key)
        else:
            obs, act = item
            sequences.append(
                (np.asarray(obs, dtype=np.float64), np.asarray(act, dtype=np.int64))
            )
            keys.append((i, -1))
    return sequences, keys


class TrajectoryRepresentationLearner(BaseEstimator, TransformerMixin):
    """Sklearn-style wrapper around the representation model.

    ``fit`` trains networks and per-trajectory vectors jointly on a list
    of :class:`~ela.games.types.Trajectory` (or bare ``(observations,
    actions)`` pairs); the training-table vectors are exposed as
    ``representations_`` and returned by ``fit_transform``. ``transform``
    infers vectors for new trajectories against the frozen networks.
    """

    def __init__(
        self,
        z_dim: int = 8,
        h_dim: int = 8,
        r_dim: int = 8,
        l_dim: int = 8,
        epochs: int = 100,
        batch_size: int = 32,
        learning_rate: float = 0.0005,
        repr_learning_rate: float | None = None,
        infer_steps: int = 200,
        infer_learning_rate: float = 0.01,
        num_actions: int | None = None,
        random_state: int = 0,
    ):
        self.z_dim = z_dim
        self.h_dim = h_dim
        self.r_dim = r_dim
        self.l_dim = l_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.repr_learning_rate = repr_learning_rate
        self.infer_steps = infer_steps
        self.infer_learning_rate = infer_learning_rate
        self.num_actions = num_actions
        self.random_state = random_state

    def _hyper(self) -> PvrnnHyper:
        return PvrnnHyper(
            z_dim=self.z_dim,
            h_dim=self.h_dim,
            r_dim=self.r_dim,
            l_dim=self.l_dim,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            repr_learning_rate=self.repr_learning_rate,
            infer_steps=self.infer_steps,
            infer_learning_rate=self.infer_learning_rate,
        )

    def fit(self, X, y=None):
        sequences, keys = _extract_sequences(X)
        if not sequences:
            raise ValueError("fit requires at least one trajectory")
        num_actions = self.num_actions
        if num_actions is None:
            num_actions = int(max(act.max() for _, act in sequences)) + 1
        self.networks_, vectors, self.loss_history_ = train_pvrnn(
            sequences, num_actions, self._hyper(), self.random_state
        )
        self.representations_ = RepresentationTable(keys, vectors)
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).representations_.vectors

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "networks_"):
            raise NotFittedError("fit must run before transform")
        sequences, _ = _extract_sequences(X)
        return infer_representations(self.networks_, sequences, self.random_state)
