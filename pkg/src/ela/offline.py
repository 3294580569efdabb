"""Exploited-level augmented offline learning and the evaluation harness.

The filter is a pure dataset -> dataset transform (so any offline learner
can consume its output): ELA keeps trajectories whose scaled exploited
level is at or below the threshold, WT keeps winners (reward > 0), NONE
is the identity. Thresholding is inclusive so a threshold of 1.0, the
maximum scaled value, reproduces the unfiltered learner exactly.

Behavior cloning maximizes the likelihood of dataset actions with a
feed-forward policy conditioned on the current observation. Evaluation
reports the average score between two agents (sign of the episode reward
for repeated matrix games, chip differential for Kuhn) and the supported
exploitability against a demonstrator pool, with an exact closed-form
path alongside simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import rng as rng_mod
from .games import kuhn as kuhn_mod
from .games.repeated import RepeatedMatrixGameEnv
from .games.types import BehavioralStrategy, Dataset, DemonstratorPool, observation_key
from .nn import adam as adam_mod
from .nn import checkpoint
from .nn import tensor as T
from .nn.layers import Mlp, ParamStore

FILTER_MODES = ("none", "wt", "ela")


@dataclass
class FilterConfig:
    mode: str = "none"
    el_threshold: float = 1.0  # applied to scaled EL in [0, 1]

    def __post_init__(self):
        if self.mode not in FILTER_MODES:
            raise ValueError(f"filter mode must be one of {FILTER_MODES}, got {self.mode!r}")
        if not 0.0 <= self.el_threshold <= 1.0:
            raise ValueError(f"el_threshold must be in [0, 1], got {self.el_threshold}")


def filter_dataset(
    dataset: Dataset,
    config: FilterConfig,
    scaled_el: dict[tuple[int, int], float] | None = None,
) -> Dataset:
    """Apply the configured trajectory filter, preserving order and metadata.

    ELA mode needs a scaled exploited level for every trajectory; WT mode
    keeps strictly positive terminal rewards. An empty result is an error
    rather than a silently useless dataset.
    """
    if config.mode == "none":
        kept = list(dataset.trajectories)
    elif config.mode == "wt":
        kept = [t for t in dataset.trajectories if t.terminal_reward > 0.0]
    else:
        if scaled_el is None:
            raise ValueError("ELA filtering requires a scaled exploited-level assignment")
        missing = [t.key for t in dataset.trajectories if t.key not in scaled_el]
        if missing:
            raise ValueError(
                f"scaled exploited level missing for {len(missing)} trajectories, "
                f"e.g. {missing[:5]}"
            )
        kept = [t for t in dataset.trajectories if scaled_el[t.key] <= config.el_threshold]
    if not kept:
        raise ValueError(f"filter removed all trajectories (mode={config.mode})")
    return Dataset(
        env=dataset.env,
        seed=dataset.seed,
        trajectories=kept,
        num_games=dataset.num_games,
        pool_spec=dataset.pool_spec,
        extra=dataset.extra,
    )


class BehaviorCloningPolicy(BaseEstimator, ClassifierMixin):
    """Feed-forward policy trained to imitate dataset actions.

    ``fit(X, y)`` consumes pooled (observation, action) pairs. Each epoch
    shuffles the pairs and runs ``minibatches_per_epoch`` Adam steps on
    the mean negative log-likelihood. ``nll_history_`` holds the epoch
    averages.
    """

    def __init__(
        self,
        hidden_sizes: tuple[int, ...] = (256, 256),
        epochs: int = 300,
        minibatches_per_epoch: int = 50,
        learning_rate: float = 0.0005,
        num_actions: int | None = None,
        random_state: int = 0,
    ):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.minibatches_per_epoch = minibatches_per_epoch
        self.learning_rate = learning_rate
        self.num_actions = num_actions
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be [n, obs_width] with one action per row")
        num_actions = self.num_actions or int(y.max()) + 1
        onehot = np.zeros((len(y), num_actions))
        onehot[np.arange(len(y)), y] = 1.0
        self.classes_ = np.arange(num_actions)
        self.store_ = ParamStore()
        self.mlp_ = Mlp(
            self.store_,
            "policy",
            [X.shape[1], *self.hidden_sizes, num_actions],
            rng=rng_mod.generator(self.random_state, "bc-init"),
            zero_final=True,
        )
        rng = rng_mod.generator(self.random_state, "bc-epochs")
        self.nll_history_ = []
        for _ in range(self.epochs):
            perm = rng.permutation(len(X))
            epoch_nll = 0.0
            chunks = np.array_split(perm, min(self.minibatches_per_epoch, len(X)))
            for chunk in chunks:
                self.store_.zero_grad()
                logits = self.mlp_.forward(T.constant(X[chunk]))
                nll = T.mean_all(T.softmax_cross_entropy(logits, T.constant(onehot[chunk])))
                nll.backward()
                adam_mod.adam_update(self.store_, lr=self.learning_rate)
                epoch_nll += nll.item() * len(chunk)
            self.nll_history_.append(epoch_nll / len(X))
        return self

    def fit_dataset(self, dataset: Dataset):
        """Pool (observation, action) pairs across the dataset's trajectories."""
        X = np.concatenate([t.observations for t in dataset.trajectories])
        y = np.concatenate([t.actions for t in dataset.trajectories])
        return self.fit(X, y)

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "store_"):
            raise NotFittedError("fit must run before predict")
        logits = self.mlp_.forward(T.constant(np.asarray(X, dtype=np.float64))).data
        z = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(z)
        return ez / ez.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def as_behavioral_strategy(self, env) -> BehavioralStrategy:
        """Tabulate the policy over every observation the env can produce."""
        observations = env.enumerate_observations()
        probs = self.predict_proba(np.stack(observations))
        return BehavioralStrategy(
            {observation_key(obs): probs[i] for i, obs in enumerate(observations)}
        )

    def save(self, path, env_meta: dict | None = None) -> None:
        if not hasattr(self, "store_"):
            raise NotFittedError("fit must run before save")
        meta = {
            "kind": "policy",
            "obs_width": self.mlp_.in_width,
            "num_actions": self.mlp_.out_width,
            "hidden_sizes": list(self.hidden_sizes),
        }
        meta.update(env_meta or {})
        checkpoint.save_params(self.store_, path, meta)

    @classmethod
    def load(cls, path) -> tuple["BehaviorCloningPolicy", dict]:
        store, meta = checkpoint.load_params(path)
        if meta.get("kind") != "policy":
            raise ValueError(f"checkpoint at {path} is not a policy")
        policy = cls(hidden_sizes=tuple(meta["hidden_sizes"]), num_actions=meta["num_actions"])
        policy.store_ = store
        policy.mlp_ = Mlp(
            store, "policy", [meta["obs_width"], *meta["hidden_sizes"], meta["num_actions"]]
        )
        policy.classes_ = np.arange(meta["num_actions"])
        return policy, meta


def bc_train(dataset: Dataset, seed: int = 0, **policy_kwargs) -> BehaviorCloningPolicy:
    """Behavior cloning on a (possibly filtered) dataset."""
    policy = BehaviorCloningPolicy(random_state=seed, **policy_kwargs)
    return policy.fit_dataset(dataset)


def _as_strategy(agent, env) -> BehavioralStrategy:
    if isinstance(agent, BehavioralStrategy):
        return agent
    return agent.as_behavioral_strategy(env)


def _episode_score(reward: float, env) -> float:
    if env.score_kind == "sign":
        return float(np.sign(reward))
    return float(reward)


def evaluate_avg_score(agent_a, agent_b, env, num_games: int, seed: int = 0) -> float:
    """Average episode score of ``agent_a`` against ``agent_b``.

    Repeated matrix games score each episode as the sign of the terminal
    reward ((wins - losses) / games); Kuhn scores the chip differential.
    Episodes run on independent child seeds.
    """
    if num_games < 1:
        raise ValueError("num_games must be >= 1")
    sa = _as_strategy(agent_a, env)
    sb = _as_strategy(agent_b, env)
    children = np.random.SeedSequence(seed).spawn(num_games)
    total = 0.0
    for child in children:
        traj_a, _ = env.play_episode(sa, sb, np.random.default_rng(child))
        total += _episode_score(traj_a.terminal_reward, env)
    return total / num_games


def exact_average_score(agent_a, agent_b, env) -> float:
    """Closed-form expected score per round (repeated games) or hand (Kuhn).

    For repeated matrix games this is the mean per-round reward from the
    exact Markov-chain evolution (the simulated counterpart is the mean
    terminal reward divided by the number of rounds). For Kuhn it is the
    expected chip differential with roles split evenly, from full tree
    enumeration.
    """
    sa = _as_strategy(agent_a, env)
    sb = _as_strategy(agent_b, env)
    if isinstance(env, RepeatedMatrixGameEnv):
        return env.exact_mean_round_reward(sa, sb)
    value_as_first = kuhn_mod.expected_value(sa, sb)
    value_as_second = -kuhn_mod.expected_value(sb, sa)
    return 0.5 * (value_as_first + value_as_second)


def mean_round_score(agent_a, agent_b, env, num_games: int, seed: int = 0) -> float:
    """Simulated counterpart of :func:`exact_average_score`."""
    sa = _as_strategy(agent_a, env)
    sb = _as_strategy(agent_b, env)
    children = np.random.SeedSequence(seed).spawn(num_games)
    total = 0.0
    for child in children:
        traj_a, _ = env.play_episode(sa, sb, np.random.default_rng(child))
        total += traj_a.terminal_reward
    per_episode = total / num_games
    if isinstance(env, RepeatedMatrixGameEnv):
        return per_episode / env.rounds
    return per_episode


def evaluate_vs_pool(agent, pool: DemonstratorPool, env, num_games: int, seed: int = 0) -> float:
    """Average episode score against opponents drawn from the pool.

    Each episode samples a demonstrator by weight and assigns roles by a
    fair coin, mirroring dataset generation.
    """
    if num_games < 1:
        raise ValueError("num_games must be >= 1")
    strategy = _as_strategy(agent, env)
    children = np.random.SeedSequence(seed).spawn(num_games)
    total = 0.0
    for child in children:
        rng = np.random.default_rng(child)
        entry = pool.entries[pool.sample_index(rng)]
        if rng.random() < 0.5:
            traj, _ = env.play_episode(strategy, entry.strategies[1], rng)
        else:
            _, traj = env.play_episode(entry.strategies[0], strategy, rng)
        total += _episode_score(traj.terminal_reward, env)
    return total / num_games


def supported_exploitability(
    agent,
    pool: DemonstratorPool,
    env,
    num_games: int = 0,
    seed: int = 0,
) -> float:
    """Worst-case loss rate against the demonstrators that built the dataset.

    ``max`` over pool entries of the negated average score versus that
    demonstrator. ``num_games=0`` selects the exact closed-form path;
    otherwise each matchup is simulated with ``num_games`` episodes.

    In sequential games the pool entry plays both roles (its strategy
    pair), matching how the offline dataset was generated.
    """
    worst = -np.inf
    strategy = _as_strategy(agent, env)
    for entry in pool.entries:
        if num_games == 0:
            if isinstance(env, RepeatedMatrixGameEnv):
                score = exact_average_score(strategy, entry.strategies[0], env)
            else:
                as_first = kuhn_mod.expected_value(strategy, entry.strategies[1])
                as_second = -kuhn_mod.expected_value(entry.strategies[0], strategy)
                score = 0.5 * (as_first + as_second)
        else:
            score = _pool_entry_score(strategy, entry, env, num_games, seed)
        worst = max(worst, -score)
    return float(worst)


def _pool_entry_score(strategy, entry, env, num_games: int, seed: int) -> float:
    children = np.random.SeedSequence(seed).spawn(num_games)
    total = 0.0
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        if i % 2 == 0:
            traj, _ = env.play_episode(strategy, entry.strategies[1], rng)
            total += traj.terminal_reward
        else:
            _, traj = env.play_episode(entry.strategies[0], strategy, rng)
            total += traj.terminal_reward
    per_episode = total / num_games
    if isinstance(env, RepeatedMatrixGameEnv):
        return per_episode / env.rounds
    return per_episode


def cross_evaluate(
    agents: dict[str, object], env, num_games: int, seed: int = 0
) -> tuple[list[str], np.ndarray]:
    """Round-robin score matrix: entry [i, j] is agent i's score against j.

    The matrix is antisymmetric in expectation with a near-zero diagonal.
    Each pairing gets its own evaluation substream.
    """
    names = list(agents)
    if len(names) < 2:
        raise ValueError("cross evaluation needs at least two agents")
    matrix = np.zeros((len(names), len(names)))
    for i, name_i in enumerate(names):
        for j, name_j in enumerate(names):
            pair_seed = np.random.SeedSequence([seed, i, j]).generate_state(1)[0]
            matrix[i, j] = evaluate_avg_score(
                agents[name_i], agents[name_j], env, num_games, int(pair_seed)
            )
    return names, matrix
