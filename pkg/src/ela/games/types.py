"""Core data types for two-player zero-sum play and offline datasets.

Conventions used throughout:
  * actions are integer ids into the environment's action list,
  * observations are fixed-width float vectors; a behavioral strategy is
    keyed by the rounded tuple of the observation values,
  * the two trajectories of one episode share a ``game_id`` and carry
    terminal rewards that sum to zero,
  * ``demonstrator_tag`` is evaluation-only metadata: no learner in this
    package reads it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-9


class StrategyUndefinedError(KeyError):
    """A behavioral strategy was queried at an observation it does not cover."""


def observation_key(values: np.ndarray | list[float]) -> tuple[float, ...]:
    """Hashable key for an observation vector (rounded to kill float fuzz)."""
    return tuple(round(float(v), 9) for v in np.asarray(values).reshape(-1))


def validate_distribution(probs: np.ndarray, what: str = "distribution") -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValueError(f"{what} must be a vector, got shape {probs.shape}")
    if np.any(probs < -PROB_TOL):
        raise ValueError(f"{what} has negative entries: {probs}")
    if abs(probs.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{what} sums to {probs.sum()!r}, expected 1")
    return np.clip(probs, 0.0, None)


@dataclass
class MixedStrategy:
    """Convex weights over the pure strategies of a matrix game."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = validate_distribution(self.weights, "mixed strategy")

    def __len__(self) -> int:
        return len(self.weights)


class BehavioralStrategy:
    """Map from observation to a probability vector over legal actions."""

    def __init__(self, table: dict[tuple[float, ...], np.ndarray]):
        self.table = {
            key: validate_distribution(row, f"strategy row at {key}")
            for key, row in table.items()
        }
        # Cached CDF rows make sampling an inverse-CDF lookup.
        self._cdf = {key: np.cumsum(row) for key, row in self.table.items()}

    def probs(self, observation) -> np.ndarray:
        key = observation_key(observation)
        try:
            return self.table[key]
        except KeyError:
            raise StrategyUndefinedError(
                f"strategy undefined at observation {key}"
            ) from None

    def sample(self, observation, rng: np.random.Generator) -> int:
        key = observation_key(observation)
        try:
            cdf = self._cdf[key]
        except KeyError:
            raise StrategyUndefinedError(
                f"strategy undefined at observation {key}"
            ) from None
        return int(np.searchsorted(cdf, rng.random(), side="right"))

    def is_stationary(self) -> bool:
        """True if every observation maps to the same action distribution."""
        rows = list(self.table.values())
        return all(np.array_equal(rows[0], row) for row in rows[1:])


@dataclass
class Trajectory:
    """One player's view of one episode."""

    observations: np.ndarray  # [T, obs_width]
    actions: np.ndarray  # [T] int
    terminal_reward: float
    game_id: int
    player_index: int
    demonstrator_tag: str | None = None

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if len(self.observations) == 0:
            raise ValueError("trajectory must have at least one step")
        if len(self.observations) != len(self.actions):
            raise ValueError("observations and actions must have equal length")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def key(self) -> tuple[int, int]:
        return (self.game_id, self.player_index)

    @property
    def steps(self) -> list[tuple[np.ndarray, int]]:
        return [(self.observations[t], int(self.actions[t])) for t in range(len(self))]


@dataclass
class Dataset:
    """An offline trajectory dataset plus its generation metadata."""

    env: str
    seed: int
    trajectories: list[Trajectory]
    num_games: int = 0
    pool_spec: str = ""
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    def by_key(self) -> dict[tuple[int, int], Trajectory]:
        return {traj.key: traj for traj in self.trajectories}


@dataclass
class PoolEntry:
    """A demonstrator: one behavioral strategy per role, with a sampling weight."""

    strategies: tuple[BehavioralStrategy, BehavioralStrategy]
    weight: float
    tag: str


@dataclass
class DemonstratorPool:
    entries: list[PoolEntry]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("demonstrator pool is empty")
        weights = np.array([e.weight for e in self.entries], dtype=np.float64)
        if np.any(weights < 0):
            raise ValueError("pool weights must be non-negative")
        total = weights.sum()
        if total <= 0:
            raise ValueError("pool weights must not all be zero")
        for entry, w in zip(self.entries, weights / total):
            entry.weight = float(w)

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.entries])

    def sample_index(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(np.cumsum(self.weights), rng.random(), side="right"))
