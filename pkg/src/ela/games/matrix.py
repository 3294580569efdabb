"""Exact oracles for symmetric zero-sum matrix games.

The payoff matrix ``M`` holds the ROW player's reward: playing mixed
strategy ``p`` (rows) against ``q`` (columns) yields ``p @ M @ q`` for the
row player. A symmetric zero-sum game has an antisymmetric matrix
(``M = -M.T``), e.g. rock-paper-scissors with actions (rock, paper,
scissors):

         R    P    S
    R  [ 0,  -1,  +1]
    P  [+1,   0,  -1]
    S  [-1,  +1,   0]

Exploitability of a strategy ``p`` is the value a best-responding
opponent extracts from it: ``max_i (M @ p)_i``; it is 0 exactly at a
symmetric Nash strategy and non-negative everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import MixedStrategy, StrategyUndefinedError, validate_distribution

ANTISYMMETRY_TOL = 1e-9


@dataclass
class MatrixGame:
    payoff: np.ndarray

    def __post_init__(self):
        self.payoff = np.asarray(self.payoff, dtype=np.float64)
        if self.payoff.ndim != 2 or self.payoff.shape[0] != self.payoff.shape[1]:
            raise ValueError(f"payoff must be square, got shape {self.payoff.shape}")

    @property
    def num_actions(self) -> int:
        return self.payoff.shape[0]

    def is_symmetric_zero_sum(self, tol: float = ANTISYMMETRY_TOL) -> bool:
        return bool(np.all(np.abs(self.payoff + self.payoff.T) <= tol))


def rps_game() -> MatrixGame:
    return MatrixGame(np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]]))


def _weights(strategy: MixedStrategy | np.ndarray) -> np.ndarray:
    if isinstance(strategy, MixedStrategy):
        return strategy.weights
    return validate_distribution(np.asarray(strategy, dtype=np.float64), "mixed strategy")


def matrix_expected_reward(game: MatrixGame, row, col) -> float:
    """Row player's expected reward ``row @ payoff @ col``."""
    r, c = _weights(row), _weights(col)
    if len(r) != game.num_actions or len(c) != game.num_actions:
        raise ValueError(
            f"strategy dimensions ({len(r)}, {len(c)}) do not match "
            f"{game.num_actions}-action game"
        )
    return float(r @ game.payoff @ c)


def best_response_value(game: MatrixGame, opponent) -> tuple[int, float]:
    """Best pure reply against ``opponent`` (as the column player).

    Returns ``(pure strategy index, value)``; ties break to the lowest
    index for determinism.
    """
    q = _weights(opponent)
    if len(q) != game.num_actions:
        raise ValueError(
            f"strategy dimension {len(q)} does not match {game.num_actions}-action game"
        )
    values = game.payoff @ q
    idx = int(np.argmax(values))  # argmax returns the first (lowest) maximizer
    return idx, float(values[idx])


def exploitability(game: MatrixGame, strategy) -> float:
    """Best-response value against ``strategy`` in a symmetric zero-sum game."""
    if not game.is_symmetric_zero_sum():
        raise ValueError("exploitability requires an antisymmetric payoff matrix")
    _, value = best_response_value(game, strategy)
    return value


def reach_probability(strategy, state_path) -> float:
    """Product of the strategy's action probabilities along a state path.

    ``state_path`` is an ordered list of ``(observation, action)`` pairs;
    an empty path has probability 1. Raises
    :class:`StrategyUndefinedError` when the strategy does not cover an
    observation on the path, and ``ValueError`` for an illegal action.
    """
    prob = 1.0
    for observation, action in state_path:
        row = strategy.probs(observation)
        if not 0 <= action < len(row):
            raise ValueError(f"action {action} out of range for {len(row)} legal actions")
        prob *= float(row[action])
    return prob


__all__ = [
    "MatrixGame",
    "StrategyUndefinedError",
    "best_response_value",
    "exploitability",
    "matrix_expected_reward",
    "reach_probability",
    "rps_game",
]
