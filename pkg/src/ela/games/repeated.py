"""Repeated symmetric matrix games (rock-paper-scissors and friends).

An episode is ``rounds`` simultaneous plays of the one-shot matrix game.
Each player observes the opponent's previous action as a one-hot vector
prefixed by a game-start token, so the observation width is
``num_actions + 1`` and round 0 is well defined:

    obs = [start, last=action 0, last=action 1, ...]

Per-round rewards (+1 / 0 / -1 in RPS) are summed into a single terminal
reward per trajectory; episodes are exactly zero-sum.
"""

from __future__ import annotations

import numpy as np

from .matrix import MatrixGame, rps_game
from .types import BehavioralStrategy, Trajectory, observation_key

ROCK, PAPER, SCISSORS = 0, 1, 2


class RepeatedMatrixGameEnv:
    """Two players repeatedly play a symmetric zero-sum matrix game."""

    score_kind = "sign"  # episode score = sign of the terminal reward

    def __init__(self, game: MatrixGame, rounds: int, name: str):
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not game.is_symmetric_zero_sum():
            raise ValueError("repeated play assumes an antisymmetric payoff matrix")
        self.game = game
        self.rounds = rounds
        self.name = name

    @property
    def num_actions(self) -> int:
        return self.game.num_actions

    @property
    def obs_width(self) -> int:
        return self.game.num_actions + 1

    def start_observation(self) -> np.ndarray:
        obs = np.zeros(self.obs_width)
        obs[0] = 1.0
        return obs

    def observation_after(self, opponent_action: int) -> np.ndarray:
        obs = np.zeros(self.obs_width)
        obs[1 + opponent_action] = 1.0
        return obs

    def enumerate_observations(self) -> list[np.ndarray]:
        return [self.start_observation()] + [
            self.observation_after(a) for a in range(self.num_actions)
        ]

    def config(self) -> dict:
        return {"rounds": self.rounds}

    def play_episode(
        self,
        strategy_a: BehavioralStrategy,
        strategy_b: BehavioralStrategy,
        rng: np.random.Generator,
    ) -> tuple[Trajectory, Trajectory]:
        obs_a = np.zeros((self.rounds, self.obs_width))
        obs_b = np.zeros((self.rounds, self.obs_width))
        act_a = np.zeros(self.rounds, dtype=np.int64)
        act_b = np.zeros(self.rounds, dtype=np.int64)
        cur_a = self.start_observation()
        cur_b = self.start_observation()
        total = 0.0
        payoff = self.game.payoff
        for t in range(self.rounds):
            obs_a[t] = cur_a
            obs_b[t] = cur_b
            a = strategy_a.sample(cur_a, rng)
            b = strategy_b.sample(cur_b, rng)
            act_a[t] = a
            act_b[t] = b
            total += payoff[a, b]
            cur_a = self.observation_after(b)
            cur_b = self.observation_after(a)
        traj_a = Trajectory(obs_a, act_a, total, game_id=-1, player_index=0)
        traj_b = Trajectory(obs_b, act_b, -total, game_id=-1, player_index=1)
        return traj_a, traj_b

    def exact_mean_round_reward(
        self, strategy_a: BehavioralStrategy, strategy_b: BehavioralStrategy
    ) -> float:
        """Exact per-round expected reward of player a over one episode.

        Evolves the joint distribution over (a's last action, b's last
        action); both strategies may condition on their observation, so
        this covers non-stationary policies such as cloned ones.
        """
        n = self.num_actions
        # rows_a[j] = a's action distribution when b played j last round.
        rows_a = np.stack([strategy_a.probs(self.observation_after(j)) for j in range(n)])
        rows_b = np.stack([strategy_b.probs(self.observation_after(i)) for i in range(n)])
        payoff = self.game.payoff

        p_a0 = strategy_a.probs(self.start_observation())
        p_b0 = strategy_b.probs(self.start_observation())
        total = float(p_a0 @ payoff @ p_b0)
        # state[i, j] = P(a played i, b played j in the previous round)
        state = np.outer(p_a0, p_b0)
        for _ in range(1, self.rounds):
            new_state = np.zeros((n, n))
            round_reward = 0.0
            for i in range(n):
                for j in range(n):
                    mass = state[i, j]
                    if mass == 0.0:
                        continue
                    pa = rows_a[j]  # a saw b's action j
                    pb = rows_b[i]
                    round_reward += mass * float(pa @ payoff @ pb)
                    new_state += mass * np.outer(pa, pb)
            total += round_reward
            state = new_state
        return total / self.rounds


def rps_env(rounds: int = 500) -> RepeatedMatrixGameEnv:
    return RepeatedMatrixGameEnv(rps_game(), rounds, "rps")


def stationary_strategy(env: RepeatedMatrixGameEnv, probs) -> BehavioralStrategy:
    """The same action distribution at every observation of the env."""
    probs = np.asarray(probs, dtype=np.float64)
    return BehavioralStrategy(
        {observation_key(obs): probs.copy() for obs in env.enumerate_observations()}
    )


def rps_biased_strategy(
    preferred: int, bias: float, env: RepeatedMatrixGameEnv | None = None
) -> BehavioralStrategy:
    """Random strategy with a preference: p(preferred) = (1 + 2*bias) / 3.

    The two other actions get (1 - bias) / 3 each, identically at every
    observation; bias 0 is uniform, bias 1 is deterministic.
    """
    if not 0.0 <= bias <= 1.0:
        raise ValueError(f"bias must be in [0, 1], got {bias}")
    env = env or rps_env()
    if env.num_actions != 3:
        raise ValueError("biased strategies are defined for 3-action games")
    if not 0 <= preferred < env.num_actions:
        raise ValueError(f"preferred action {preferred} out of range")
    probs = np.full(env.num_actions, (1.0 - bias) / 3.0)
    probs[preferred] = (1.0 + 2.0 * bias) / 3.0
    return stationary_strategy(env, probs)
