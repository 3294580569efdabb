"""Kuhn poker: a sequential, imperfect-information, zero-sum card game
small enough for exact tree oracles.

Rules: three cards J < Q < K, each player antes 1 chip and is dealt one
card. Player 0 acts first. Actions are PASS (check/fold) and BET
(bet/call, one chip). Betting histories and payoffs for player 0:

    pp   -> showdown, +-1      bp   -> player 0 wins +1
    pbp  -> player 0 folds, -1  bb  -> showdown, +-2
    pbb  -> showdown, +-2

Observations are 9-wide: own-card one-hot (3) followed by the betting
history encoded as one-hot action pairs for up to three moves (6 flags).

The game has a one-parameter family of Nash equilibria for player 0
(bluff rate ``alpha`` in [0, 1/3]) and a unique player-1 equilibrium;
the game value is -1/18 for player 0.
"""

from __future__ import annotations

import numpy as np

from .types import BehavioralStrategy, Trajectory, observation_key

JACK, QUEEN, KING = 0, 1, 2
PASS, BET = 0, 1
NUM_ACTIONS = 2
OBS_WIDTH = 9
GAME_VALUE = -1.0 / 18.0

# Histories where a player still has to act; terminal otherwise.
_DECISION_HISTORIES = ("", "p", "b", "pb")
_TERMINAL_HISTORIES = ("pp", "bp", "bb", "pbp", "pbb")
_ALL_DEALS = [(c0, c1) for c0 in range(3) for c1 in range(3) if c0 != c1]


def _to_act(history: str) -> int:
    return len(history) % 2


def observation(card: int, history: str) -> np.ndarray:
    obs = np.zeros(OBS_WIDTH)
    obs[card] = 1.0
    for slot, move in enumerate(history):
        obs[3 + 2 * slot + (PASS if move == "p" else BET)] = 1.0
    return obs


def terminal_reward(history: str, card0: int, card1: int) -> float:
    """Player 0's reward at a terminal history."""
    high = 1.0 if card0 > card1 else -1.0
    if history == "pp":
        return high
    if history == "bp":
        return 1.0
    if history == "pbp":
        return -1.0
    if history in ("bb", "pbb"):
        return 2.0 * high
    raise ValueError(f"not a terminal history: {history!r}")


def infoset_observations(role: int) -> list[np.ndarray]:
    """All observations at which the given role acts."""
    histories = [h for h in _DECISION_HISTORIES if _to_act(h) == role]
    return [observation(card, h) for card in range(3) for h in histories]


class KuhnEnv:
    """Single-hand Kuhn poker episodes; terminal reward is the chip swing."""

    score_kind = "chips"
    name = "kuhn"
    num_actions = NUM_ACTIONS
    obs_width = OBS_WIDTH

    def enumerate_observations(self) -> list[np.ndarray]:
        return infoset_observations(0) + infoset_observations(1)

    def config(self) -> dict:
        return {}

    def play_episode(
        self,
        strategy_a: BehavioralStrategy,
        strategy_b: BehavioralStrategy,
        rng: np.random.Generator,
    ) -> tuple[Trajectory, Trajectory]:
        deal = _ALL_DEALS[int(rng.integers(len(_ALL_DEALS)))]
        strategies = (strategy_a, strategy_b)
        steps: tuple[list, list] = ([], [])
        history = ""
        while history in _DECISION_HISTORIES:
            role = _to_act(history)
            obs = observation(deal[role], history)
            action = strategies[role].sample(obs, rng)
            steps[role].append((obs, action))
            history += "p" if action == PASS else "b"
        reward = terminal_reward(history, *deal)
        trajectories = []
        for role in (0, 1):
            obs_arr = np.stack([s[0] for s in steps[role]])
            act_arr = np.array([s[1] for s in steps[role]], dtype=np.int64)
            r = reward if role == 0 else -reward
            trajectories.append(
                Trajectory(obs_arr, act_arr, r, game_id=-1, player_index=role)
            )
        return trajectories[0], trajectories[1]


def nash_strategy(alpha: float = 1.0 / 3.0) -> tuple[BehavioralStrategy, BehavioralStrategy]:
    """The Nash equilibrium pair with player-0 bluff rate ``alpha``.

    Player 0: bet alpha with J, never with Q, 3*alpha with K; facing a
    bet after checking, fold J, call with probability alpha + 1/3 with Q,
    always call with K. Player 1 (unique): facing a bet, fold J, call 1/3
    with Q, always call with K; facing a check, bet 1/3 with J, check Q,
    always bet with K.
    """
    if not 0.0 <= alpha <= 1.0 / 3.0:
        raise ValueError(f"alpha must be in [0, 1/3], got {alpha}")

    def bet_prob(p: float) -> np.ndarray:
        return np.array([1.0 - p, p])

    p0 = {
        observation_key(observation(JACK, "")): bet_prob(alpha),
        observation_key(observation(QUEEN, "")): bet_prob(0.0),
        observation_key(observation(KING, "")): bet_prob(3.0 * alpha),
        observation_key(observation(JACK, "pb")): bet_prob(0.0),
        observation_key(observation(QUEEN, "pb")): bet_prob(alpha + 1.0 / 3.0),
        observation_key(observation(KING, "pb")): bet_prob(1.0),
    }
    p1 = {
        observation_key(observation(JACK, "b")): bet_prob(0.0),
        observation_key(observation(QUEEN, "b")): bet_prob(1.0 / 3.0),
        observation_key(observation(KING, "b")): bet_prob(1.0),
        observation_key(observation(JACK, "p")): bet_prob(1.0 / 3.0),
        observation_key(observation(QUEEN, "p")): bet_prob(0.0),
        observation_key(observation(KING, "p")): bet_prob(1.0),
    }
    return BehavioralStrategy(p0), BehavioralStrategy(p1)


def uniform_strategy(role: int) -> BehavioralStrategy:
    return BehavioralStrategy(
        {observation_key(obs): np.array([0.5, 0.5]) for obs in infoset_observations(role)}
    )


def always_bet_strategy(role: int) -> BehavioralStrategy:
    """Bets/calls at every decision point: maximally aggressive."""
    return BehavioralStrategy(
        {observation_key(obs): np.array([0.0, 1.0]) for obs in infoset_observations(role)}
    )


def never_bluff_strategy(role: int) -> BehavioralStrategy:
    """Bets or calls only when holding the king, otherwise checks/folds."""
    table = {}
    for card in range(3):
        for h in _DECISION_HISTORIES:
            if _to_act(h) != role:
                continue
            p_bet = 1.0 if card == KING else 0.0
            table[observation_key(observation(card, h))] = np.array([1.0 - p_bet, p_bet])
    return BehavioralStrategy(table)


def _strategy_prob(strategy: BehavioralStrategy, card: int, history: str, action: int) -> float:
    return float(strategy.probs(observation(card, history))[action])


def expected_value(
    strategy0: BehavioralStrategy, strategy1: BehavioralStrategy
) -> float:
    """Exact expected reward of player 0 by full tree enumeration."""
    strategies = (strategy0, strategy1)

    def walk(history: str, card0: int, card1: int) -> float:
        if history in _TERMINAL_HISTORIES:
            return terminal_reward(history, card0, card1)
        role = _to_act(history)
        card = card0 if role == 0 else card1
        value = 0.0
        for action, move in ((PASS, "p"), (BET, "b")):
            p = _strategy_prob(strategies[role], card, history, action)
            if p > 0.0:
                value += p * walk(history + move, card0, card1)
        return value

    return sum(walk("", c0, c1) for c0, c1 in _ALL_DEALS) / len(_ALL_DEALS)


def kuhn_best_response(
    strategy: BehavioralStrategy, role: int
) -> tuple[BehavioralStrategy, float]:
    """Exact best response against ``strategy`` playing the given role.

    Traverses the full game tree weighting each exploiter infoset by the
    fixed player's reach probability (chance included) and picks the
    argmax action per infoset. Returns the exploiter strategy (for role
    ``1 - role``) and its expected reward.
    """
    exploiter = 1 - role

    def exploiter_reward(history: str, card0: int, card1: int, br: dict) -> float:
        if history in _TERMINAL_HISTORIES:
            r0 = terminal_reward(history, card0, card1)
            return r0 if exploiter == 0 else -r0
        acting = _to_act(history)
        card = card0 if acting == 0 else card1
        if acting == role:
            value = 0.0
            for action, move in ((PASS, "p"), (BET, "b")):
                p = _strategy_prob(strategy, card, history, action)
                if p > 0.0:
                    value += p * exploiter_reward(history + move, card0, card1, br)
            return value
        action = br[observation_key(observation(card, history))]
        return exploiter_reward(history + ("p" if action == PASS else "b"), card0, card1, br)

    # Infoset action values under the fixed opponent, weighted by reach.
    br: dict[tuple[float, ...], int] = {}
    histories = [h for h in _DECISION_HISTORIES if _to_act(h) == exploiter]
    # Later infosets depend on earlier exploiter choices only through
    # reach, and Kuhn's exploiter infosets never precede each other on a
    # path more than once, so value each (card, history) independently by
    # enumerating deals consistent with it.
    for history in sorted(histories, key=len, reverse=True):
        for card in range(3):
            key = observation_key(observation(card, history))
            action_values = []
            for action, move in ((PASS, "p"), (BET, "b")):
                total = 0.0
                for c0, c1 in _ALL_DEALS:
                    my_card = c0 if exploiter == 0 else c1
                    if my_card != card:
                        continue
                    # Opponent reach probability of this history.
                    opp_card = c1 if exploiter == 0 else c0
                    reach = 1.0
                    h = ""
                    for past in history:
                        p_act = PASS if past == "p" else BET
                        if _to_act(h) == role:
                            reach *= _strategy_prob(strategy, opp_card, h, p_act)
                        h += past
                    if reach == 0.0:
                        continue
                    total += reach * exploiter_reward(history + move, c0, c1, br)
                action_values.append(total)
            # Ties break toward the lowest action index (PASS).
            br[key] = PASS if action_values[PASS] >= action_values[BET] else BET
    table = {
        key: np.array([1.0, 0.0]) if action == PASS else np.array([0.0, 1.0])
        for key, action in br.items()
    }
    br_strategy = BehavioralStrategy(table)
    if exploiter == 0:
        value = expected_value(br_strategy, strategy)
    else:
        value = -expected_value(strategy, br_strategy)
    return br_strategy, value


def pair_exploitability(
    strategy0: BehavioralStrategy, strategy1: BehavioralStrategy
) -> float:
    """Sum of both best-response gains; 0 exactly at a Nash pair."""
    _, v_against_1 = kuhn_best_response(strategy1, role=1)
    _, v_against_0 = kuhn_best_response(strategy0, role=0)
    return v_against_1 + v_against_0
