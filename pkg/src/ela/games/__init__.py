"""Game formalism, concrete zero-sum environments, exact oracles, and
offline dataset generation."""

from .generate import (
    BIAS_PREFERENCE_WEIGHTS,
    biased_rps_pool,
    generate_dataset,
    parse_pool_spec,
)
from .io import load_dataset, save_dataset
from .kuhn import (
    GAME_VALUE as KUHN_GAME_VALUE,
    KuhnEnv,
    expected_value as kuhn_expected_value,
    kuhn_best_response,
    nash_strategy as kuhn_nash_strategy,
    pair_exploitability as kuhn_pair_exploitability,
)
from .matrix import (
    MatrixGame,
    best_response_value,
    exploitability,
    matrix_expected_reward,
    reach_probability,
    rps_game,
)
from .repeated import (
    PAPER,
    ROCK,
    SCISSORS,
    RepeatedMatrixGameEnv,
    rps_biased_strategy,
    rps_env,
    stationary_strategy,
)
from .types import (
    BehavioralStrategy,
    Dataset,
    DemonstratorPool,
    MixedStrategy,
    PoolEntry,
    StrategyUndefinedError,
    Trajectory,
    observation_key,
)


def make_env(name: str, rounds: int = 500):
    """Environment factory used by the CLI (``rps`` or ``kuhn``)."""
    if name == "rps":
        return rps_env(rounds)
    if name == "kuhn":
        return KuhnEnv()
    raise ValueError(f"unknown environment {name!r}")
