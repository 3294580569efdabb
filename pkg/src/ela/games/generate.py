"""Demonstrator pools and offline dataset generation.

A pool entry is a *pair* of behavioral strategies (one per role) with a
sampling weight and a tag; episodes draw two entries independently by
weight and assign roles by a fair coin, which symmetrizes sequential
games like Kuhn. Tags are carried on trajectories for evaluation only.

Pool specs are comma-separated ``name:param:weight`` triples:

  rps:   ``uniform::1``           the Nash (uniform) strategy
         ``bias:0.5:1``           bias level 0.5; expands to one entry per
                                  preferred action with sub-weights
                                  0.5/0.3/0.2 of the given weight (rock,
                                  paper, scissors), all sharing the tag
                                  ``bias-0.5``. The skew keeps the pool
                                  mixture off-uniform so an unfiltered
                                  clone of it stays exploitable.
         ``bias:0.5@rock:1``      a single preferred action
  kuhn:  ``nash:0.25:1``          Nash pair with bluff rate alpha=0.25
         ``alwaysbet::1``         bets/calls everywhere (exploitable)
         ``neverbluff::1``        bets/calls only with the king
         ``uniform::1``           coin-flip at every decision
"""

from __future__ import annotations

import numpy as np

from . import kuhn as kuhn_mod
from .repeated import RepeatedMatrixGameEnv, rps_biased_strategy, stationary_strategy
from .types import Dataset, DemonstratorPool, PoolEntry, Trajectory

# Sub-weights over preferred actions used by the rotating ``bias:p:w`` form.
BIAS_PREFERENCE_WEIGHTS = (0.5, 0.3, 0.2)
_ACTION_NAMES = ("rock", "paper", "scissors")


def _rps_entries(env: RepeatedMatrixGameEnv, name: str, param: str, weight: float):
    if name == "uniform":
        strategy = stationary_strategy(env, np.full(3, 1.0 / 3.0))
        return [PoolEntry((strategy, strategy), weight, "uniform")]
    if name == "bias":
        if "@" in param:
            level_str, action_name = param.split("@", 1)
            level = float(level_str)
            preferred = _ACTION_NAMES.index(action_name)
            strategy = rps_biased_strategy(preferred, level, env)
            return [
                PoolEntry((strategy, strategy), weight, f"bias-{level:g}@{action_name}")
            ]
        level = float(param)
        tag = f"bias-{level:g}"
        if level == 0.0:
            strategy = stationary_strategy(env, np.full(3, 1.0 / 3.0))
            return [PoolEntry((strategy, strategy), weight, tag)]
        entries = []
        for preferred, sub in enumerate(BIAS_PREFERENCE_WEIGHTS):
            strategy = rps_biased_strategy(preferred, level, env)
            entries.append(PoolEntry((strategy, strategy), weight * sub, tag))
        return entries
    raise ValueError(f"unknown rps pool entry {name!r}")


def _kuhn_entries(name: str, param: str, weight: float):
    if name == "nash":
        alpha = float(param) if param else 1.0 / 3.0
        pair = kuhn_mod.nash_strategy(alpha)
        return [PoolEntry(pair, weight, f"nash-{alpha:g}")]
    if name == "alwaysbet":
        pair = (kuhn_mod.always_bet_strategy(0), kuhn_mod.always_bet_strategy(1))
        return [PoolEntry(pair, weight, "alwaysbet")]
    if name == "neverbluff":
        pair = (kuhn_mod.never_bluff_strategy(0), kuhn_mod.never_bluff_strategy(1))
        return [PoolEntry(pair, weight, "neverbluff")]
    if name == "uniform":
        pair = (kuhn_mod.uniform_strategy(0), kuhn_mod.uniform_strategy(1))
        return [PoolEntry(pair, weight, "uniform")]
    raise ValueError(f"unknown kuhn pool entry {name!r}")


def parse_pool_spec(spec: str, env) -> DemonstratorPool:
    """Build a demonstrator pool from a ``name:param:weight`` list."""
    entries: list[PoolEntry] = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ValueError(
                f"pool entry {chunk!r} is not of the form name:param:weight"
            )
        name, param, weight_str = parts
        weight = float(weight_str) if weight_str else 1.0
        if isinstance(env, RepeatedMatrixGameEnv):
            entries.extend(_rps_entries(env, name, param, weight))
        else:
            entries.extend(_kuhn_entries(name, param, weight))
    return DemonstratorPool(entries)


def biased_rps_pool(
    env: RepeatedMatrixGameEnv, levels=(0.0, 0.2, 0.5)
) -> DemonstratorPool:
    """The canonical mixed-skill RPS pool with equal weight per bias level."""
    spec = ",".join(f"bias:{level:g}:1" for level in levels)
    return parse_pool_spec(spec, env)


def generate_dataset(
    pool: DemonstratorPool, num_games: int, env, seed: int, pool_spec: str = ""
) -> Dataset:
    """Play ``num_games`` episodes between independently drawn demonstrators.

    Each episode runs on its own child seed derived from ``seed`` and the
    episode index, so generation is deterministic and order-independent.
    Roles are assigned uniformly at random.
    """
    if num_games < 1:
        raise ValueError("num_games must be >= 1")
    children = np.random.SeedSequence(seed).spawn(num_games)
    trajectories: list[Trajectory] = []
    for game_id in range(num_games):
        rng = np.random.default_rng(children[game_id])
        first = pool.entries[pool.sample_index(rng)]
        second = pool.entries[pool.sample_index(rng)]
        if rng.random() < 0.5:
            first, second = second, first
        traj0, traj1 = env.play_episode(first.strategies[0], second.strategies[1], rng)
        for traj, entry, role in ((traj0, first, 0), (traj1, second, 1)):
            traj.game_id = game_id
            traj.player_index = role
            traj.demonstrator_tag = entry.tag
            trajectories.append(traj)
    return Dataset(
        env=env.name,
        seed=seed,
        trajectories=trajectories,
        num_games=num_games,
        pool_spec=pool_spec,
        extra=env.config(),
    )
