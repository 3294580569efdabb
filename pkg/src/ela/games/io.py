"""JSON Lines persistence for trajectory datasets.

The first line is a metadata header; every following line is one
trajectory:

    {"format_version": 1, "env": "rps", "seed": 0, "num_games": 3, ...}
    {"format_version": 1, "env": "rps", "game_id": 0, "player_index": 0,
     "demonstrator_tag": "...", "reward": -4.0,
     "steps": [{"obs": [...], "action": 1}, ...]}

Keys are sorted and floats use repr round-tripping, so identical datasets
serialize to identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .types import Dataset, Trajectory

FORMAT_VERSION = 1


def _trajectory_line(traj: Trajectory, env: str) -> str:
    record = {
        "format_version": FORMAT_VERSION,
        "env": env,
        "game_id": traj.game_id,
        "player_index": traj.player_index,
        "demonstrator_tag": traj.demonstrator_tag,
        "reward": float(traj.terminal_reward),
        "steps": [
            {"obs": [float(v) for v in traj.observations[t]], "action": int(traj.actions[t])}
            for t in range(len(traj))
        ],
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "header": True,
        "env": dataset.env,
        "seed": dataset.seed,
        "num_games": dataset.num_games,
        "pool": dataset.pool_spec,
        "env_config": dataset.extra,
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines.extend(_trajectory_line(traj, dataset.env) for traj in dataset.trajectories)
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"dataset file {path} is empty")
    header = json.loads(lines[0])
    if not header.get("header"):
        raise ValueError(f"dataset file {path} is missing its metadata header")
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format_version {header.get('format_version')!r}")
    trajectories = []
    for line in lines[1:]:
        record = json.loads(line)
        obs = np.array([step["obs"] for step in record["steps"]], dtype=np.float64)
        actions = np.array([step["action"] for step in record["steps"]], dtype=np.int64)
        trajectories.append(
            Trajectory(
                observations=obs,
                actions=actions,
                terminal_reward=float(record["reward"]),
                game_id=int(record["game_id"]),
                player_index=int(record["player_index"]),
                demonstrator_tag=record.get("demonstrator_tag"),
            )
        )
    return Dataset(
        env=header["env"],
        seed=int(header["seed"]),
        trajectories=trajectories,
        num_games=int(header.get("num_games", 0)),
        pool_spec=header.get("pool", ""),
        extra=header.get("env_config", {}),
    )
