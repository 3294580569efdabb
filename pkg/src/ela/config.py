"""Pipeline run configuration: typed key=value files with CLI overrides.

Unknown keys are rejected; every run writes its resolved configuration
next to its outputs so reruns are reproducible from the artifacts alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass
class RunConfig:
    # Data generation (or reuse: set ``data`` to skip generation).
    env: str = "rps"
    pool: str = "bias:0:1,bias:0.2:1,bias:0.5:1"
    data: str = ""
    games: int = 200
    rounds: int = 500
    seed: int = 0
    # Representation model.
    z_dim: int = 8
    h_dim: int = 8
    r_dim: int = 8
    l_dim: int = 8
    repr_epochs: int = 100
    repr_batch_size: int = 32
    repr_learning_rate: float = 0.0005
    # 0 means "same as repr_learning_rate".
    repr_vector_learning_rate: float = 0.0
    infer_steps: int = 200
    infer_learning_rate: float = 0.01
    # Exploited-level regressor.
    el_hidden: int = 32
    el_epochs: int = 500
    el_learning_rate: float = 0.001
    # Offline policy training.
    policy_hidden: int = 256
    policy_epochs: int = 300
    policy_minibatches: int = 50
    policy_learning_rate: float = 0.0005
    # Evaluation.
    eval_games: int = 500
    thresholds: str = "0.2,0.4,0.6,0.8,1.0"

    def __post_init__(self):
        if self.env not in ("rps", "kuhn"):
            raise ValueError(f"env must be rps or kuhn, got {self.env!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    def threshold_grid(self) -> list[float]:
        return [float(t) for t in self.thresholds.split(",") if t.strip()]

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "RunConfig":
        return cls().updated(items)

    def updated(self, items: dict[str, str]) -> "RunConfig":
        values = dataclasses.asdict(self)
        for key, raw in items.items():
            if key not in values:
                raise ValueError(f"unknown config key {key!r}")
            kind = type(getattr(self, key))
            try:
                values[key] = str(raw) if kind is str else kind(raw)
            except (TypeError, ValueError) as exc:
                raise ValueError(
                    f"config key {key!r} expects {kind.__name__}, got {raw!r}"
                ) from exc
        return RunConfig(**values)

    @classmethod
    def from_file(cls, path, overrides: dict[str, str] | None = None) -> "RunConfig":
        items: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = stripped.partition("=")
            items[key.strip()] = value.strip()
        items.update(overrides or {})
        return cls.from_items(items)

    def write(self, path) -> None:
        values = dataclasses.asdict(self)
        lines = [f"{key}={values[key]}" for key in sorted(values)]
        Path(path).write_text("\n".join(lines) + "\n")
