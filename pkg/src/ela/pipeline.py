"""End-to-end pipeline: data generation, representation learning,
exploited-level estimation, filtered policy training, and evaluation.

Every stage writes its artifacts into one output directory; the final
manifest records the resolved configuration, the chosen threshold and a
sha256 per file, so identical configurations produce identical manifests.
A failing stage leaves a ``FAILED`` marker naming the stage next to
whatever partial outputs exist.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

import numpy as np

from .config import RunConfig
from .el import ExploitedLevelRegressor, normalize_el
from .games import generate_dataset, load_dataset, make_env, parse_pool_spec, save_dataset
from .offline import FilterConfig, bc_train, filter_dataset, supported_exploitability
from .pvrnn import TrajectoryRepresentationLearner
from .tables import ElRow, ReprRow, write_el_csv, write_repr_csv, write_summary_csv

MANIFEST_VERSION = 1


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def representation_rows(dataset, keys, vectors) -> list[ReprRow]:
    info = {t.key: t for t in dataset.trajectories}
    return [
        ReprRow(
            key=key,
            tag=info[key].demonstrator_tag or "",
            reward=info[key].terminal_reward,
            vector=vectors[i],
        )
        for i, key in enumerate(keys)
    ]


def scaled_el_assignment(el_rows) -> dict[tuple[int, int], float]:
    return {row.key: row.el_scaled for row in el_rows}


def fit_el_rows(repr_rows, hidden: int, epochs: int, lr: float, seed: int):
    """Fit the EL regressor on representation rows; returns (model, el rows)."""
    vectors = np.stack([row.vector for row in repr_rows])
    rewards = np.array([row.reward for row in repr_rows])
    model = ExploitedLevelRegressor(
        hidden_width=hidden, epochs=epochs, learning_rate=lr, random_state=seed
    ).fit(vectors, rewards)
    raw = model.predict(vectors)
    scaled = normalize_el(raw)
    rows = [
        ElRow(key=r.key, tag=r.tag, reward=r.reward, el_raw=float(raw[i]), el_scaled=float(scaled[i]))
        for i, r in enumerate(repr_rows)
    ]
    return model, rows


def run_pipeline(config: RunConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").unlink(missing_ok=True)
    config.write(out / "resolved.cfg")
    manifest: dict = {
        "format_version": MANIFEST_VERSION,
        "seed": config.seed,
        "stages": {},
    }
    state: dict = {}

    def artifact(stage: str, name: str) -> Path:
        manifest["stages"].setdefault(stage, []).append(name)
        return out / name

    def run_stage(stage: str, fn) -> None:
        try:
            fn()
        except Exception as exc:
            (out / "FAILED").write_text(f"{stage}: {exc}\n")
            raise PipelineError(stage, exc) from exc

    def stage_gen_data():
        if config.data:
            source = Path(config.data)
            if not source.exists():
                raise FileNotFoundError(f"dataset file not found: {source}")
            shutil.copyfile(source, artifact("gen-data", "data.jsonl"))
            dataset = load_dataset(out / "data.jsonl")
            if dataset.env != config.env:
                raise ValueError(
                    f"dataset env {dataset.env!r} does not match config env {config.env!r}"
                )
            env = make_env(config.env, dataset.extra.get("rounds", config.rounds))
        else:
            env = make_env(config.env, config.rounds)
            pool = parse_pool_spec(config.pool, env)
            dataset = generate_dataset(pool, config.games, env, config.seed, pool_spec=config.pool)
            save_dataset(dataset, artifact("gen-data", "data.jsonl"))
        state["env"] = env
        state["dataset"] = dataset
        state["pool"] = parse_pool_spec(config.pool, env)

    def stage_train_repr():
        learner = TrajectoryRepresentationLearner(
            z_dim=config.z_dim,
            h_dim=config.h_dim,
            r_dim=config.r_dim,
            l_dim=config.l_dim,
            epochs=config.repr_epochs,
            batch_size=config.repr_batch_size,
            learning_rate=config.repr_learning_rate,
            repr_learning_rate=config.repr_vector_learning_rate or None,
            infer_steps=config.infer_steps,
            infer_learning_rate=config.infer_learning_rate,
            num_actions=state["env"].num_actions,
            random_state=config.seed,
        )
        learner.fit(state["dataset"].trajectories)
        learner.networks_.save(
            artifact("train-repr", "pvrnn.ckpt"), {"env": config.env, "seed": config.seed}
        )
        state["repr_rows"] = representation_rows(
            state["dataset"], learner.representations_.keys, learner.representations_.vectors
        )
        write_repr_csv(artifact("train-repr", "repr.csv"), state["repr_rows"], seed=config.seed)

    def stage_estimate_el():
        model, el_rows = fit_el_rows(
            state["repr_rows"],
            config.el_hidden,
            config.el_epochs,
            config.el_learning_rate,
            config.seed,
        )
        model.save(artifact("estimate-el", "el_model.ckpt"))
        write_el_csv(artifact("estimate-el", "el.csv"), el_rows, seed=config.seed)
        state["scaled_el"] = scaled_el_assignment(el_rows)

    def _train_variant(name: str, filter_config: FilterConfig) -> dict:
        filtered = filter_dataset(state["dataset"], filter_config, state.get("scaled_el"))
        policy = bc_train(
            filtered,
            seed=config.seed,
            hidden_sizes=(config.policy_hidden, config.policy_hidden),
            epochs=config.policy_epochs,
            minibatches_per_epoch=config.policy_minibatches,
            learning_rate=config.policy_learning_rate,
            num_actions=state["env"].num_actions,
        )
        path = artifact("train-policy", f"policy_{name}.ckpt")
        policy.save(
            path,
            {"env": config.env, "env_config": state["env"].config(), "seed": config.seed},
        )
        return {"policy": policy, "kept": len(filtered.trajectories), "file": path.name}

    def stage_train_policy():
        variants: dict[str, dict] = {}
        variants["none"] = _train_variant("none", FilterConfig("none"))
        variants["wt"] = _train_variant("wt", FilterConfig("wt"))
        for threshold in config.threshold_grid():
            key = f"ela@{threshold:g}"
            try:
                variants[key] = _train_variant(
                    f"ela_t{threshold:g}", FilterConfig("ela", threshold)
                )
                variants[key]["threshold"] = threshold
            except ValueError as exc:
                if "removed all trajectories" not in str(exc):
                    raise
                variants[key] = {"policy": None, "kept": 0, "threshold": threshold}
        state["variants"] = variants

    def stage_evaluate():
        rows = []
        for info in state["variants"].values():
            if info["policy"] is None:
                continue
            info["supported_exploitability"] = supported_exploitability(
                info["policy"], state["pool"], state["env"]
            )
        ela_keys = [
            k
            for k, info in state["variants"].items()
            if k.startswith("ela@") and info["policy"] is not None
        ]
        best = min(ela_keys, key=lambda k: state["variants"][k]["supported_exploitability"])
        manifest["chosen_ela_threshold"] = state["variants"][best]["threshold"]
        shutil.copyfile(
            out / state["variants"][best]["file"], artifact("evaluate", "policy_ela.ckpt")
        )
        for name, info in state["variants"].items():
            rows.append(
                {
                    "variant": name,
                    "threshold": "" if "threshold" not in info else f"{info['threshold']:g}",
                    "kept_trajectories": info["kept"],
                    "supported_exploitability": (
                        float(info["supported_exploitability"])
                        if info.get("policy") is not None
                        else float("nan")
                    ),
                }
            )
        write_summary_csv(
            artifact("evaluate", "summary.csv"),
            rows,
            ["variant", "threshold", "kept_trajectories", "supported_exploitability"],
            seed=config.seed,
        )

    for stage, fn in (
        ("gen-data", stage_gen_data),
        ("train-repr", stage_train_repr),
        ("estimate-el", stage_estimate_el),
        ("train-policy", stage_train_policy),
        ("evaluate", stage_evaluate),
    ):
        run_stage(stage, fn)

    manifest["config"] = {
        line.split("=", 1)[0]: line.split("=", 1)[1]
        for line in (out / "resolved.cfg").read_text().splitlines()
    }
    files = ["resolved.cfg"] + [
        name for names in manifest["stages"].values() for name in names
    ]
    manifest["hashes"] = {name: _sha256(out / name) for name in sorted(files)}
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    (out / "FAILED").unlink(missing_ok=True)
    return manifest
