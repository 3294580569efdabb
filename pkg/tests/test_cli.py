"""Command-line interface: every subcommand end to end on tiny inputs,
plus rerun determinism and error reporting."""

import json

import numpy as np
import pytest

from ela.cli import main
from ela.tables import read_el_csv, read_repr_csv


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny dataset plus representation/EL artifacts shared by tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.jsonl"
    assert run(
        "gen-data", "--env", "rps", "--games", 20, "--pool", "bias:0:1,bias:0.6:1",
        "--rounds", 12, "--seed", 5, "--out", data,
    ) == 0
    model, repr_csv = root / "pvrnn.ckpt", root / "repr.csv"
    assert run(
        "train-repr", "--data", data, "--epochs", 3, "--batch-size", 16,
        "--seed", 1, "--out-model", model, "--out-repr", repr_csv,
    ) == 0
    el_csv, el_model = root / "el.csv", root / "el_model.ckpt"
    assert run(
        "estimate-el", "--repr", repr_csv, "--out", el_csv,
        "--out-model", el_model, "--epochs", 60, "--seed", 2,
    ) == 0
    return root


class TestGenData:
    def test_file_layout_and_determinism(self, tmp_path):
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        args = ["gen-data", "--env", "kuhn", "--games", 10,
                "--pool", "nash:0.2:1,alwaysbet::1", "--seed", 3]
        assert run(*args, "--out", out1) == 0
        assert run(*args, "--out", out2) == 0
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().splitlines()
        assert len(lines) == 1 + 20  # header + 2 trajectories per game
        header = json.loads(lines[0])
        assert header["env"] == "kuhn" and header["header"] is True

    def test_bad_pool_is_reported(self, tmp_path, capsys):
        code = run("gen-data", "--env", "rps", "--games", 1, "--pool", "nope",
                   "--out", tmp_path / "x.jsonl")
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestTrainRepr:
    def test_artifacts_and_rerun_determinism(self, workspace, tmp_path):
        m2, r2 = tmp_path / "m.ckpt", tmp_path / "r.csv"
        assert run(
            "train-repr", "--data", workspace / "data.jsonl", "--epochs", 3,
            "--batch-size", 16, "--seed", 1, "--out-model", m2, "--out-repr", r2,
        ) == 0
        assert m2.read_bytes() == (workspace / "pvrnn.ckpt").read_bytes()
        assert r2.read_bytes() == (workspace / "repr.csv").read_bytes()
        rows = read_repr_csv(r2)
        assert len(rows) == 40
        assert all(len(row.vector) == 8 for row in rows)

    def test_missing_dataset_is_reported(self, tmp_path, capsys):
        code = run("train-repr", "--data", tmp_path / "nope.jsonl",
                   "--out-model", tmp_path / "m", "--out-repr", tmp_path / "r")
        assert code == 1
        assert "nope.jsonl" in capsys.readouterr().err


class TestEstimateEl:
    def test_rows_align_with_representations(self, workspace):
        el_rows = read_el_csv(workspace / "el.csv")
        repr_rows = read_repr_csv(workspace / "repr.csv")
        assert [r.key for r in el_rows] == [r.key for r in repr_rows]
        scaled = np.array([r.el_scaled for r in el_rows])
        assert scaled.min() == 0.0 and scaled.max() == 1.0
        assert np.all(np.array([r.el_raw for r in el_rows]) >= 0.0)

    def test_pretrained_model_reuse_reproduces_outputs(self, workspace, tmp_path):
        out = tmp_path / "el2.csv"
        assert run("estimate-el", "--repr", workspace / "repr.csv", "--out", out,
                   "--model", workspace / "el_model.ckpt", "--seed", 2) == 0
        assert out.read_bytes() == (workspace / "el.csv").read_bytes()

    def test_gru_estimator_path(self, workspace, tmp_path):
        out = tmp_path / "el_gru.csv"
        assert run(
            "estimate-el", "--repr", workspace / "repr.csv", "--out", out,
            "--estimator", "gru", "--data", workspace / "data.jsonl",
            "--epochs", 10, "--hidden", 4,
        ) == 0
        rows = read_el_csv(out)
        assert len(rows) == 40
        assert all(row.el_raw >= 0 for row in rows)

    def test_gru_requires_data(self, workspace, tmp_path, capsys):
        code = run("estimate-el", "--repr", workspace / "repr.csv",
                   "--out", tmp_path / "x.csv", "--estimator", "gru")
        assert code == 1
        assert "--data" in capsys.readouterr().err


class TestElDelta:
    def test_writes_estimates(self, workspace, tmp_path):
        out = tmp_path / "delta.csv"
        assert run("el-delta", "--repr", workspace / "repr.csv",
                   "--delta", 10.0, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# format_version=")
        assert len(lines) == 42
        # At a global delta every estimate equals the dataset-wide mean.
        values = {line.rsplit(",", 1)[-1] for line in lines[2:]}
        assert len(values) == 1

    def test_default_delta_to_stdout(self, workspace, capsys):
        assert run("el-delta", "--repr", workspace / "repr.csv") == 0
        out = capsys.readouterr().out
        assert "el_delta" in out and "using default delta" in out


@pytest.fixture(scope="module")
def policies(workspace, tmp_path_factory):
    root = tmp_path_factory.mktemp("policies")
    common = ["--data", workspace / "data.jsonl", "--hidden", 8,
              "--epochs", 4, "--minibatches", 4, "--seed", 9]
    for mode, extra in (
        ("none", []),
        ("wt", []),
        ("ela", ["--el", workspace / "el.csv", "--thresh", 0.8]),
    ):
        assert run("train-policy", *common, "--filter", mode, *extra,
                   "--out", root / f"policy_{mode}.ckpt") == 0
    return root


class TestTrainPolicyAndEvaluate:
    def test_policy_checkpoints_exist(self, policies):
        assert sorted(p.name for p in policies.glob("*.ckpt")) == [
            "policy_ela.ckpt", "policy_none.ckpt", "policy_wt.ckpt",
        ]

    def test_ela_filter_requires_el_csv(self, workspace, tmp_path, capsys):
        code = run("train-policy", "--data", workspace / "data.jsonl",
                   "--filter", "ela", "--out", tmp_path / "p.ckpt")
        assert code == 1
        assert "--el" in capsys.readouterr().err

    def test_evaluate_policy_vs_policy_and_pool(self, policies, tmp_path, capsys):
        out = tmp_path / "score.csv"
        assert run("evaluate", "--a", policies / "policy_none.ckpt",
                   "--b", policies / "policy_wt.ckpt", "--games", 40,
                   "--seed", 0, "--out", out) == 0
        assert "score" in capsys.readouterr().out
        assert out.read_text().count("\n") == 3
        assert run("evaluate", "--a", policies / "policy_none.ckpt",
                   "--b", "pool:bias:0.5:1", "--games", 40, "--seed", 0) == 0

    def test_cross_eval_matrix(self, policies, tmp_path):
        out = tmp_path / "matrix.csv"
        assert run("cross-eval", "--models", policies, "--games", 30,
                   "--seed", 1, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5  # stamp + header + 3 policies
        assert lines[1].split(",")[1:] == ["policy_ela", "policy_none", "policy_wt"]


class TestVerifiers:
    def test_verify_toy_reports_ratio_and_worked_example(self, tmp_path, capsys):
        out = tmp_path / "toy.csv"
        assert run("verify-toy", "--n", 3, "--samples", 20000, "--profiles", 6,
                   "--seed", 0, "--out", out) == 0
        printed = capsys.readouterr().out
        assert "1/n" in printed and "2/9" in printed and "1/6" in printed
        assert len(out.read_text().splitlines()) == 8

    def test_verify_props_passes(self, capsys):
        assert run("verify-props", "--trials", 50, "--trials-bound", 20, "--seed", 1) == 0
        printed = capsys.readouterr().out
        assert "50/50" in printed and "20/20" in printed


class TestExportEmbeddings:
    def test_merges_rows(self, workspace, tmp_path):
        out = tmp_path / "emb.csv"
        assert run("export-embeddings", "--repr", workspace / "repr.csv",
                   "--el", workspace / "el.csv", "--out", out) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 42
        assert lines[1].startswith("game_id,player_index,demonstrator_tag,reward,l_0")
        assert lines[1].endswith("el_raw,el_scaled")

    def test_orphan_keys_are_listed(self, workspace, tmp_path, capsys):
        el_rows = (workspace / "el.csv").read_text().splitlines()
        truncated = tmp_path / "el_short.csv"
        truncated.write_text("\n".join(el_rows[:-2]) + "\n")
        code = run("export-embeddings", "--repr", workspace / "repr.csv",
                   "--el", truncated, "--out", tmp_path / "x.csv")
        assert code == 1
        assert "key mismatch" in capsys.readouterr().err


PIPELINE_CONFIG = """
env=rps
games=16
rounds=10
seed=4
repr_epochs=2
repr_batch_size=16
el_epochs=40
policy_hidden=8
policy_epochs=3
policy_minibatches=3
thresholds=0.5,1.0
"""


class TestRunPipeline:
    def test_end_to_end_and_manifest_determinism(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(PIPELINE_CONFIG)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert run("run-pipeline", "--config", cfg, "--out", out1) == 0
        assert run("run-pipeline", "--config", cfg, "--out", out2) == 0
        manifest = json.loads((out1 / "manifest.json").read_text())
        for name in ("data.jsonl", "repr.csv", "el.csv", "policy_none.ckpt",
                     "policy_wt.ckpt", "policy_ela.ckpt", "summary.csv", "resolved.cfg"):
            assert name in manifest["hashes"], name
            assert (out1 / name).exists()
        assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()
        assert not (out1 / "FAILED").exists()
        # Reduction invariant: the ELA policy at threshold 1.0 equals the
        # unfiltered one, so the chosen checkpoint matches at worst none's
        # hash when threshold 1.0 wins; at minimum both variants exist.
        summary = (out1 / "summary.csv").read_text().splitlines()
        assert summary[0].startswith("# format_version=")
        assert summary[1] == "variant,threshold,kept_trajectories,supported_exploitability"

    def test_set_overrides_and_unknown_keys(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(PIPELINE_CONFIG)
        code = run("run-pipeline", "--config", cfg, "--out", tmp_path / "x",
                   "--set", "frobnicate=1")
        assert code == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_dataset_fails_in_stage_one(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(PIPELINE_CONFIG + "data=/does/not/exist.jsonl\n")
        out = tmp_path / "broken"
        code = run("run-pipeline", "--config", cfg, "--out", out)
        assert code == 1
        err = capsys.readouterr().err
        assert "gen-data" in err and "/does/not/exist.jsonl" in err
        assert (out / "FAILED").read_text().startswith("gen-data:")

    def test_kuhn_pipeline_end_to_end(self, tmp_path):
        cfg = tmp_path / "kuhn.cfg"
        cfg.write_text(
            "env=kuhn\npool=nash:0.2:1,alwaysbet::1\ngames=40\nseed=2\n"
            "repr_epochs=2\nrepr_batch_size=32\nel_epochs=30\npolicy_hidden=8\n"
            "policy_epochs=3\npolicy_minibatches=3\nthresholds=1.0\n"
        )
        out = tmp_path / "kuhn-run"
        assert run("run-pipeline", "--config", cfg, "--out", out) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["chosen_ela_threshold"] == 1.0
        # Sequential-game trajectories have 1-2 steps and still flow
        # through representation learning, filtering and evaluation.
        summary = (out / "summary.csv").read_text()
        assert "none" in summary and "wt" in summary

    def test_config_round_trip(self, tmp_path):
        from ela.config import RunConfig

        cfg = RunConfig.from_items({"games": "9", "thresholds": "0.4"})
        path = tmp_path / "resolved.cfg"
        cfg.write(path)
        again = RunConfig.from_file(path)
        assert again == cfg
        assert again.threshold_grid() == [0.4]
