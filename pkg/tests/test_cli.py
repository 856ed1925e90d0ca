import json
from pathlib import Path

import pytest

from xtaltext.cli import CliError, default_config, run, validate_config

TINY_CONFIG = {
    "seed": 5,
    "synth": {"n_pairs": 48, "sites_max": 4},
    "model": {
        "graph": {"node_dim": 12, "n_layers": 1},
        "text_layers": 1, "text_heads": 2, "text_hidden": 12, "max_len": 64,
        "featurizer": {"cutoff": 5.0, "max_neighbors": 8, "k_rbf": 8},
        "d_joint": 12,
    },
    "train": {"batch_size": 4, "steps": 25, "val_every": 10, "val_batches": 1},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny gen-data + train pipeline shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(TINY_CONFIG))
    data, run_dir = root / "data", root / "run"
    assert run(["gen-data", "--config", str(config), "--out", str(data)]) == 0
    assert run(["train", "--config", str(config), "--data", str(data),
                "--out", str(run_dir)]) == 0
    return config, data, run_dir


class TestValidateConfig:
    def test_empty_file_yields_defaults(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text("")
        assert validate_config(p) == default_config()

    def test_missing_file(self):
        with pytest.raises(CliError) as err:
            validate_config("/nonexistent/config.json")
        assert err.value.code == "config-missing"

    def test_batch_size_one_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"train": {"batch_size": 1}}))
        with pytest.raises(CliError, match="batch_size"):
            validate_config(p)

    def test_multiple_violations_all_reported(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"train": {"batch_size": 1, "p_keep": 3.0}}))
        with pytest.raises(CliError) as err:
            validate_config(p)
        assert "batch_size" in str(err.value) and "p_keep" in str(err.value)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"trian": {"batch_size": 8}}))
        with pytest.raises(CliError, match="unknown config key"):
            validate_config(p)

    def test_seed_propagates(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"seed": 99}))
        cfg = validate_config(p)
        assert cfg["train"]["seed"] == 99 and cfg["synth"]["seed"] == 99


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        assert run(["gen-data", "--frobnicate", "--out", "/tmp/x"]) == 1
        assert "error[usage]" in capsys.readouterr().err

    def test_missing_config_file(self, capsys, tmp_path):
        code = run(["train", "--config", str(tmp_path / "none.json"),
                    "--data", str(tmp_path), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error[config-missing]" in capsys.readouterr().err

    def test_missing_data_dir(self, capsys, tmp_path):
        code = run(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error[missing-input]" in capsys.readouterr().err

    def test_missing_run_inputs(self, capsys, tmp_path):
        code = run(["eval-retrieval", "--run", str(tmp_path), "--data", str(tmp_path)])
        assert code == 1
        assert "error[missing-input]" in capsys.readouterr().err


class TestGenData:
    def test_outputs_and_manifest(self, pipeline):
        _, data, _ = pipeline
        for name in ("structures.jsonl", "corpus.jsonl", "summary.json", "manifest.json"):
            assert (data / name).exists()
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["seed"] == 5
        assert "config_sha256" in manifest and "format_versions" in manifest
        summary = json.loads((data / "summary.json").read_text())
        assert summary["n_pairs"] == 48


class TestTrain:
    def test_outputs(self, pipeline):
        _, _, run_dir = pipeline
        for name in ("checkpoint.bin", "metrics.jsonl", "vocab.txt", "manifest.json"):
            assert (run_dir / name).exists()
        rows = [json.loads(l) for l in (run_dir / "metrics.jsonl").read_text().splitlines()]
        assert len(rows) == 25
        assert all(set(r) >= {"step", "inter_modal", "intra_graph", "intra_text",
                              "mlm", "total"} for r in rows)
        assert any("val_total" in r for r in rows)


class TestEvalCommands:
    def test_retrieval(self, pipeline):
        _, data, run_dir = pipeline
        out = run_dir / "eval-retrieval"
        assert run(["eval-retrieval", "--run", str(run_dir), "--data", str(data),
                    "--ks", "1", "3", "--pool", "4"]) == 0
        report = json.loads((out / "retrieval_report.json").read_text())
        assert {r["direction"] for r in report["reports"]} == {"text->graph", "graph->text"}
        for r in report["reports"]:
            assert r["pool_size"] == 4
            assert 0.0 <= r["topk"]["1"] <= r["topk"]["3"] <= 1.0
        assert (out / "ranks.csv").exists()

    def test_zeroshot(self, pipeline):
        _, data, run_dir = pipeline
        assert run(["eval-zeroshot", "--run", str(run_dir), "--data", str(data),
                    "--subjects", "structure", "oxide-type", "--n-options", "4"]) == 0
        report = json.loads((run_dir / "eval-zeroshot" / "zeroshot_report.json").read_text())
        assert set(report["subjects"]) == {"structure", "oxide-type"}
        for r in report["subjects"].values():
            assert 0.0 <= r["accuracy"] <= 1.0

    def test_app_matrix(self, pipeline):
        _, data, run_dir = pipeline
        assert run(["app-matrix", "--run", str(run_dir), "--data", str(data)]) == 0
        report = json.loads((run_dir / "app-matrix" / "app_matrix.json").read_text())
        assert len(report["matrix"]) == len(report["materials"])
        assert len(report["matrix"][0]) == len(report["applications"]) == 6
        assert all("li_bearing" in m for m in report["materials"])

    def test_cluster_metrics(self, pipeline):
        _, data, run_dir = pipeline
        assert run(["cluster-metrics", "--run", str(run_dir), "--data", str(data)]) == 0
        report = json.loads((run_dir / "cluster-metrics" / "cluster_metrics.json").read_text())
        assert report["reports"], "expected at least one label set with >= 2 classes"
        for r in report["reports"]:
            assert -1.0 <= r["silhouette"] <= 1.0
            assert r["calinski_harabasz"] >= 0.0

    def test_embed(self, pipeline):
        _, data, run_dir = pipeline
        assert run(["embed", "--run", str(run_dir), "--data", str(data)]) == 0
        out = run_dir / "embed"
        graph_csv = (out / "embeddings_graph.csv").read_text().splitlines()
        assert graph_csv[0].startswith("id,d0,")
        assert len(graph_csv) == 1 + 4  # header + test split of 48*0.1
        assert (out / "pca2d_graph.csv").exists()
        assert (out / "embeddings_text.csv").exists()

    def test_attn(self, pipeline):
        _, data, run_dir = pipeline
        corpus = [json.loads(l) for l in (data / "corpus.jsonl").read_text().splitlines()]
        pair_id = corpus[0]["id"]
        assert run(["attn", "--run", str(run_dir), "--data", str(data),
                    "--pair-id", pair_id]) == 0
        rows = (run_dir / "attn" / f"attention_{pair_id}.csv").read_text().splitlines()
        assert rows[0].startswith("layer,[CLS],")
        assert len(rows) == 1 + 1  # header + one layer in the tiny config

    def test_attn_requires_target(self, pipeline, capsys):
        _, data, run_dir = pipeline
        assert run(["attn", "--run", str(run_dir), "--data", str(data)]) == 1
        assert "error[usage]" in capsys.readouterr().err

    def test_baseline_random_graph(self, pipeline):
        _, data, run_dir = pipeline
        assert run(["baseline", "--run", str(run_dir), "--data", str(data),
                    "--mode", "random-graph", "--ks", "1", "3", "--pool", "4"]) == 0
        report = json.loads(
            (run_dir / "baseline-random-graph" / "baseline_report.json").read_text())
        assert report["mode"] == "random-graph"

    def test_baseline_cif_text(self, pipeline):
        _, data, run_dir = pipeline
        assert run(["baseline", "--run", str(run_dir), "--data", str(data),
                    "--mode", "cif-text", "--ks", "1", "--pool", "4"]) == 0
        report = json.loads(
            (run_dir / "baseline-cif-text" / "baseline_report.json").read_text())
        assert report["approximation"] is True


class TestDeterminism:
    def test_pipeline_byte_identical(self, tmp_path):
        config = tmp_path / "config.json"
        tiny = dict(TINY_CONFIG)
        tiny["synth"] = {**TINY_CONFIG["synth"], "n_pairs": 32}
        tiny["train"] = {**TINY_CONFIG["train"], "steps": 10, "val_every": 0}
        config.write_text(json.dumps(tiny))
        outputs = {}
        for tag in ("a", "b"):
            data, run_dir = tmp_path / f"data-{tag}", tmp_path / f"run-{tag}"
            assert run(["--deterministic", "gen-data", "--config", str(config),
                        "--out", str(data)]) == 0
            assert run(["--deterministic", "train", "--config", str(config),
                        "--data", str(data), "--out", str(run_dir)]) == 0
            assert run(["--deterministic", "eval-retrieval", "--run", str(run_dir),
                        "--data", str(data), "--pool", "3", "--ks", "1"]) == 0
            outputs[tag] = {
                "corpus": (data / "corpus.jsonl").read_bytes(),
                "metrics": (run_dir / "metrics.jsonl").read_bytes(),
                "checkpoint": (run_dir / "checkpoint.bin").read_bytes(),
                "report": (run_dir / "eval-retrieval" / "retrieval_report.json").read_bytes(),
            }
        for key in outputs["a"]:
            assert outputs["a"][key] == outputs["b"][key], f"{key} differs between runs"
