"""CLI surface: subcommands wire up end to end on a tiny corpus."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

RUN = [sys.executable, "-m", "fgbg.cli"]


def fgbg(*args, check=True):
    proc = subprocess.run(
        RUN + [str(a) for a in args], capture_output=True, text=True
    )
    if check and proc.returncode != 0:
        raise AssertionError(
            f"fgbg {' '.join(map(str, args))} failed ({proc.returncode}):\n"
            f"{proc.stdout}\n{proc.stderr}"
        )
    return proc


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("clicorpus")
    cfg = {
        "categories": 3,
        "train_per_category": 6,
        "test_per_category": 3,
        "min_shape": 6,
        "max_shape": 40,
    }
    cfg_path = root / "synth.json"
    cfg_path.write_text(json.dumps(cfg))
    fgbg("synth", "--config", cfg_path, "--seed", 5, "--out", root / "data")
    fgbg(
        "build-datasets",
        "--input", root / "data" / "orig" / "train" / "manifest.jsonl",
        "--input", root / "data" / "orig" / "test" / "manifest.jsonl",
        "--out", root / "data",
        "--kinds", "fg,bg,hybrid",
    )
    return root


@pytest.fixture(scope="module")
def trained(corpus):
    cfg = {"iterations": 8, "batch_size": 4, "decay_every": 4, "log_every": 2}
    cfg_path = corpus / "train.json"
    cfg_path.write_text(json.dumps(cfg))
    ckpt = corpus / "fg.ckpt"
    fgbg(
        "train", "--variant", "fg", "--data", corpus / "data",
        "--config", cfg_path, "--out", ckpt, "--seed", 3,
        "--log", corpus / "fg.log.jsonl",
    )
    return ckpt


class TestDatasetCommands:
    def test_synth_and_build_outputs(self, corpus):
        for kind in ("orig", "fg", "bg", "hybrid"):
            for split in ("train", "test"):
                assert (corpus / "data" / kind / split / "manifest.jsonl").exists()

    def test_fg_hybrid_test_manifests_identical_but_kind(self, corpus):
        fg = (corpus / "data" / "fg" / "test" / "manifest.jsonl").read_text()
        hy = (corpus / "data" / "hybrid" / "test" / "manifest.jsonl").read_text()
        assert fg.replace('"kind": "fg"', '"kind": "hybrid"') == hy

    def test_hybrid_train_size_equals_orig(self, corpus):
        orig = (corpus / "data" / "orig" / "train" / "manifest.jsonl").read_text()
        hy = (corpus / "data" / "hybrid" / "train" / "manifest.jsonl").read_text()
        assert len(orig.splitlines()) == len(hy.splitlines())


class TestTrainEval:
    def test_train_writes_checkpoint_and_log(self, corpus, trained):
        assert trained.exists()
        log = (corpus / "fg.log.jsonl").read_text().splitlines()
        assert log
        rec = json.loads(log[0])
        assert set(rec) == {"iter", "lr", "loss", "train_top1"}

    def test_eval_reports_topk(self, corpus, trained):
        proc = fgbg(
            "eval", "--net", trained,
            "--data", corpus / "data" / "fg" / "test" / "manifest.jsonl",
            "--k", "1,3",
            "--dump-scores", corpus / "scores.jsonl",
        )
        assert "top-1:" in proc.stdout and "top-3:" in proc.stdout
        assert (corpus / "scores.jsonl").exists()

    def test_cross_eval_table(self, corpus, trained):
        out = corpus / "cross.jsonl"
        fgbg(
            "cross-eval",
            "--nets", f"fg={trained}",
            "--sets",
            f"fg={corpus/'data'/'fg'/'test'/'manifest.jsonl'},"
            f"bg={corpus/'data'/'bg'/'test'/'manifest.jsonl'}",
            "--out", out,
        )
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 2
        assert all("ckpt_sha256" in r for r in rows)


class TestProposalsFusion:
    def test_propose_recall_fuse(self, corpus, trained):
        manifest = corpus / "data" / "orig" / "test" / "manifest.jsonl"
        props = corpus / "props.jsonl"
        fgbg("propose", "--data", manifest, "--k", 20, "--out", props)
        assert props.exists()
        curve = corpus / "recall.jsonl"
        fgbg(
            "recall", "--proposals", props, "--data", manifest,
            "--iou", 0.7, "--kmax", 20, "--out", curve,
        )
        rows = [json.loads(l) for l in curve.read_text().splitlines()]
        assert [r["k"] for r in rows] == list(range(1, 21))
        recalls = [r["recall"] for r in rows]
        assert all(a <= b for a, b in zip(recalls, recalls[1:]))

        spec = corpus / "fusion.json"
        spec.write_text(
            json.dumps(
                {
                    "mode": "unguided",
                    "proposal_k": 5,
                    "members": [{"ckpt": str(trained), "role": "fg", "weight": 1.0}],
                }
            )
        )
        report_path = corpus / "fusion_report.json"
        fgbg(
            "fuse", "--spec", spec, "--data", manifest,
            "--proposals", props, "--out", report_path,
        )
        report = json.loads(report_path.read_text())
        assert 0.0 <= report["top1"] <= report["top5"] <= 1.0

    def test_visualize(self, corpus, trained):
        grid = corpus / "grid.png"
        fgbg(
            "visualize", "--net", trained,
            "--data", corpus / "data" / "fg" / "test" / "manifest.jsonl",
            "--filters", "0..2", "--per-filter", 3, "--out", grid,
        )
        assert grid.exists()
        assert grid.with_suffix(".jsonl").exists()


class TestExitCodes:
    def test_missing_manifest_data_error(self, tmp_path):
        proc = fgbg(
            "eval", "--net", tmp_path / "none.ckpt",
            "--data", tmp_path / "none.jsonl", check=False,
        )
        assert proc.returncode == 4  # DataError class

    def test_bad_synth_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"categories": 1}))
        proc = fgbg("synth", "--config", bad, "--out", tmp_path / "d", check=False)
        assert proc.returncode == 3  # ConfigError class

    def test_usage_error(self):
        proc = fgbg("synth", check=False)  # missing --out
        assert proc.returncode == 2
