"""End-to-end experiment bundles.

run_all executes the seven pipeline stages in order - datasets, training,
cross-evaluation, ratio curves, proposals, fusion, visualization - into one
bundle directory, with a manifest recording seeds, versions and checkpoint
hashes. Stage randomness derives from the root seed split by stage label.
Re-running skips stages whose recorded outputs still verify, and a stage
failure halts with the stage's name while preserving completed artifacts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .datasets import build_variants, load_annotated
from .errors import ConfigError, StageError
from .evaluation import (
    cross_eval,
    predict_scores,
    ratio_binned_accuracy,
    topk_accuracy,
)
from .fusion import FusionMember, FusionSpec, fuse_scores, guided_fuse, unguided_fuse
from .loading import load_dataset
from .nn.checkpoint import checkpoint_sha256, load_checkpoint
from .nn.network import eval_size_for, tinynet_spec
from .nn.optim import OptimConfig
from .proposals import ProposalConfig, generate, recall_cdf, write_proposals
from .rng import derive_seed
from .synth import SynthConfig, write_corpus
from .training import TrainConfig, load_train_split, train, write_log
from .visualize import emit_grid, top_patches, write_hits

__all__ = ["PipelineConfig", "run_all", "STAGES"]

STAGES = (
    "datasets",
    "train",
    "cross_eval",
    "ratio_curves",
    "proposals",
    "fusion",
    "visualization",
)

KINDS = ("orig", "fg", "bg", "hybrid")


@dataclass
class PipelineConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    iterations: int = 8_000
    batch_size: int = 64
    decay_every: int = 3_000
    ratio_thresholds: tuple[float, ...] = (0.5, 0.62, 0.74, 0.86, 0.98)
    proposal_k: int = 100
    recall_kmax: int = 100
    visualize_filters: int = 4
    visualize_per_filter: int = 6
    visualize_layer: Optional[int] = None  # default: last conv layer
    fusion_subset: int = 128  # unguided fusion evaluates this many test samples

    @classmethod
    def from_file(cls, path: Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        synth = SynthConfig(**raw.pop("synth")) if "synth" in raw else SynthConfig()
        known = set(cls.__dataclass_fields__) - {"synth"}  # type: ignore[attr-defined]
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown pipeline config fields: {sorted(extra)}")
        for key in ("ratio_thresholds",):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(synth=synth, **raw)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_rows(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


class _StageRunner:
    """Marker-file based stage skipping: outputs must exist and hash-verify."""

    def __init__(self, bundle: Path):
        self.bundle = bundle
        self.marker_dir = bundle / ".stages"
        self.marker_dir.mkdir(parents=True, exist_ok=True)

    def run(self, name: str, fn: Callable[[], list[Path]]) -> None:
        marker = self.marker_dir / f"{name}.json"
        if marker.exists():
            recorded = json.loads(marker.read_text())
            if all(
                (self.bundle / rel).exists()
                and _sha256_file(self.bundle / rel) == sha
                for rel, sha in recorded.items()
            ):
                return  # stage verified, skip
        try:
            outputs = fn()
        except Exception as exc:  # halt with the stage name, keep prior artifacts
            raise StageError(name, str(exc)) from exc
        record = {
            str(p.relative_to(self.bundle)): _sha256_file(p) for p in sorted(outputs)
        }
        marker.write_text(json.dumps(record, sort_keys=True, indent=1))


def run_all(config: PipelineConfig, bundle_dir: Path) -> Path:
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    runner = _StageRunner(bundle)

    data_root = bundle / "datasets"
    ckpt_dir = bundle / "checkpoints"
    tables = bundle / "tables"

    # -- stage 1: datasets -------------------------------------------------
    def stage_datasets() -> list[Path]:
        synth_seed = derive_seed(config.seed, "synth")
        manifests = write_corpus(config.synth, synth_seed, data_root)
        build_variants(
            [manifests["train"], manifests["test"]],
            data_root,
            kinds=("fg", "bg", "hybrid"),
        )
        outputs = []
        for kind in KINDS:
            for split in ("train", "test"):
                m = data_root / kind / split / "manifest.jsonl"
                if m.exists():
                    outputs.append(m)
        return outputs

    runner.run("datasets", stage_datasets)

    # -- stage 2: training --------------------------------------------------
    def stage_train() -> list[Path]:
        outputs = []
        for kind in KINDS:
            train_manifest = data_root / kind / "train" / "manifest.jsonl"
            tc = TrainConfig(
                kind=kind,
                iterations=config.iterations,
                batch_size=config.batch_size,
                optim=OptimConfig(decay_every=config.decay_every),
                seed=derive_seed(config.seed, "train", kind),
            )
            dataset = load_train_split(train_manifest, tc)
            ckpt = ckpt_dir / f"{kind}.ckpt"
            result = train(tc, dataset, checkpoint_path=ckpt)
            log_path = ckpt_dir / f"{kind}.log.jsonl"
            write_log(log_path, result.log)
            outputs.extend([ckpt, log_path])
        return outputs

    runner.run("train", stage_train)

    ckpt_hash = {kind: checkpoint_sha256(ckpt_dir / f"{kind}.ckpt") for kind in KINDS}

    def _net(kind: str):
        net, _, _ = load_checkpoint(ckpt_dir / f"{kind}.ckpt")
        return net

    def _testset(kind: str, size: int):
        return load_dataset(data_root / kind / "test" / "manifest.jsonl", image_size=size)

    # -- stage 3: cross evaluation -------------------------------------------
    def stage_cross_eval() -> list[Path]:
        nets = {kind: _net(kind) for kind in KINDS}
        size = eval_size_for(nets["orig"].input_size)
        testsets = {kind: _testset(kind, size) for kind in ("orig", "fg", "bg")}
        matrix = cross_eval(nets, testsets)
        rows = []
        for kind in KINDS:
            for set_kind in ("orig", "fg", "bg"):
                rep = matrix[(kind, set_kind)]
                rows.append(
                    {
                        "network_id": kind,
                        "dataset_id": rep.dataset_id,
                        "top1": rep.top1,
                        "top5": rep.top5,
                        "n": rep.n,
                        "ckpt_sha256": ckpt_hash[kind],
                    }
                )
        out = tables / "cross_eval.jsonl"
        _write_rows(out, rows)
        return [out]

    runner.run("cross_eval", stage_cross_eval)

    # -- stage 4: foreground-ratio curves -------------------------------------
    def stage_ratio_curves() -> list[Path]:
        rows = []
        for kind in KINDS:
            net = _net(kind)
            test_kind = "fg" if kind == "hybrid" else kind
            ds = _testset(test_kind, eval_size_for(net.input_size))
            scores = predict_scores(net, ds)
            curve = ratio_binned_accuracy(scores, ds, list(config.ratio_thresholds))
            for t, acc, cnt in zip(curve.thresholds, curve.accuracies, curve.counts):
                rows.append(
                    {
                        "network_id": kind,
                        "dataset_id": ds.dataset_id,
                        "threshold": t,
                        "accuracy": acc,
                        "count": cnt,
                        "ckpt_sha256": ckpt_hash[kind],
                    }
                )
        out = tables / "ratio_curves.jsonl"
        _write_rows(out, rows)
        return [out]

    runner.run("ratio_curves", stage_ratio_curves)

    # -- stage 5: proposals + recall CDF ---------------------------------------
    def stage_proposals() -> list[Path]:
        samples = load_annotated(data_root / "orig" / "test" / "manifest.jsonl")
        pconf = ProposalConfig()
        by_source = {s.source_id: generate(s.image, config.proposal_k, pconf) for s in samples}
        prop_path = bundle / "proposals" / "proposals.jsonl"
        write_proposals(prop_path, by_source)
        cdf = recall_cdf(
            [by_source[s.source_id] for s in samples],
            [s.boxes for s in samples],
            iou_threshold=0.7,
            k_max=min(config.recall_kmax, config.proposal_k),
        )
        recall_path = bundle / "proposals" / "recall.jsonl"
        _write_rows(
            recall_path,
            [{"k": k, "recall": r} for k, r in zip(cdf.ks, cdf.recall)],
        )
        return [prop_path, recall_path]

    runner.run("proposals", stage_proposals)

    # -- stage 6: guided + unguided fusion ---------------------------------------
    def stage_fusion() -> list[Path]:
        from .proposals import read_proposals

        samples = load_annotated(data_root / "orig" / "test" / "manifest.jsonl")
        class_names = sorted({s.label for s in samples})
        labels = np.array([class_names.index(s.label) for s in samples])
        nets = {kind: _net(kind) for kind in KINDS}
        rows = []

        guided_spec = FusionSpec(
            members=(
                FusionMember("fg", "fg", 0.5),
                FusionMember("bg", "bg", 0.5),
            ),
            mode="guided",
        )
        fused, mats = guided_fuse(guided_spec, nets, samples)
        k5 = min(5, len(class_names))
        rows.append(
            {
                "mode": "guided",
                "members": "fg+bg",
                "top1": topk_accuracy(fused, labels, 1),
                "top5": topk_accuracy(fused, labels, k5),
                "n": len(samples),
                "ckpt_sha256": {"fg": ckpt_hash["fg"], "bg": ckpt_hash["bg"]},
            }
        )
        for (nid, role), mat in mats.items():
            rows.append(
                {
                    "mode": "guided",
                    "members": f"{nid}",
                    "top1": topk_accuracy(mat, labels, 1),
                    "top5": topk_accuracy(mat, labels, k5),
                    "n": len(samples),
                    "ckpt_sha256": {nid: ckpt_hash[nid]},
                }
            )

        subset = samples[: config.fusion_subset]
        sub_labels = labels[: config.fusion_subset]
        proposals_by_id = read_proposals(bundle / "proposals" / "proposals.jsonl")
        unguided_spec = FusionSpec(
            members=(
                FusionMember("fg", "fg", 0.5),
                FusionMember("bg", "bg", 0.5),
            ),
            mode="unguided",
            proposal_k=config.proposal_k,
        )
        fused_u, mats_u = unguided_fuse(unguided_spec, nets, subset, proposals_by_id)
        rows.append(
            {
                "mode": "unguided",
                "members": "fg+bg",
                "top1": topk_accuracy(fused_u, sub_labels, 1),
                "top5": topk_accuracy(fused_u, sub_labels, k5),
                "n": len(subset),
                "ckpt_sha256": {"fg": ckpt_hash["fg"], "bg": ckpt_hash["bg"]},
            }
        )
        for (nid, role), mat in mats_u.items():
            rows.append(
                {
                    "mode": "unguided",
                    "members": f"{nid}",
                    "top1": topk_accuracy(mat, sub_labels, 1),
                    "top5": topk_accuracy(mat, sub_labels, k5),
                    "n": len(subset),
                    "ckpt_sha256": {nid: ckpt_hash[nid]},
                }
            )
        out = tables / "fusion.jsonl"
        _write_rows(out, rows)
        return [out]

    runner.run("fusion", stage_fusion)

    # -- stage 7: visualization ------------------------------------------------
    def stage_visualization() -> list[Path]:
        outputs = []
        for kind in ("fg", "bg", "orig"):
            net = _net(kind)
            test_kind = "fg" if kind == "hybrid" else kind
            ds = load_dataset(
                data_root / test_kind / "test" / "manifest.jsonl", image_size=net.input_size
            )
            layer_index = config.visualize_layer
            if layer_index is None:
                layer_index = max(
                    i for i, l in enumerate(net.layers) if l.kind == "conv"
                )
            hits = [
                top_patches(net, layer_index, f, ds, config.visualize_per_filter)
                for f in range(config.visualize_filters)
            ]
            grid_path = bundle / "visualization" / f"{kind}_patches.png"
            emit_grid(hits, ds, grid_path)
            hits_path = bundle / "visualization" / f"{kind}_hits.jsonl"
            write_hits(hits_path, hits)
            outputs.extend([grid_path, hits_path])
        return outputs

    runner.run("visualization", stage_visualization)

    # -- bundle manifest ----------------------------------------------------
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "stage_seeds": {
            "synth": derive_seed(config.seed, "synth"),
            **{f"train/{k}": derive_seed(config.seed, "train", k) for k in KINDS},
        },
        "stages": list(STAGES),
        "checkpoints": ckpt_hash,
    }
    (bundle / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return bundle
