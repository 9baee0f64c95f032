"""Command-line surface for the whole pipeline.

Heavy imports happen inside commands so that --threads can pin the BLAS
thread count before numpy loads. Exit codes: 0 success, 2 usage, then one
code per failure class (3 config, 4 data, 5 shape mismatch, 6 divergence,
7 stage failure).
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click


def _set_threads(threads):
    if threads is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)


@click.group()
@click.option("--threads", type=int, default=None, help="BLAS/OpenMP thread cap.")
def cli(threads):
    """Figure-ground ablation lab."""
    _set_threads(threads)


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def synth(config_path, seed, out_dir):
    """Generate the synthetic figure-ground corpus (orig kind)."""
    from .synth import SynthConfig, write_corpus

    config = SynthConfig.from_file(config_path) if config_path else SynthConfig()
    manifests = write_corpus(config, seed, out_dir)
    for split, path in manifests.items():
        click.echo(f"{split}: {path}")


@cli.command("build-datasets")
@click.option("--input", "inputs", type=click.Path(path_type=Path), multiple=True,
              required=True, help="Input manifest(s) of the original corpus.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--kinds", default="orig,fg,bg,hybrid", show_default=True)
@click.option("--bg-filter", type=click.Choice(["frame", "union"]), default="frame",
              show_default=True, help="Measure for the 50% background filter.")
@click.option("--merge", "merge_path", type=click.Path(path_type=Path), default=None,
              help="JSON label merge mapping {mapping: {fine: coarse}, display?}.")
def build_datasets(inputs, out_dir, kinds, bg_filter, merge_path):
    """Build orig/fg/bg/hybrid dataset variants from an annotated corpus."""
    from .datasets import LabelMerge, build_variants

    merge = None
    if merge_path:
        raw = json.loads(Path(merge_path).read_text())
        merge = LabelMerge(mapping=raw["mapping"], display=raw.get("display", {}))
    variants = build_variants(
        list(inputs),
        out_dir,
        kinds=tuple(k.strip() for k in kinds.split(",") if k.strip()),
        bg_filter=bg_filter,
        merge=merge,
    )
    for v in variants:
        click.echo(f"{v.kind}/{v.split}: {len(v)} samples -> {v.manifest_path}")


@cli.command()
@click.option("--variant", type=click.Choice(["orig", "fg", "bg", "hybrid"]), required=True)
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "ckpt_path", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0)
@click.option("--resume", "resume_path", type=click.Path(path_type=Path), default=None)
@click.option("--log", "log_path", type=click.Path(path_type=Path), default=None)
def train(variant, data_dir, config_path, ckpt_path, seed, resume_path, log_path):
    """Train one network on a built dataset variant."""
    from .training import TrainConfig, load_train_split, train as run_train, write_log

    config = (
        TrainConfig.from_file(config_path, kind=variant, seed=seed)
        if config_path
        else TrainConfig(kind=variant, seed=seed)
    )
    manifest = Path(data_dir) / variant / "train" / "manifest.jsonl"
    dataset = load_train_split(manifest, config)
    result = run_train(
        config, dataset, resume_from=resume_path, checkpoint_path=ckpt_path
    )
    if log_path:
        write_log(log_path, result.log)
    final = result.log[-1] if result.log else {}
    click.echo(
        f"trained {variant}: {result.iteration} iterations, "
        f"final loss {final.get('loss', float('nan')):.4f} -> {ckpt_path}"
    )


@cli.command("eval")
@click.option("--net", "ckpt_path", type=click.Path(path_type=Path), required=True)
@click.option("--data", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--k", "ks", default="1,5", show_default=True)
@click.option("--patches", type=click.Choice(["10", "100"]), default="10",
              show_default=True, help="Patch-averaging protocol.")
@click.option("--dump-scores", "dump_path", type=click.Path(path_type=Path), default=None)
def eval_cmd(ckpt_path, manifest_path, ks, patches, dump_path):
    """Evaluate a checkpoint on a dataset manifest."""
    from .evaluation import dump_scores, predict_scores, topk_accuracy
    from .loading import load_dataset
    from .nn.checkpoint import load_checkpoint
    from .nn.network import eval_size_for

    net, _, _ = load_checkpoint(ckpt_path)
    dataset = load_dataset(manifest_path, image_size=eval_size_for(net.input_size))
    protocol = "ten_patch" if patches == "10" else "grid100"
    scores = predict_scores(net, dataset, protocol=protocol)
    for k in (int(x) for x in ks.split(",")):
        acc = topk_accuracy(scores, dataset.labels, k)
        click.echo(f"top-{k}: {acc:.4f}")
    if dump_path:
        dump_scores(dump_path, dataset.source_ids, scores)
        click.echo(f"scores -> {dump_path}")


@cli.command("cross-eval")
@click.option("--nets", "net_spec", required=True,
              help="Comma list of name=ckpt pairs (or bare checkpoint paths).")
@click.option("--sets", "set_spec", required=True,
              help="Comma list of name=manifest pairs.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def cross_eval_cmd(net_spec, set_spec, out_path):
    """Evaluate every network on every test set."""
    from .evaluation import cross_eval
    from .loading import load_dataset
    from .nn.checkpoint import checkpoint_sha256, load_checkpoint
    from .nn.network import eval_size_for

    def parse(spec):
        out = {}
        for item in spec.split(","):
            if "=" in item:
                name, path = item.split("=", 1)
            else:
                name, path = Path(item).stem, item
            out[name] = Path(path)
        return out

    nets, hashes = {}, {}
    for name, path in parse(net_spec).items():
        nets[name], _, _ = load_checkpoint(path)
        hashes[name] = checkpoint_sha256(path)
    size = eval_size_for(next(iter(nets.values())).input_size)
    class_names = None
    testsets = {}
    for name, path in parse(set_spec).items():
        testsets[name] = load_dataset(path, image_size=size, class_names=class_names)
        class_names = testsets[name].class_names
    matrix = cross_eval(nets, testsets)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for (nid, sid), rep in sorted(matrix.items()):
            row = rep.as_row()
            row["ckpt_sha256"] = hashes[nid]
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
            click.echo(f"{nid} on {sid}: top1 {rep.top1:.4f} top5 {rep.top5:.4f}")


@cli.command()
@click.option("--data", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--k", type=int, default=100, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def propose(manifest_path, k, out_path):
    """Generate ranked box proposals for every image in a manifest."""
    from .datasets import load_annotated
    from .proposals import ProposalConfig, generate, write_proposals

    samples = load_annotated(manifest_path)
    config = ProposalConfig()
    by_source = {s.source_id: generate(s.image, k, config) for s in samples}
    write_proposals(out_path, by_source)
    click.echo(f"{len(by_source)} proposal lists -> {out_path}")


@cli.command()
@click.option("--proposals", "prop_path", type=click.Path(path_type=Path), required=True)
@click.option("--data", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--iou", "iou_threshold", type=float, default=0.7, show_default=True)
@click.option("--kmax", type=int, default=100, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def recall(prop_path, manifest_path, iou_threshold, kmax, out_path):
    """Recall CDF of proposals against ground-truth boxes."""
    from .manifest import read_manifest
    from .proposals import read_proposals, recall_cdf

    records = sorted(read_manifest(manifest_path), key=lambda r: r.source_id)
    by_source = read_proposals(prop_path)
    cdf = recall_cdf(
        [by_source.get(r.source_id, []) for r in records],
        [r.boxes for r in records],
        iou_threshold=iou_threshold,
        k_max=kmax,
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for k, r in zip(cdf.ks, cdf.recall):
            fh.write(json.dumps({"k": k, "recall": r}))
            fh.write("\n")
    click.echo(f"recall@{cdf.ks[-1]} (IoU {iou_threshold}): {cdf.recall[-1]:.4f}")


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(path_type=Path), required=True)
@click.option("--data", "manifest_path", type=click.Path(path_type=Path), required=True,
              help="Manifest of original (annotated) test images.")
@click.option("--proposals", "prop_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def fuse(spec_path, manifest_path, prop_path, out_path):
    """Fuse member networks per a fusion spec file."""
    import numpy as np

    from .datasets import load_annotated
    from .evaluation import topk_accuracy
    from .fusion import FusionSpec, guided_fuse, unguided_fuse
    from .nn.checkpoint import checkpoint_sha256, load_checkpoint
    from .proposals import read_proposals

    spec, ckpts = FusionSpec.from_file(spec_path)
    nets = {}
    hashes = {}
    for net_id, path in ckpts.items():
        nets[net_id], _, _ = load_checkpoint(path)
        hashes[net_id] = checkpoint_sha256(path)
    samples = load_annotated(manifest_path)
    class_names = sorted({s.label for s in samples})
    labels = np.array([class_names.index(s.label) for s in samples])
    if spec.mode == "guided":
        fused, _ = guided_fuse(spec, nets, samples)
    else:
        if not prop_path:
            raise click.UsageError("unguided fusion requires --proposals")
        fused, _ = unguided_fuse(spec, nets, samples, read_proposals(prop_path))
    k5 = min(5, len(class_names))
    report = {
        "mode": spec.mode,
        "members": [
            {"net_id": m.net_id, "role": m.role, "weight": m.weight} for m in spec.members
        ],
        "top1": topk_accuracy(fused, labels, 1),
        "top5": topk_accuracy(fused, labels, k5),
        "n": len(samples),
        "ckpt_sha256": hashes,
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report, sort_keys=True, indent=1))
    click.echo(f"{spec.mode} fusion: top1 {report['top1']:.4f} top5 {report['top5']:.4f}")


@cli.command()
@click.option("--net", "ckpt_path", type=click.Path(path_type=Path), required=True)
@click.option("--data", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--layer", type=int, default=None, help="Layer index; default last conv.")
@click.option("--filters", "filter_spec", default="0..3", show_default=True)
@click.option("--per-filter", type=int, default=8, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def visualize(ckpt_path, manifest_path, layer, filter_spec, per_filter, out_path):
    """Emit top-response patch grids for a checkpoint."""
    from .loading import load_dataset
    from .nn.checkpoint import load_checkpoint
    from .visualize import emit_grid, top_patches, write_hits

    net, _, _ = load_checkpoint(ckpt_path)
    dataset = load_dataset(manifest_path, image_size=net.input_size)
    if layer is None:
        layer = max(i for i, l in enumerate(net.layers) if l.kind == "conv")
    if ".." in filter_spec:
        lo, hi = filter_spec.split("..")
        filters = range(int(lo), int(hi) + 1)
    else:
        filters = [int(x) for x in filter_spec.split(",")]
    hits = [top_patches(net, layer, f, dataset, per_filter) for f in filters]
    emit_grid(hits, dataset, out_path)
    write_hits(Path(out_path).with_suffix(".jsonl"), hits)
    click.echo(f"grid -> {out_path}")


@cli.command("serve-study")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--nets", "nets_dir", type=click.Path(path_type=Path), default=None)
@click.option("--store", "store_dir", type=click.Path(path_type=Path), default=None)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None,
              help="Built study-ui directory to serve statically.")
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_study(data_dir, nets_dir, store_dir, ui_dir, port, host):
    """Serve the human-recognition study over HTTP."""
    import uvicorn

    from .study.service import build_service, create_app

    store = Path(store_dir) if store_dir else Path(data_dir) / "study-store"
    service = build_service(Path(data_dir), store, nets_dir)
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command("run-all")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def run_all_cmd(config_path, seed, out_dir):
    """Run the full experiment pipeline into a report bundle."""
    from .pipeline import PipelineConfig, run_all

    config = PipelineConfig.from_file(config_path) if config_path else PipelineConfig()
    if seed:
        config.seed = seed
    bundle = run_all(config, out_dir)
    click.echo(f"bundle -> {bundle}")


def main():
    from .errors import FgbgError

    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except FgbgError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    sys.exit(0)


if __name__ == "__main__":
    main()
