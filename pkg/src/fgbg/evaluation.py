"""Measurement battery: patch-averaged prediction, top-k accuracy,
cross-evaluation matrices and foreground-ratio binned curves.

Predictions average the network's final-layer score vectors (pre-softmax)
over augmentation patches, which keeps downstream fusion linear.
Protocols:

* ``ten_patch`` - 4 corner crops + center crop, each with its horizontal
  flip (the default testing protocol).
* ``grid100``   - a dense 5x10 crop grid plus flips, the 100-patch
  augmentation control.
* ``center``    - one center crop, no flip (used per proposal view).

Images enter evaluation at the pre-crop size ``eval_size_for(input)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, ShapeMismatchError
from .loading import LoadedDataset, to_batch
from .nn.network import Network, eval_size_for

__all__ = [
    "EvalReport",
    "RatioCurve",
    "ten_patch_predict",
    "predict_scores",
    "topk_accuracy",
    "evaluate",
    "cross_eval",
    "ratio_binned_accuracy",
    "dump_scores",
    "load_scores",
]


@dataclass
class EvalReport:
    network_id: str
    dataset_id: str
    top1: float
    top5: float
    n: int
    scores: Optional[np.ndarray] = None  # N x C, retained for fusion

    def as_row(self) -> dict:
        return {
            "network_id": self.network_id,
            "dataset_id": self.dataset_id,
            "top1": self.top1,
            "top5": self.top5,
            "n": self.n,
        }


@dataclass
class RatioCurve:
    thresholds: list[float]
    accuracies: list[Optional[float]]  # None where the subset is empty
    counts: list[int]


def _crop_offsets(eval_hw: tuple[int, int], crop: int, protocol: str) -> list[tuple[int, int]]:
    h, w = eval_hw
    if h < crop or w < crop:
        raise ShapeMismatchError(
            f"evaluation image {h}x{w} is smaller than the {crop}px crop"
        )
    dh, dw = h - crop, w - crop
    if protocol == "ten_patch":
        return [
            (0, 0),
            (0, dw),
            (dh, 0),
            (dh, dw),
            (dh // 2, dw // 2),
        ]
    if protocol == "grid100":
        # 5x10 dense grid; duplicate offsets at degenerate sizes keep the
        # patch count at exactly 50 crops + 50 flips
        rows = np.round(np.linspace(0, dh, 5)).astype(int)
        cols = np.round(np.linspace(0, dw, 10)).astype(int)
        return [(int(r), int(c)) for r in rows for c in cols]
    if protocol == "center":
        return [(dh // 2, dw // 2)]
    raise ConfigError(f"unknown evaluation protocol {protocol!r}")


def extract_patches(image: np.ndarray, crop: int, protocol: str = "ten_patch") -> np.ndarray:
    """Stack of augmentation patches (P x crop x crop x C uint8)."""
    offsets = _crop_offsets(image.shape[:2], crop, protocol)
    crops = [image[r : r + crop, c : c + crop] for r, c in offsets]
    if protocol != "center":
        crops = crops + [np.ascontiguousarray(c[:, ::-1]) for c in crops]
    return np.stack(crops)


def _patched_scores(net: Network, images: np.ndarray, protocol: str,
                    batch_size: int = 512) -> np.ndarray:
    """Mean per-image score vector over the protocol's patches."""
    crop = net.input_size
    n = images.shape[0]
    per = extract_patches(images[0], crop, protocol).shape[0]
    out = np.empty((n, net.category_count), dtype=np.float64)
    group = max(1, batch_size // per)
    for start in range(0, n, group):
        chunk = images[start : start + group]
        patches = np.concatenate([extract_patches(img, crop, protocol) for img in chunk])
        scores = net.forward(to_batch(patches, dtype=net.dtype))
        scores = scores.reshape(len(chunk), per, -1).astype(np.float64)
        out[start : start + len(chunk)] = scores.mean(axis=1)
    return out


def ten_patch_predict(net: Network, image: np.ndarray) -> np.ndarray:
    """Mean final-layer score vector over 5 crops and their flips."""
    return _patched_scores(net, image[None], "ten_patch")[0]


def predict_scores(net: Network, dataset: LoadedDataset, protocol: str = "ten_patch",
                   batch_size: int = 512) -> np.ndarray:
    expected = eval_size_for(net.input_size)
    if dataset.images.shape[1] != expected:
        raise ShapeMismatchError(
            f"dataset images are {dataset.images.shape[1]}px but evaluation of a "
            f"{net.input_size}px network expects {expected}px"
        )
    return _patched_scores(net, dataset.images, protocol, batch_size)


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of samples whose label is among the k best scores.

    Ties break toward the lower category index (stable argsort).
    """
    scores = np.asarray(scores)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if scores.ndim != 2:
        raise ShapeMismatchError(f"scores must be N x C, got shape {scores.shape}")
    if k > scores.shape[1]:
        raise ConfigError(f"k={k} exceeds the {scores.shape[1]} categories")
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    hits = (order == np.asarray(labels)[:, None]).any(axis=1)
    return float(hits.mean())


def evaluate(
    net: Network,
    dataset: LoadedDataset,
    network_id: str = "net",
    protocol: str = "ten_patch",
    keep_scores: bool = False,
) -> EvalReport:
    scores = predict_scores(net, dataset, protocol)
    k5 = min(5, len(dataset.class_names))
    return EvalReport(
        network_id=network_id,
        dataset_id=dataset.dataset_id,
        top1=topk_accuracy(scores, dataset.labels, 1),
        top5=topk_accuracy(scores, dataset.labels, k5),
        n=len(dataset),
        scores=scores if keep_scores else None,
    )


def cross_eval(
    nets: dict[str, Network], testsets: dict[str, LoadedDataset]
) -> dict[tuple[str, str], EvalReport]:
    """One report per (network, testset) pair."""
    spaces = {sid: tuple(ds.class_names) for sid, ds in testsets.items()}
    if len(set(spaces.values())) > 1:
        raise ShapeMismatchError(f"testsets disagree on the category space: {spaces}")
    n_classes = len(next(iter(testsets.values())).class_names)
    for nid, net in nets.items():
        if net.category_count != n_classes:
            raise ShapeMismatchError(
                f"network {nid} emits {net.category_count} scores for {n_classes} categories"
            )
    matrix = {}
    for nid, net in nets.items():
        for sid, ds in testsets.items():
            matrix[(nid, sid)] = evaluate(net, ds, network_id=nid)
    return matrix


def ratio_binned_accuracy(
    scores: np.ndarray,
    dataset: LoadedDataset,
    thresholds: Sequence[float],
) -> RatioCurve:
    """Cumulative accuracy over samples with foreground ratio <= t.

    Accepts precomputed scores so several curves can share one prediction
    pass. Empty subsets yield an absent accuracy, not zero.
    """
    thresholds = list(thresholds)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigError(f"thresholds must be strictly ascending: {thresholds}")
    accuracies: list[Optional[float]] = []
    counts = []
    hits = (np.argsort(-scores, axis=1, kind="stable")[:, 0] == dataset.labels)
    for t in thresholds:
        member = dataset.fg_ratios <= t
        counts.append(int(member.sum()))
        if counts[-1] == 0:
            accuracies.append(None)
        else:
            accuracies.append(float(hits[member].mean()))
    return RatioCurve(thresholds=thresholds, accuracies=accuracies, counts=counts)


def dump_scores(path: Path, source_ids: Sequence[str], scores: np.ndarray) -> None:
    """Score file: one {source_id, scores[...]} record per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if len(source_ids) != scores.shape[0]:
        raise DataError("one source_id per score row required")
    with open(path, "w", encoding="utf-8") as fh:
        for sid, row in zip(source_ids, scores):
            fh.write(json.dumps({"source_id": sid, "scores": [float(v) for v in row]}))
            fh.write("\n")


def load_scores(path: Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"score file not found: {path}")
    ids, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ids.append(rec["source_id"])
            rows.append(rec["scores"])
    if not rows:
        raise DataError(f"score file {path} is empty")
    return ids, np.asarray(rows, dtype=np.float64)
