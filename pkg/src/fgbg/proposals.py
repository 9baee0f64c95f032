"""Box proposals from an edge-density objectness score.

The scorer is a deliberately simple stand-in: boxes whose interior holds
many edge pixels while their inner boundary band holds few look like they
tightly enclose an object. Sliding-grid candidates are scored from integral
images, greedily de-duplicated, and ranked. Externally produced proposal
files can be dropped in wherever a ranked list is consumed; the recall
machinery is scorer-agnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .geometry import Box, enclosing_frame, iou

__all__ = [
    "ScoredBox",
    "ProposalConfig",
    "RecallCDF",
    "edge_map",
    "score_box",
    "generate",
    "nms",
    "recall_cdf",
    "write_proposals",
    "read_proposals",
]

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float


@dataclass(frozen=True)
class ProposalConfig:
    edge_threshold: float = 0.2  # on [0,1] luminance gradient magnitude
    band_width: int = 1
    crossing_penalty: float = 0.5  # lambda on band edges
    area_power: float = 0.5  # kappa in the area normalizer
    # 14-scale geometric pyramid: small objects need candidates well below
    # a tenth of the image area for IoU-0.7 matches to exist at all
    scales: tuple[float, ...] = tuple(
        round(0.008 * (0.8 / 0.008) ** (i / 13), 4) for i in range(14)
    )
    aspects: tuple[float, ...] = (0.5, 1.0, 2.0)  # width / height
    stride_divisor: int = 8  # stride = side / divisor
    nms_iou: float = 0.8

    def __post_init__(self):
        if self.band_width < 1:
            raise ConfigError("band_width must be >= 1")
        if any(s <= 0 or s > 1 for s in self.scales):
            raise ConfigError("scales are fractions of image area in (0, 1]")


@dataclass
class RecallCDF:
    ks: list[int]
    recall: list[float]
    iou_threshold: float


def edge_map(image: np.ndarray, threshold: float = 0.2) -> np.ndarray:
    """Boolean mask of pixels whose luminance gradient exceeds the threshold.

    Gradients are central differences (one-sided at the borders) on the
    [0, 1] luminance image.
    """
    if image.ndim == 3:
        luma = image.astype(np.float64) @ _LUMA / 255.0
    else:
        luma = image.astype(np.float64) / 255.0
    gy, gx = np.gradient(luma)
    return np.hypot(gx, gy) > threshold


def _integral(mask: np.ndarray) -> np.ndarray:
    ii = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = mask.cumsum(axis=0).cumsum(axis=1)
    return ii


def _box_sums(ii: np.ndarray, x0, y0, x1, y1):
    return ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]


def score_box(edges: np.ndarray, box: Box, config: ProposalConfig = ProposalConfig()) -> float:
    """Edge-density objectness of one box.

    max(inner - lambda * band, 0) / area**kappa, where ``band`` is the
    innermost ``band_width``-pixel ring of the box and ``inner`` the rest.
    Boxes thinner than two bands score 0.
    """
    w = config.band_width
    if box.width < 2 * w or box.height < 2 * w:
        return 0.0
    ii = _integral(edges)
    total = _box_sums(ii, box.x0, box.y0, box.x1, box.y1)
    inner = _box_sums(ii, box.x0 + w, box.y0 + w, box.x1 - w, box.y1 - w)
    band = total - inner
    raw = max(float(inner) - config.crossing_penalty * float(band), 0.0)
    return raw / float(box.area) ** config.area_power


def _candidate_grid(h: int, w: int, config: ProposalConfig) -> np.ndarray:
    """All (x0, y0, x1, y1) sliding-window candidates, int64 array."""
    area = h * w
    boxes = []
    seen = set()
    for scale in config.scales:
        for aspect in config.aspects:
            bw = int(round(np.sqrt(area * scale * aspect)))
            bh = int(round(np.sqrt(area * scale / aspect)))
            if bw < 2 * config.band_width or bh < 2 * config.band_width:
                continue
            if bw > w or bh > h:
                continue
            if (bw, bh) in seen:
                continue
            seen.add((bw, bh))
            stride_x = max(1, bw // config.stride_divisor)
            stride_y = max(1, bh // config.stride_divisor)
            xs = np.arange(0, w - bw + 1, stride_x)
            ys = np.arange(0, h - bh + 1, stride_y)
            if xs[-1] != w - bw:
                xs = np.append(xs, w - bw)
            if ys[-1] != h - bh:
                ys = np.append(ys, h - bh)
            gx, gy = np.meshgrid(xs, ys)
            quad = np.stack(
                [gx.ravel(), gy.ravel(), gx.ravel() + bw, gy.ravel() + bh], axis=1
            )
            boxes.append(quad)
    if not boxes:
        return np.zeros((0, 4), dtype=np.int64)
    return np.concatenate(boxes).astype(np.int64)


def _score_candidates(edges: np.ndarray, quads: np.ndarray, config: ProposalConfig) -> np.ndarray:
    ii = _integral(edges)
    x0, y0, x1, y1 = quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3]
    w = config.band_width
    total = _box_sums(ii, x0, y0, x1, y1)
    inner = _box_sums(ii, x0 + w, y0 + w, x1 - w, y1 - w)
    band = total - inner
    raw = np.maximum(inner - config.crossing_penalty * band, 0.0)
    area = ((x1 - x0) * (y1 - y0)).astype(np.float64)
    return raw / area**config.area_power


def _iou_many(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    ix0 = np.maximum(box[0], others[:, 0])
    iy0 = np.maximum(box[1], others[:, 1])
    ix1 = np.minimum(box[2], others[:, 2])
    iy1 = np.minimum(box[3], others[:, 3])
    inter = np.clip(ix1 - ix0, 0, None) * np.clip(iy1 - iy0, 0, None)
    a = (box[2] - box[0]) * (box[3] - box[1])
    b = (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1])
    return inter / (a + b - inter)


def nms(quads: np.ndarray, scores: np.ndarray, iou_threshold: float,
        keep_max: Optional[int] = None) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices, best first.

    Score ties break toward the lower candidate index for determinism.
    """
    order = np.lexsort((np.arange(len(scores)), -scores))
    kept: list[int] = []
    alive = np.ones(len(scores), dtype=bool)
    for idx in order:
        if not alive[idx]:
            continue
        kept.append(int(idx))
        if keep_max is not None and len(kept) >= keep_max:
            break
        overl = _iou_many(quads[idx], quads[alive])
        alive_idx = np.nonzero(alive)[0]
        alive[alive_idx[overl > iou_threshold]] = False
    return kept


def generate(image: np.ndarray, k: int, config: ProposalConfig = ProposalConfig()) -> list[ScoredBox]:
    """Top-k scored proposals for one image; deterministic."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    h, w = image.shape[:2]
    edges = edge_map(image, config.edge_threshold)
    quads = _candidate_grid(h, w, config)
    if quads.shape[0] == 0:
        return []
    scores = _score_candidates(edges, quads, config)
    kept = nms(quads, scores, config.nms_iou, keep_max=k)
    return [
        ScoredBox(box=Box(*(int(v) for v in quads[i])), score=float(scores[i]))
        for i in kept
    ]


def recall_cdf(
    proposals: Sequence[Sequence[ScoredBox]],
    ground_truths: Sequence[Sequence[Box]],
    iou_threshold: float = 0.7,
    k_max: int = 100,
) -> RecallCDF:
    """Fraction of samples matched within the top-k proposals, for k=1..k_max.

    A sample with multiple boxes counts as detected when its enclosing
    frame is matched, mirroring the fg crop geometry.
    """
    if k_max < 1:
        raise ConfigError("k_max must be >= 1")
    if len(proposals) != len(ground_truths):
        raise DataError("one proposal list per ground-truth sample required")
    n = len(ground_truths)
    first_hit = np.full(n, np.inf)
    for i, (plist, boxes) in enumerate(zip(proposals, ground_truths)):
        if not boxes:
            raise DataError(f"sample {i} has no ground-truth boxes")
        target = enclosing_frame(list(boxes))
        for rank, sb in enumerate(plist[:k_max], start=1):
            if iou(sb.box, target) >= iou_threshold:
                first_hit[i] = rank
                break
    ks = list(range(1, k_max + 1))
    recall = [float((first_hit <= k).mean()) for k in ks]
    return RecallCDF(ks=ks, recall=recall, iou_threshold=iou_threshold)


def write_proposals(path: Path, by_source: dict[str, Sequence[ScoredBox]]) -> None:
    """Proposal file: {source_id, rank, x0, y0, x1, y1, score} per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(by_source):
            for rank, sb in enumerate(by_source[sid], start=1):
                rec = {
                    "source_id": sid,
                    "rank": rank,
                    "x0": sb.box.x0,
                    "y0": sb.box.y0,
                    "x1": sb.box.x1,
                    "y1": sb.box.y1,
                    "score": sb.score,
                }
                fh.write(json.dumps(rec))
                fh.write("\n")


def read_proposals(path: Path) -> dict[str, list[ScoredBox]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"proposal file not found: {path}")
    by_source: dict[str, list[tuple[int, ScoredBox]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            sb = ScoredBox(
                box=Box(rec["x0"], rec["y0"], rec["x1"], rec["y1"]), score=rec["score"]
            )
            by_source.setdefault(rec["source_id"], []).append((rec["rank"], sb))
    return {
        sid: [sb for _, sb in sorted(items, key=lambda t: t[0])]
        for sid, items in by_source.items()
    }
