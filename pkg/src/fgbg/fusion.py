"""Guided and unguided late fusion of networks.

Members are (network, role, weight) triples; the fused prediction is the
weighted sum of final-layer score vectors. Guided mode splits each test
image into foreground / background views with its ground-truth boxes;
unguided mode does the same per top-k proposal and averages the member's
scores over proposals. Role ``orig`` always receives the entire image,
keeping its testing consistent with its training.

Member score matrices are first-class: fusion arithmetic runs on dumped
score files or live networks interchangeably.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datasets import AnnotatedSample, build_bg, build_fg
from .errors import ConfigError, DataError, NoBoxesError
from .evaluation import extract_patches, topk_accuracy
from .loading import resize_image, to_batch
from .nn.network import Network, eval_size_for
from .proposals import ScoredBox

__all__ = [
    "FusionMember",
    "FusionSpec",
    "fuse_scores",
    "guided_member_scores",
    "guided_fuse",
    "unguided_member_scores",
    "unguided_fuse",
    "tune_weights",
]

_ROLES = ("orig", "fg", "bg")


@dataclass(frozen=True)
class FusionMember:
    net_id: str
    role: str
    weight: float

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ConfigError(f"unknown fusion role {self.role!r}")
        if not np.isfinite(self.weight):
            raise ConfigError(f"member weight must be finite, got {self.weight}")


@dataclass(frozen=True)
class FusionSpec:
    members: tuple[FusionMember, ...]
    mode: str = "guided"
    proposal_k: int = 100

    def __post_init__(self):
        if not self.members:
            raise ConfigError("fusion needs at least one member")
        if self.mode not in ("guided", "unguided"):
            raise ConfigError(f"unknown fusion mode {self.mode!r}")
        pairs = [(m.net_id, m.role) for m in self.members]
        if len(set(pairs)) != len(pairs):
            raise ConfigError("at most one member per (network, role) pair")

    @classmethod
    def from_file(cls, path: Path) -> tuple["FusionSpec", dict[str, Path]]:
        """Parse a spec file; returns the spec plus net_id -> checkpoint path."""
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        members = []
        ckpts = {}
        for entry in raw.get("members", []):
            ckpt = Path(entry["ckpt"])
            net_id = entry.get("net_id", ckpt.stem)
            members.append(
                FusionMember(net_id=net_id, role=entry["role"], weight=float(entry.get("weight", 1.0)))
            )
            ckpts[net_id] = ckpt
        spec = cls(
            members=tuple(members),
            mode=raw.get("mode", "guided"),
            proposal_k=int(raw.get("proposal_k", 100)),
        )
        return spec, ckpts


def fuse_scores(member_scores: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted sum of score matrices, in member declaration order."""
    if len(member_scores) != len(weights):
        raise ConfigError("one weight per member score matrix required")
    shapes = {m.shape for m in member_scores}
    if len(shapes) != 1:
        raise ConfigError(f"member score shapes disagree: {shapes}")
    out = np.zeros(member_scores[0].shape, dtype=np.float64)
    for mat, w in zip(member_scores, weights):
        out += float(w) * mat.astype(np.float64)
    return out


def _view_for_role(role: str, sample: AnnotatedSample) -> np.ndarray:
    if role == "orig":
        return sample.image
    if role == "fg":
        return build_fg(sample)
    if role == "bg":
        return build_bg(sample)
    raise ConfigError(f"unknown fusion role {role!r}")


def _predict_views(net: Network, views: list[np.ndarray], protocol: str,
                   batch_size: int = 512) -> np.ndarray:
    """Score each view image under the given patch protocol."""
    size = eval_size_for(net.input_size)
    resized = np.stack([resize_image(v, size) for v in views])
    per = extract_patches(resized[0], net.input_size, protocol).shape[0]
    out = np.empty((len(views), net.category_count), dtype=np.float64)
    group = max(1, batch_size // per)
    for start in range(0, len(views), group):
        chunk = resized[start : start + group]
        patches = np.concatenate(
            [extract_patches(img, net.input_size, protocol) for img in chunk]
        )
        scores = net.forward(to_batch(patches, dtype=net.dtype))
        out[start : start + len(chunk)] = (
            scores.reshape(len(chunk), per, -1).astype(np.float64).mean(axis=1)
        )
    return out


def guided_member_scores(
    member: FusionMember,
    net: Network,
    samples: Sequence[AnnotatedSample],
    protocol: str = "ten_patch",
) -> np.ndarray:
    """Score matrix for one member under ground-truth-guided views."""
    views = []
    for sample in samples:
        if member.role != "orig" and not sample.boxes:
            raise NoBoxesError(
                f"guided fusion needs boxes, sample {sample.source_id} has none"
            )
        views.append(_view_for_role(member.role, sample))
    return _predict_views(net, views, protocol)


def guided_fuse(
    spec: FusionSpec,
    nets: dict[str, Network],
    samples: Sequence[AnnotatedSample],
    protocol: str = "ten_patch",
) -> tuple[np.ndarray, dict[tuple[str, str], np.ndarray]]:
    """Fused scores plus each member's matrix, keyed by (net_id, role)."""
    if spec.mode != "guided":
        raise ConfigError(f"guided_fuse got a {spec.mode} spec")
    member_mats = {}
    for member in spec.members:
        member_mats[(member.net_id, member.role)] = guided_member_scores(
            member, nets[member.net_id], samples, protocol
        )
    fused = fuse_scores(
        [member_mats[(m.net_id, m.role)] for m in spec.members],
        [m.weight for m in spec.members],
    )
    return fused, member_mats


def _proposal_views(role: str, sample: AnnotatedSample,
                    proposals: Sequence[ScoredBox], k: int) -> list[np.ndarray]:
    views = []
    for sb in proposals[:k]:
        h, w = sample.image.shape[:2]
        box = sb.box.clip(w, h)
        if role == "fg":
            views.append(sample.image[box.y0 : box.y1, box.x0 : box.x1])
        else:  # bg: the proposal region is zeroed, dimensions kept
            img = sample.image.copy()
            img[box.y0 : box.y1, box.x0 : box.x1] = 0
            views.append(img)
    return views


def unguided_member_scores(
    member: FusionMember,
    net: Network,
    samples: Sequence[AnnotatedSample],
    proposals_by_id: dict[str, Sequence[ScoredBox]],
    proposal_k: int,
    view_protocol: str = "center",
    batch_size: int = 512,
) -> np.ndarray:
    """Per-sample mean score over proposal views (or full-image for orig).

    Proposal views are evaluated with a single center-crop forward; the
    full 10-patch protocol is reserved for whole images.
    """
    if member.role == "orig":
        return _predict_views(net, [s.image for s in samples], "ten_patch", batch_size)
    out = np.empty((len(samples), net.category_count), dtype=np.float64)
    for i, sample in enumerate(samples):
        plist = proposals_by_id.get(sample.source_id, [])
        if not plist:
            raise DataError(
                f"unguided fusion: no proposals for sample {sample.source_id}"
            )
        views = _proposal_views(member.role, sample, plist, proposal_k)
        out[i] = _predict_views(net, views, view_protocol, batch_size).mean(axis=0)
    return out


def unguided_fuse(
    spec: FusionSpec,
    nets: dict[str, Network],
    samples: Sequence[AnnotatedSample],
    proposals_by_id: dict[str, Sequence[ScoredBox]],
    view_protocol: str = "center",
) -> tuple[np.ndarray, dict[tuple[str, str], np.ndarray]]:
    if spec.mode != "unguided":
        raise ConfigError(f"unguided_fuse got a {spec.mode} spec")
    member_mats = {}
    for member in spec.members:
        member_mats[(member.net_id, member.role)] = unguided_member_scores(
            member, nets[member.net_id], samples, proposals_by_id,
            spec.proposal_k, view_protocol,
        )
    fused = fuse_scores(
        [member_mats[(m.net_id, m.role)] for m in spec.members],
        [m.weight for m in spec.members],
    )
    return fused, member_mats


def _simplex_grid(n_members: int, step: float):
    ticks = int(round(1.0 / step))
    for combo in itertools.product(range(ticks + 1), repeat=n_members):
        if sum(combo) == ticks:
            yield tuple(c / ticks for c in combo)


def tune_weights(
    member_scores: Sequence[np.ndarray],
    labels: np.ndarray,
    grid_step: float = 0.1,
) -> tuple[float, ...]:
    """Grid search over the weight simplex maximizing held-out top-1.

    Ties break toward equal weights, then lexicographically; fully
    deterministic for a fixed grid.
    """
    if len(member_scores) == 0:
        raise ConfigError("tune_weights needs at least one member")
    if labels.size == 0:
        raise DataError("held-out set is empty")
    if len(member_scores) == 1:
        return (1.0,)
    uniform = 1.0 / len(member_scores)
    best = None
    for weights in _simplex_grid(len(member_scores), grid_step):
        acc = topk_accuracy(fuse_scores(member_scores, weights), labels, 1)
        dist = sum((w - uniform) ** 2 for w in weights)
        key = (-acc, dist, weights)
        if best is None or key < best:
            best = key
    return best[2]
