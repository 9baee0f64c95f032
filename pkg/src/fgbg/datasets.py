"""Dataset variant construction.

From box-annotated samples this module derives the four dataset roles:

* orig   — untouched images.
* fg     — crop to the smallest frame enclosing all boxes; with multiple
           boxes, pixels inside the frame but outside every box are zeroed.
* bg     — every pixel inside any box is zeroed, dimensions kept.
* hybrid — fg processing where boxes exist, the untouched image otherwise.

The background training split drops samples whose foreground frame covers
more than half the image; test splits are never filtered.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, NoBoxesError
from .geometry import (
    Box,
    enclosing_frame,
    foreground_pixel_ratio,
    frame_area_ratio,
)
from .manifest import (
    MANIFEST_NAME,
    ManifestRecord,
    load_png,
    read_manifest,
    resolve_image_path,
    save_png,
    write_manifest,
)

__all__ = [
    "AnnotatedSample",
    "DatasetVariant",
    "LabelMerge",
    "build_fg",
    "build_bg",
    "build_hybrid",
    "filter_bg_train",
    "merge_labels",
    "build_variants",
    "load_annotated",
]


@dataclass
class AnnotatedSample:
    """One image with its ground-truth boxes and a single category label."""

    image: np.ndarray  # H x W x C, uint8
    boxes: list[Box]
    label: str
    source_id: str

    def __post_init__(self):
        if self.image.ndim != 3:
            raise DataError(
                f"sample {self.source_id}: image must be HxWxC, got shape {self.image.shape}"
            )
        h, w = self.image.shape[:2]
        for box in self.boxes:
            if not box.within(w, h):
                raise DataError(
                    f"sample {self.source_id}: box {box.as_list()} exceeds {w}x{h} image bounds"
                )


@dataclass
class DatasetVariant:
    """A built (kind, split) dataset on disk."""

    kind: str
    split: str
    manifest_path: Path
    records: list[ManifestRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class LabelMerge:
    """Total mapping from fine labels to coarse categories."""

    mapping: dict[str, str]
    display: dict[str, str] = field(default_factory=dict)

    @property
    def coarse_count(self) -> int:
        return len(set(self.mapping.values()))

    def coarse(self, fine_label: str) -> str:
        try:
            return self.mapping[fine_label]
        except KeyError:
            raise DataError(f"label {fine_label!r} is not covered by the merge mapping")

    @classmethod
    def identity(cls, labels: Iterable[str]) -> "LabelMerge":
        return cls({lab: lab for lab in labels})


def build_fg(sample: AnnotatedSample) -> np.ndarray:
    """Crop to the enclosing frame; zero in-frame background for multi-box samples."""
    if not sample.boxes:
        raise NoBoxesError(f"sample {sample.source_id} has no boxes to crop to")
    frame = enclosing_frame(sample.boxes)
    crop = sample.image[frame.y0 : frame.y1, frame.x0 : frame.x1].copy()
    if len(sample.boxes) > 1:
        keep = np.zeros(crop.shape[:2], dtype=bool)
        for box in sample.boxes:
            keep[
                box.y0 - frame.y0 : box.y1 - frame.y0,
                box.x0 - frame.x0 : box.x1 - frame.x0,
            ] = True
        crop[~keep] = 0
    return crop


def build_bg(sample: AnnotatedSample) -> np.ndarray:
    """Zero every pixel inside any box; dimensions are preserved."""
    if not sample.boxes:
        raise NoBoxesError(f"sample {sample.source_id} has no boxes to zero")
    out = sample.image.copy()
    for box in sample.boxes:
        out[box.y0 : box.y1, box.x0 : box.x1] = 0
    return out


def build_hybrid(sample: AnnotatedSample) -> np.ndarray:
    """fg processing when boxes exist, otherwise the untouched image."""
    if sample.boxes:
        return build_fg(sample)
    return sample.image.copy()


def filter_bg_train(
    samples: Sequence[AnnotatedSample], measure: str = "frame"
) -> list[AnnotatedSample]:
    """Keep samples whose foreground measure is <= 0.5 (boundary retained).

    ``measure`` selects the frame-area reading (default) or the box-union
    pixel reading of the 50% rule; both are stored in manifests so a re-run
    with the other measure is a one-flag change.
    """
    if measure not in ("frame", "union"):
        raise DataError(f"unknown bg-filter measure {measure!r}")
    ratio = frame_area_ratio if measure == "frame" else foreground_pixel_ratio
    return [s for s in samples if ratio(s) <= 0.5]


def merge_labels(
    records: Sequence[ManifestRecord], merge: LabelMerge
) -> list[ManifestRecord]:
    """Replace each record's label by its coarse image; counts are unchanged."""
    out = []
    for rec in records:
        coarse = merge.coarse(rec.label)
        out.append(
            ManifestRecord(
                source_id=rec.source_id,
                image_path=rec.image_path,
                kind=rec.kind,
                split=rec.split,
                label=coarse,
                fine_label=rec.fine_label,
                boxes=list(rec.boxes),
                frame=rec.frame,
                foreground_pixel_ratio=rec.foreground_pixel_ratio,
                frame_area_ratio=rec.frame_area_ratio,
            )
        )
    return out


def load_annotated(manifest_path: Path) -> list[AnnotatedSample]:
    """Load manifest records as in-memory samples at native resolution."""
    manifest_path = Path(manifest_path)
    samples = []
    for rec in read_manifest(manifest_path):
        image = load_png(resolve_image_path(manifest_path, rec))
        samples.append(
            AnnotatedSample(
                image=image, boxes=list(rec.boxes), label=rec.label, source_id=rec.source_id
            )
        )
    return samples


def _record_for(
    sample: AnnotatedSample, kind: str, split: str, image_path: str, fine_label: str
) -> ManifestRecord:
    has_boxes = bool(sample.boxes)
    return ManifestRecord(
        source_id=sample.source_id,
        image_path=image_path,
        kind=kind,
        split=split,
        label=sample.label,
        fine_label=fine_label,
        boxes=list(sample.boxes),
        frame=enclosing_frame(sample.boxes) if has_boxes else None,
        foreground_pixel_ratio=foreground_pixel_ratio(sample),
        frame_area_ratio=frame_area_ratio(sample) if has_boxes else None,
    )


_PROCESSORS = {
    "orig": lambda s: s.image,
    "fg": build_fg,
    "bg": build_bg,
    "hybrid": build_hybrid,
}


def _eligible(kind: str, sample: AnnotatedSample) -> bool:
    if kind in ("fg", "bg"):
        return bool(sample.boxes)
    return True


def build_variants(
    input_manifests: Sequence[Path],
    out_dir: Path,
    kinds: Sequence[str] = ("orig", "fg", "bg", "hybrid"),
    bg_filter: str = "frame",
    merge: Optional[LabelMerge] = None,
) -> list[DatasetVariant]:
    """Materialize dataset variants under ``out_dir/{kind}/{split}``.

    Input manifests describe the original corpus (records may mix splits).
    Output ordering is stable by source_id, so the result is identical
    regardless of how input records were produced or ordered.
    """
    out_dir = Path(out_dir)
    for kind in kinds:
        if kind not in _PROCESSORS:
            raise DataError(f"unknown dataset kind {kind!r}")

    by_split: dict[str, list[tuple[ManifestRecord, Path]]] = {"train": [], "test": []}
    for mpath in input_manifests:
        mpath = Path(mpath)
        for rec in read_manifest(mpath):
            by_split[rec.split].append((rec, mpath))
    for split in by_split:
        by_split[split].sort(key=lambda pair: pair[0].source_id)

    variants = []
    for kind in kinds:
        for split, pairs in by_split.items():
            if not pairs:
                continue
            split_dir = out_dir / kind / split
            image_dir = split_dir / "images"
            image_dir.mkdir(parents=True, exist_ok=True)
            samples = []
            for rec, mpath in pairs:
                image = load_png(resolve_image_path(mpath, rec))
                sample = AnnotatedSample(
                    image=image,
                    boxes=list(rec.boxes),
                    label=rec.label,
                    source_id=rec.source_id,
                )
                if _eligible(kind, sample):
                    samples.append((sample, rec, mpath))

            if kind == "bg" and split == "train":
                kept = {
                    s.source_id
                    for s in filter_bg_train([s for s, _, _ in samples], measure=bg_filter)
                }
                samples = [t for t in samples if t[0].source_id in kept]

            records = []
            for sample, rec, mpath in samples:
                rel = f"images/{sample.source_id}.png"
                dest = split_dir / rel
                if kind == "orig":
                    # byte-identical copy keeps orig materialization exact
                    shutil.copyfile(resolve_image_path(mpath, rec), dest)
                else:
                    save_png(dest, _PROCESSORS[kind](sample))
                out_rec = _record_for(sample, kind, split, rel, fine_label=rec.fine_label)
                records.append(out_rec)

            if merge is not None:
                records = merge_labels(records, merge)
            manifest_path = split_dir / MANIFEST_NAME
            write_manifest(manifest_path, records)
            variants.append(
                DatasetVariant(kind=kind, split=split, manifest_path=manifest_path, records=records)
            )
    return variants
