"""Dataset manifest I/O.

A manifest is a line-delimited JSON file, one record per processed image.
Field names and order are part of the on-disk contract:

    {source_id, image_path, kind, split, label, fine_label,
     boxes, frame, foreground_pixel_ratio, frame_area_ratio}

``image_path`` is relative to the manifest's directory, which keeps
manifests byte-comparable across dataset variants and makes bundles
relocatable. Images are lossless PNG so zeroed pixels round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry import Box

MANIFEST_NAME = "manifest.jsonl"
KINDS = ("orig", "fg", "bg", "hybrid")
SPLITS = ("train", "test")

_FIELDS = (
    "source_id",
    "image_path",
    "kind",
    "split",
    "label",
    "fine_label",
    "boxes",
    "frame",
    "foreground_pixel_ratio",
    "frame_area_ratio",
)


@dataclass
class ManifestRecord:
    source_id: str
    image_path: str
    kind: str
    split: str
    label: str
    fine_label: str
    boxes: list[Box]
    frame: Optional[Box]
    foreground_pixel_ratio: float
    frame_area_ratio: Optional[float]

    def to_json(self) -> str:
        payload = {
            "source_id": self.source_id,
            "image_path": self.image_path,
            "kind": self.kind,
            "split": self.split,
            "label": self.label,
            "fine_label": self.fine_label,
            "boxes": [b.as_list() for b in self.boxes],
            "frame": self.frame.as_list() if self.frame else None,
            "foreground_pixel_ratio": self.foreground_pixel_ratio,
            "frame_area_ratio": self.frame_area_ratio,
        }
        return json.dumps(payload, separators=(", ", ": "))

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        raw = json.loads(line)
        missing = [f for f in _FIELDS if f not in raw]
        if missing:
            raise DataError(f"manifest record missing fields {missing}: {line[:120]}")
        if raw["kind"] not in KINDS:
            raise DataError(f"unknown dataset kind {raw['kind']!r}")
        if raw["split"] not in SPLITS:
            raise DataError(f"unknown split {raw['split']!r}")
        return cls(
            source_id=raw["source_id"],
            image_path=raw["image_path"],
            kind=raw["kind"],
            split=raw["split"],
            label=str(raw["label"]),
            fine_label=str(raw["fine_label"]),
            boxes=[Box.from_sequence(b) for b in raw["boxes"]],
            frame=Box.from_sequence(raw["frame"]) if raw["frame"] else None,
            foreground_pixel_ratio=float(raw["foreground_pixel_ratio"]),
            frame_area_ratio=(
                None if raw["frame_area_ratio"] is None else float(raw["frame_area_ratio"])
            ),
        )


def write_manifest(path: Path, records: Iterable[ManifestRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_manifest(path: Path) -> list[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ManifestRecord.from_json(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return records


def save_png(path: Path, image: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if image.dtype != np.uint8:
        raise DataError(f"images are stored as uint8, got {image.dtype}")
    Image.fromarray(image).save(path, format="PNG")


def load_png(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"image not found: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def resolve_image_path(manifest_path: Path, record: ManifestRecord) -> Path:
    return Path(manifest_path).parent / record.image_path
