"""In-memory datasets for training and evaluation.

Images are resized once at load with an aspect-distorting bilinear resize
(the processed crops can have any aspect ratio); batches are normalized to
[0, 1] floats on the fly, keeping zeroed regions exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .manifest import read_manifest, resolve_image_path

__all__ = ["LoadedDataset", "load_dataset", "resize_image", "to_batch"]


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize to size x size, uint8 in, uint8 out."""
    if image.shape[0] == size and image.shape[1] == size:
        return image
    pil = Image.fromarray(image)
    return np.asarray(pil.resize((size, size), resample=Image.BILINEAR))


def to_batch(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 NHWC -> float NCHW in [0, 1]."""
    dtype = np.dtype(dtype)
    x = images.astype(dtype) / dtype.type(255.0)
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


@dataclass
class LoadedDataset:
    kind: str
    split: str
    manifest_path: Path
    images: np.ndarray  # N x S x S x 3 uint8, resized
    labels: np.ndarray  # N int64 indices into class_names
    class_names: list[str]
    source_ids: list[str]
    fg_ratios: np.ndarray  # N float64, foreground_pixel_ratio from the manifest
    frame_ratios: np.ndarray  # N float64; NaN where the sample had no boxes

    def __len__(self) -> int:
        return len(self.source_ids)

    @property
    def dataset_id(self) -> str:
        return f"{self.kind}/{self.split}"


def load_dataset(
    manifest_path: Path,
    image_size: int,
    class_names: list[str] | None = None,
) -> LoadedDataset:
    """Load a manifest's images resized to ``image_size``.

    ``class_names`` pins the label space (must cover all labels found);
    by default it is the sorted set of labels in this manifest.
    """
    manifest_path = Path(manifest_path)
    records = read_manifest(manifest_path)
    if not records:
        raise DataError(f"manifest {manifest_path} is empty")
    records = sorted(records, key=lambda r: r.source_id)
    found = sorted({r.label for r in records})
    if class_names is None:
        class_names = found
    index = {name: i for i, name in enumerate(class_names)}
    missing = [lab for lab in found if lab not in index]
    if missing:
        raise DataError(f"labels {missing} not present in the pinned class list")

    images = np.empty((len(records), image_size, image_size, 3), dtype=np.uint8)
    labels = np.empty(len(records), dtype=np.int64)
    fg_ratios = np.empty(len(records), dtype=np.float64)
    frame_ratios = np.empty(len(records), dtype=np.float64)
    ids = []
    for i, rec in enumerate(records):
        path = resolve_image_path(manifest_path, rec)
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"))
        h, w = arr.shape[:2]
        if rec.kind in ("orig", "bg"):
            # fg/hybrid crops keep boxes in pre-crop coordinates, so bounds
            # validation only applies to dimension-preserving kinds
            for box in rec.boxes:
                if not box.within(w, h):
                    raise DataError(
                        f"{manifest_path}: sample {rec.source_id} box {box.as_list()} "
                        f"outside {w}x{h} image"
                    )
        images[i] = resize_image(arr, image_size)
        labels[i] = index[rec.label]
        fg_ratios[i] = rec.foreground_pixel_ratio
        frame_ratios[i] = np.nan if rec.frame_area_ratio is None else rec.frame_area_ratio
        ids.append(rec.source_id)

    kind = records[0].kind
    split = records[0].split
    return LoadedDataset(
        kind=kind,
        split=split,
        manifest_path=manifest_path,
        images=images,
        labels=labels,
        class_names=list(class_names),
        source_ids=ids,
        fg_ratios=fg_ratios,
        frame_ratios=frame_ratios,
    )
