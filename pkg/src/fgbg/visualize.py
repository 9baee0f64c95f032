"""Top-response patch visualization.

For a chosen spatial layer, find each filter's highest responses over a
reference set (at most one per reference image), trace the unit back to its
input receptive field, and emit a patch grid, one row per filter. Patches
are cut from the network-input rendering of the stored processed image, so
grids show exactly what the network saw (zeroed regions included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, ShapeMismatchError
from .geometry import Box
from .loading import LoadedDataset, to_batch
from .nn.network import Network

__all__ = ["PatchHit", "receptive_field", "receptive_field_raw", "top_patches", "emit_grid",
           "write_hits"]


@dataclass(frozen=True)
class PatchHit:
    source_id: str
    filter_index: int
    position: tuple[int, int]  # (row, col) on the layer's response map
    response: float
    rf_box: Box  # clipped to input bounds
    rf_raw: tuple[int, int, int, int]  # unclipped geometry


def _layer_geometry(net: Network, layer_index: int) -> tuple[int, int, int]:
    """Composed (kernel, stride, pad) of layers 0..layer_index inclusive."""
    if not 0 <= layer_index < len(net.layers):
        raise ConfigError(f"layer index {layer_index} out of range")
    k_total, s_total, p_total = 1, 1, 0
    for layer in net.layers[: layer_index + 1]:
        if layer.kind == "conv":
            k, s, p = layer.kernel, layer.stride, layer.pad
        elif layer.kind == "maxpool":
            k, s, p = layer.kernel, layer.kernel, 0
        elif layer.kind in ("relu", "dropout"):
            continue
        else:
            raise ShapeMismatchError(
                f"layer {layer_index} ({layer.kind}) has no spatial receptive field"
            )
        k_total += (k - 1) * s_total
        p_total += p * s_total
        s_total *= s
    return k_total, s_total, p_total


def receptive_field_raw(net: Network, layer_index: int, position: tuple[int, int]
                        ) -> tuple[int, int, int, int]:
    """Unclipped (x0, y0, x1, y1) input region feeding the unit."""
    target = net.layers[layer_index]
    if target.kind not in ("conv", "maxpool", "relu", "dropout"):
        raise ShapeMismatchError(f"layer {layer_index} ({target.kind}) is not spatial")
    shape = net.shapes[layer_index + 1]
    if len(shape) != 3:
        raise ShapeMismatchError(f"layer {layer_index} output {shape} is not spatial")
    row, col = position
    if not (0 <= row < shape[1] and 0 <= col < shape[2]):
        raise ConfigError(
            f"position {position} outside the {shape[1]}x{shape[2]} response map"
        )
    k, s, p = _layer_geometry(net, layer_index)
    x0 = col * s - p
    y0 = row * s - p
    return (x0, y0, x0 + k, y0 + k)


def receptive_field(net: Network, layer_index: int, position: tuple[int, int]) -> Box:
    """Input region affecting the unit, clipped to image bounds."""
    x0, y0, x1, y1 = receptive_field_raw(net, layer_index, position)
    size = net.input_size
    return Box(max(x0, 0), max(y0, 0), min(x1, size), min(y1, size))


def top_patches(
    net: Network,
    layer_index: int,
    filter_index: int,
    dataset: LoadedDataset,
    count: int,
    batch_size: int = 64,
) -> list[PatchHit]:
    """The ``count`` strongest responses of one filter over the reference set.

    At most one hit per reference image (its best position). Ties break
    toward the lower source_id, then row-major position.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if len(dataset) == 0:
        raise DataError("reference set is empty")
    shape = net.shapes[layer_index + 1]
    if len(shape) != 3:
        raise ShapeMismatchError(f"layer {layer_index} output {shape} is not spatial")
    if not 0 <= filter_index < shape[0]:
        raise ConfigError(f"filter {filter_index} outside {shape[0]} channels")

    per_image = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset.images[start : start + batch_size]
        acts = net.forward(to_batch(chunk, dtype=net.dtype), upto=layer_index)
        maps = acts[:, filter_index]
        flat = maps.reshape(maps.shape[0], -1)
        best = flat.argmax(axis=1)  # ties: first index, row-major
        for j in range(maps.shape[0]):
            row, col = divmod(int(best[j]), maps.shape[2])
            per_image.append(
                (
                    float(flat[j, best[j]]),
                    dataset.source_ids[start + j],
                    (row, col),
                )
            )
    per_image.sort(key=lambda t: (-t[0], t[1], t[2]))
    hits = []
    for response, source_id, pos in per_image[:count]:
        hits.append(
            PatchHit(
                source_id=source_id,
                filter_index=filter_index,
                position=pos,
                response=response,
                rf_box=receptive_field(net, layer_index, pos),
                rf_raw=receptive_field_raw(net, layer_index, pos),
            )
        )
    return hits


def emit_grid(
    hits_per_filter: Sequence[Sequence[PatchHit]],
    dataset: LoadedDataset,
    out_path: Path,
    tile: int = 32,
    gutter: int = 2,
) -> Path:
    """Write the patch grid PNG: one row per filter, tiles resized uniformly.

    Grid dimensions: rows*tile + (rows-1)*gutter by cols*tile + (cols-1)*gutter.
    """
    if not hits_per_filter or all(len(h) == 0 for h in hits_per_filter):
        raise DataError("no patch hits to draw")
    index = {sid: i for i, sid in enumerate(dataset.source_ids)}
    rows = len(hits_per_filter)
    cols = max(len(h) for h in hits_per_filter)
    height = rows * tile + (rows - 1) * gutter
    width = cols * tile + (cols - 1) * gutter
    canvas = np.zeros((height, width, 3), dtype=np.uint8)
    for r, hits in enumerate(hits_per_filter):
        for c, hit in enumerate(hits):
            if hit.source_id not in index:
                raise DataError(f"hit references unknown source_id {hit.source_id}")
            image = dataset.images[index[hit.source_id]]
            b = hit.rf_box
            patch = image[b.y0 : b.y1, b.x0 : b.x1]
            resized = np.asarray(
                Image.fromarray(patch).resize((tile, tile), resample=Image.BILINEAR)
            )
            y = r * (tile + gutter)
            x = c * (tile + gutter)
            canvas[y : y + tile, x : x + tile] = resized
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas).save(out_path, format="PNG")
    return out_path


def write_hits(path: Path, hits_per_filter: Sequence[Sequence[PatchHit]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for hits in hits_per_filter:
            for hit in hits:
                fh.write(
                    json.dumps(
                        {
                            "source_id": hit.source_id,
                            "filter": hit.filter_index,
                            "position": list(hit.position),
                            "response": hit.response,
                            "rf_box": hit.rf_box.as_list(),
                            "rf_raw": list(hit.rf_raw),
                        }
                    )
                )
                fh.write("\n")
