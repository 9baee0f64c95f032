"""Synthetic figure-ground corpus generator.

Each sample is a textured background with one flat-colored shape drawn on
top and a ground-truth box tightly enclosing it. Category identity is
carried by two independent channels:

* the shape silhouette (foreground cue, always category-coded), and
* the background stripe family - orientation x {plain, crosshatch} -
  which is category-coded only when ``background_informative`` is set.
  Wavelength, phase and tint vary per sample, so the family cue is
  robust to the evaluation-time rescale.

The stripes are deliberately dim under heavy background noise: the
texture cue is weak per pixel and classifiers must integrate it over
area, which makes background accuracy degrade smoothly as the zeroed
box grows. Shapes carry lighter noise, so the foreground cue instead
degrades toward small raster sizes.

Every shape fills its bounding square, so the zeroed region in background
images carries no category information of its own: with the informative
flag off, background-only classifiers are held at chance.

Shape size is sampled uniformly, giving the corpus a controlled spread of
foreground ratios for the ratio-binned diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import AnnotatedSample, _record_for
from .errors import ConfigError
from .geometry import Box
from .manifest import MANIFEST_NAME, save_png, write_manifest
from .rng import stream

__all__ = ["SynthConfig", "SHAPE_KINDS", "synth_generate", "write_corpus"]

SHAPE_KINDS = (
    "circle",
    "ring",
    "square",
    "frame",
    "diamond",
    "triangle",
    "plus",
    "cross",
    "hbars",
    "vbars",
)

# Bright saturated fills for shapes against deliberately dim stripe tints,
# so shape boundaries always carry strong gradients.
_FG_PALETTE = np.array(
    [
        (250, 70, 70),
        (70, 245, 80),
        (90, 110, 255),
        (250, 235, 70),
        (245, 80, 245),
        (80, 240, 240),
        (255, 165, 60),
        (252, 252, 252),
    ],
    dtype=np.float64,
)
_TINT_PALETTE = np.array(
    [
        (0.53, 0.34, 0.28),
        (0.28, 0.50, 0.34),
        (0.31, 0.37, 0.56),
        (0.50, 0.50, 0.28),
        (0.47, 0.31, 0.50),
        (0.31, 0.53, 0.53),
    ],
    dtype=np.float64,
)


@dataclass
class SynthConfig:
    categories: int = 10
    train_per_category: int = 200
    test_per_category: int = 50
    image_size: int = 64
    min_shape: int = 6
    max_shape: int = 62
    background_informative: bool = True
    noise_sigma: float = 30.0  # on background pixels
    fg_noise_sigma: float = 24.0  # on shape pixels
    stripe_amplitude: float = 0.30
    shape_kinds: tuple[str, ...] = ()
    wavelength_range: tuple[float, float] = (12.0, 16.0)
    stripe_orientations: int = 5

    def __post_init__(self):
        if self.categories < 2:
            raise ConfigError("synthetic corpus needs at least 2 categories")
        if not self.shape_kinds:
            if self.categories > len(SHAPE_KINDS):
                raise ConfigError(
                    f"at most {len(SHAPE_KINDS)} categories without custom shape kinds"
                )
            self.shape_kinds = SHAPE_KINDS[: self.categories]
        if len(self.shape_kinds) != self.categories:
            raise ConfigError("one shape kind required per category")
        unknown = set(self.shape_kinds) - set(SHAPE_KINDS)
        if unknown:
            raise ConfigError(f"unknown shape kinds: {sorted(unknown)}")
        if self.min_shape < 5:
            raise ConfigError("shapes below 5px do not rasterize distinctly")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.min_shape > self.max_shape:
            raise ConfigError("min_shape must not exceed max_shape")
        if self.max_shape > self.image_size:
            raise ConfigError(
                f"shape of {self.max_shape}px cannot fit a {self.image_size}px canvas"
            )
        if self.wavelength_range[0] > self.wavelength_range[1] or self.wavelength_range[0] <= 2:
            raise ConfigError(f"bad wavelength range {self.wavelength_range}")
        n_families = self.stripe_orientations * 2  # plain and crosshatch per orientation
        if n_families < self.categories:
            raise ConfigError(
                f"{n_families} stripe families cannot code {self.categories} categories"
            )

    @property
    def labels(self) -> list[str]:
        width = max(2, len(str(self.categories - 1)))
        return [f"cat{idx:0{width}d}" for idx in range(self.categories)]

    @classmethod
    def from_file(cls, path: Path) -> "SynthConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown synth config fields: {sorted(extra)}")
        if "shape_kinds" in raw:
            raw["shape_kinds"] = tuple(raw["shape_kinds"])
        if "wavelength_range" in raw:
            raw["wavelength_range"] = tuple(raw["wavelength_range"])
        return cls(**raw)


def _shape_mask(kind: str, s: int) -> np.ndarray:
    """Rasterize a shape into an s x s boolean mask touching all four edges."""
    yy, xx = np.mgrid[0:s, 0:s]
    cx = cy = (s - 1) / 2.0
    half = s / 2.0
    if kind == "circle":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= half**2
    if kind == "ring":
        outer = (xx - cx) ** 2 + (yy - cy) ** 2 <= half**2
        inner_r = max(half - max(2.0, s / 5.0), 1.0)
        return outer & ((xx - cx) ** 2 + (yy - cy) ** 2 > inner_r**2)
    if kind == "square":
        return np.ones((s, s), dtype=bool)
    if kind == "frame":
        t = max(1, s // 5)
        mask = np.ones((s, s), dtype=bool)
        mask[t : s - t, t : s - t] = False
        return mask
    if kind == "diamond":
        return np.abs(xx - cx) + np.abs(yy - cy) <= half
    if kind == "triangle":
        halfw = (yy + 1) * half / s
        return np.abs(xx - cx) <= halfw
    if kind == "plus":
        t = max(1, s // 3)
        lo, hi = (s - t) // 2, (s - t) // 2 + t
        return ((xx >= lo) & (xx < hi)) | ((yy >= lo) & (yy < hi))
    if kind == "cross":
        t = max(1.0, s / 6.0)
        return (np.abs(xx - yy) <= t) | (np.abs(xx + yy - (s - 1)) <= t)
    if kind == "hbars":
        band = (yy * 5) // s
        return band % 2 == 0
    if kind == "vbars":
        band = (xx * 5) // s
        return band % 2 == 0
    raise ConfigError(f"unknown shape kind {kind!r}")


def _stripe_background(
    config: SynthConfig, family: int, rng: np.random.Generator
) -> np.ndarray:
    """Oriented stripes (or crosshatch) at a per-sample random wavelength."""
    size = config.image_size
    orientation = family % config.stripe_orientations
    crosshatch = family >= config.stripe_orientations
    theta = np.pi * orientation / config.stripe_orientations
    wavelength = rng.uniform(*config.wavelength_range)
    tint = _TINT_PALETTE[rng.integers(len(_TINT_PALETTE))]
    yy, xx = np.mgrid[0:size, 0:size]

    def wave(angle):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return np.sin(
            2.0 * np.pi / wavelength * (xx * np.cos(angle) + yy * np.sin(angle)) + phase
        )

    amp = config.stripe_amplitude
    if crosshatch:
        pattern = 0.55 + (amp / 2.0) * (wave(theta) + wave(theta + np.pi / 2.0))
    else:
        pattern = 0.55 + amp * wave(theta)
    return pattern[:, :, None] * tint[None, None, :] * 255.0


def _draw_sample(
    config: SynthConfig, category: int, source_id: str, rng: np.random.Generator
) -> AnnotatedSample:
    size = config.image_size
    family = (
        category
        if config.background_informative
        else int(rng.integers(config.stripe_orientations * 2))
    )
    canvas = _stripe_background(config, family, rng)
    canvas += rng.normal(0.0, config.noise_sigma, size=canvas.shape)

    s = int(rng.integers(config.min_shape, config.max_shape + 1))
    x = int(rng.integers(0, size - s + 1))
    y = int(rng.integers(0, size - s + 1))
    mask = _shape_mask(config.shape_kinds[category], s)
    color = _FG_PALETTE[rng.integers(len(_FG_PALETTE))]
    fg_noise = rng.normal(0.0, config.fg_noise_sigma, size=(s, s, 3))
    region = canvas[y : y + s, x : x + s]
    region[mask] = (color[None, :] + fg_noise[mask]).clip(0.0, 255.0)

    image = np.clip(canvas, 0.0, 255.0).astype(np.uint8)

    ys, xs = np.nonzero(mask)
    box = Box(
        x + int(xs.min()),
        y + int(ys.min()),
        x + int(xs.max()) + 1,
        y + int(ys.max()) + 1,
    )
    return AnnotatedSample(
        image=image, boxes=[box], label=config.labels[category], source_id=source_id
    )


def _generate_split(
    config: SynthConfig, seed: int, split: str, per_category: int
) -> list[AnnotatedSample]:
    rng = stream(seed, "synth", split)
    samples = []
    idx = 0
    for category in range(config.categories):
        for _ in range(per_category):
            samples.append(
                _draw_sample(config, category, f"{split}-{idx:05d}", rng)
            )
            idx += 1
    return samples


def synth_generate(
    config: SynthConfig, seed: int
) -> tuple[list[AnnotatedSample], list[AnnotatedSample]]:
    """Deterministic (train, test) corpora for the given seed."""
    train = _generate_split(config, seed, "train", config.train_per_category)
    test = _generate_split(config, seed, "test", config.test_per_category)
    return train, test


def write_corpus(config: SynthConfig, seed: int, out_dir: Path) -> dict[str, Path]:
    """Write the corpus as an orig-kind dataset: ``out/orig/{split}``."""
    out_dir = Path(out_dir)
    train, test = synth_generate(config, seed)
    manifests = {}
    for split, samples in (("train", train), ("test", test)):
        split_dir = out_dir / "orig" / split
        records = []
        for sample in samples:
            rel = f"images/{sample.source_id}.png"
            save_png(split_dir / rel, sample.image)
            records.append(
                _record_for(sample, "orig", split, rel, fine_label=sample.label)
            )
        manifest_path = split_dir / MANIFEST_NAME
        write_manifest(manifest_path, records)
        manifests[split] = manifest_path
    return manifests
