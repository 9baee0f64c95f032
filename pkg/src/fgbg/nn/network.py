"""Layer-stack network built from declarative specs.

An architecture is a JSON list of layer entries; shapes are composed and
validated at build time. The final layer must be fully-connected and emits
the pre-softmax score vector used everywhere downstream (evaluation,
fusion, visualization).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, ShapeMismatchError
from ..rng import stream
from .layers import Conv2d, Dropout, FullyConnected, MaxPool2d, ReLU

__all__ = ["LayerSpec", "Network", "load_arch", "tinynet_spec", "EVAL_SCALE", "eval_size_for"]

# Pre-crop evaluation size relative to the network input, mirroring the
# 256 -> 227 crop proportion of the classic pipeline.
EVAL_SCALE = 1.14


def eval_size_for(input_size: int) -> int:
    return int(round(input_size * EVAL_SCALE))


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: Optional[int] = None
    kernel: Optional[int] = None
    stride: int = 1
    pad: int = 0
    features: Optional[int] = None
    drop_prob: Optional[float] = None

    def to_dict(self) -> dict:
        raw = asdict(self)
        return {k: v for k, v in raw.items() if v is not None and not (k in ("stride",) and v == 1) and not (k == "pad" and v == 0)}

    @classmethod
    def from_dict(cls, raw: dict) -> "LayerSpec":
        known = set(cls.__dataclass_fields__)  # type: ignore[attr-defined]
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown layer spec fields {sorted(extra)} in {raw}")
        return cls(**raw)


def _instantiate(spec: LayerSpec, in_shape, dtype):
    if spec.kind == "conv":
        if spec.out_channels is None or spec.kernel is None:
            raise ConfigError(f"conv spec needs out_channels and kernel: {spec}")
        layer = Conv2d(
            in_shape[0], spec.out_channels, spec.kernel, spec.stride, spec.pad, dtype=dtype
        )
    elif spec.kind == "relu":
        layer = ReLU()
    elif spec.kind == "maxpool":
        layer = MaxPool2d(spec.kernel or 2)
    elif spec.kind == "fc":
        if spec.features is None:
            raise ConfigError(f"fc spec needs features: {spec}")
        layer = FullyConnected(int(np.prod(in_shape)), spec.features, dtype=dtype)
    elif spec.kind == "dropout":
        if spec.drop_prob is None:
            raise ConfigError(f"dropout spec needs drop_prob: {spec}")
        layer = Dropout(spec.drop_prob)
    else:
        raise ConfigError(f"unknown layer kind {spec.kind!r}")
    return layer, layer.out_shape(in_shape)


class Network:
    """Sequential stack whose last layer emits category scores."""

    def __init__(self, specs: Sequence[LayerSpec], input_size: int, in_channels: int = 3,
                 dtype=np.float32):
        self.specs = list(specs)
        self.input_size = int(input_size)
        self.in_channels = in_channels
        self.dtype = np.dtype(dtype)
        self.layers = []
        self.shapes = [(in_channels, input_size, input_size)]
        shape = self.shapes[0]
        for i, spec in enumerate(self.specs):
            try:
                layer, shape = _instantiate(spec, shape, self.dtype)
            except ShapeMismatchError as exc:
                raise ShapeMismatchError(f"layer {i} ({spec.kind}): {exc}") from exc
            self.layers.append(layer)
            self.shapes.append(shape)
        if not self.layers or self.layers[-1].kind != "fc":
            raise ConfigError("architecture must end with an fc layer emitting scores")
        self.category_count = shape[0]

    def init_params(self, seed: int) -> None:
        rng = stream(seed, "init")
        for layer in self.layers:
            layer.init_params(rng)

    def _check_batch(self, x):
        expected = (self.in_channels, self.input_size, self.input_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeMismatchError(
                f"layer 0 ({self.specs[0].kind}): batch shape {x.shape} does not match "
                f"input spec {expected}"
            )

    def forward(self, x: np.ndarray, upto: Optional[int] = None) -> np.ndarray:
        """Eval-mode forward; deterministic and side-effect free.

        ``upto`` returns the activation after layer index ``upto`` instead
        of the final scores (used by the visualizer).
        """
        self._check_batch(x)
        out = x.astype(self.dtype, copy=False)
        last = len(self.layers) - 1 if upto is None else upto
        for i, layer in enumerate(self.layers[: last + 1]):
            try:
                out, _ = layer.forward(out, train=False)
            except ShapeMismatchError as exc:
                raise ShapeMismatchError(f"layer {i} ({layer.kind}): {exc}") from exc
        return out

    def forward_train(self, x: np.ndarray, rng: np.random.Generator):
        self._check_batch(x)
        out = x.astype(self.dtype, copy=False)
        caches = []
        for i, layer in enumerate(self.layers):
            try:
                out, cache = layer.forward(out, train=True, rng=rng)
            except ShapeMismatchError as exc:
                raise ShapeMismatchError(f"layer {i} ({layer.kind}): {exc}") from exc
            caches.append(cache)
        return out, caches

    def backward(self, dscores: np.ndarray, caches) -> list[dict]:
        if caches is None or len(caches) != len(self.layers):
            raise ShapeMismatchError("backward needs the cache list from forward_train")
        grads: list[dict] = [None] * len(self.layers)  # type: ignore[list-item]
        delta = dscores
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if i == 0 and layer.kind == "conv":
                # nothing consumes the input gradient
                delta, grad = layer.backward(delta, caches[i], need_dx=False)
            else:
                delta, grad = layer.backward(delta, caches[i])
            grads[i] = grad
        return grads

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in declaration order; arrays are live views."""
        out = []
        for i, layer in enumerate(self.layers):
            for pname in sorted(layer.params):
                out.append((f"layer{i}.{pname}", layer.params[pname]))
        return out

    def grads_in_order(self, grads: list[dict]) -> list[np.ndarray]:
        out = []
        for i, layer in enumerate(self.layers):
            for pname in sorted(layer.params):
                out.append(grads[i][pname])
        return out

    def arch_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "dtype": self.dtype.name,
            "layers": [s.to_dict() for s in self.specs],
        }

    @classmethod
    def from_arch_dict(cls, raw: dict) -> "Network":
        specs = [LayerSpec.from_dict(entry) for entry in raw["layers"]]
        return cls(
            specs,
            input_size=raw["input_size"],
            in_channels=raw.get("in_channels", 3),
            dtype=np.dtype(raw.get("dtype", "float32")),
        )


def tinynet_spec(categories: int) -> dict:
    """The desk-scale reference architecture, loaded from its config file."""
    cfg = resources.files("fgbg").joinpath("configs/tinynet.json").read_text()
    raw = json.loads(cfg)
    raw["layers"][-1]["features"] = categories
    return raw


def load_arch(path: Path, categories: Optional[int] = None) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if "layers" not in raw or "input_size" not in raw:
        raise ConfigError(f"architecture file {path} needs 'input_size' and 'layers'")
    if categories is not None:
        raw["layers"][-1]["features"] = categories
    return raw
