"""Training orchestration for the four dataset roles.

The recipe follows the reference protocol scaled to desk size: momentum
SGD at base LR 0.01, weight decay 5e-4, LR divided by 10 every
``decay_every`` iterations, elevated dropout for the smaller fg/bg
training sets. Training draws a random crop (plus horizontal flip) from
the same pre-crop rendering the 10-patch evaluation protocol uses, so
train and test see the same resampling statistics.

Runs are bit-reproducible: data order, crop/flip draws, parameter init
and dropout masks all derive statelessly from the run seed, so a run
resumed from a checkpoint matches an uninterrupted one exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .loading import LoadedDataset, to_batch
from .nn.layers import softmax_xent
from .nn.network import Network, eval_size_for, tinynet_spec
from .nn.optim import MomentumSGD, OptimConfig, learning_rate
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .rng import stream

__all__ = ["TrainConfig", "TrainResult", "train", "epoch_count", "write_log",
           "load_train_split"]

# The smaller fg/bg corpora see more epochs for the same iteration budget,
# so their configs default to stronger dropout.
_ELEVATED_DROPOUT_KINDS = ("fg", "bg")


@dataclass(frozen=True)
class TrainConfig:
    kind: str
    iterations: int = 8_000
    batch_size: int = 64
    optim: OptimConfig = field(default_factory=lambda: OptimConfig(decay_every=3_000))
    dropout_drop_prob: Optional[float] = None  # None = architecture default / kind default
    seed: int = 0
    input_size: int = 64
    checkpoint_every: Optional[int] = None
    log_every: int = 50

    def __post_init__(self):
        if self.kind not in ("orig", "fg", "bg", "hybrid"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def effective_drop_prob(self) -> Optional[float]:
        if self.dropout_drop_prob is not None:
            return self.dropout_drop_prob
        if self.kind in _ELEVATED_DROPOUT_KINDS:
            return 0.7
        return None

    @classmethod
    def from_file(cls, path: Path, kind: str, seed: int) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        optim = OptimConfig.from_dict(raw.pop("optim")) if "optim" in raw else OptimConfig(
            decay_every=raw.pop("decay_every", 3_000)
        )
        known = {f for f in cls.__dataclass_fields__} - {"kind", "seed", "optim"}  # type: ignore[attr-defined]
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown train config fields: {sorted(extra)}")
        return cls(kind=kind, seed=seed, optim=optim, **raw)


@dataclass
class TrainResult:
    network: Network
    optimizer: MomentumSGD
    log: list[dict]
    iteration: int


def epoch_count(config: TrainConfig, train_size: int) -> float:
    """iterations x batch_size / |train split|."""
    if train_size <= 0:
        raise DataError("train split is empty")
    return config.iterations * config.batch_size / train_size


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return stream(seed, "shuffle", epoch).permutation(n)


def _batch_indices(seed: int, iteration: int, batch_size: int, n: int,
                   perm_cache: dict) -> np.ndarray:
    """Sample indices for one iteration of the per-epoch-shuffled stream."""
    start = iteration * batch_size
    out = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        pos = start + i
        epoch, offset = divmod(pos, n)
        if epoch not in perm_cache:
            perm_cache.clear()
            perm_cache[epoch] = _epoch_order(seed, epoch, n)
        out[i] = perm_cache[epoch][offset]
    return out


def _apply_dropout_override(net: Network, drop_prob: Optional[float]) -> None:
    if drop_prob is None:
        return
    for layer in net.layers:
        if layer.kind == "dropout":
            layer.drop_prob = float(drop_prob)


def load_train_split(manifest_path, config: "TrainConfig") -> LoadedDataset:
    """Load a train manifest at the pre-crop size train() expects."""
    from .loading import load_dataset

    return load_dataset(manifest_path, image_size=eval_size_for(config.input_size))


def _augmented_batch(
    config: "TrainConfig", dataset: LoadedDataset, iteration: int,
    crop: int, perm_cache: dict,
) -> tuple[np.ndarray, np.ndarray]:
    """One batch: shuffled sample picks, then seeded random crop + flip."""
    n = len(dataset)
    idx = _batch_indices(config.seed, iteration, config.batch_size, n, perm_cache)
    rng = stream(config.seed, "augment", iteration)
    margin = dataset.images.shape[1] - crop
    rows = rng.integers(0, margin + 1, size=len(idx))
    cols = rng.integers(0, margin + 1, size=len(idx))
    flips = rng.integers(0, 2, size=len(idx)).astype(bool)
    batch = np.empty((len(idx), crop, crop, 3), dtype=np.uint8)
    for j, (i, r, c, f) in enumerate(zip(idx, rows, cols, flips)):
        patch = dataset.images[i, r : r + crop, c : c + crop]
        batch[j] = patch[:, ::-1] if f else patch
    return batch, dataset.labels[idx]


def train(
    config: TrainConfig,
    dataset: LoadedDataset,
    arch: Optional[dict] = None,
    resume_from: Optional[Path] = None,
    checkpoint_path: Optional[Path] = None,
) -> TrainResult:
    """Train a network on the dataset's train split.

    The dataset must be loaded at the pre-crop size (``load_train_split``);
    each draw takes a seeded random crop and flip of it. ``resume_from``
    continues a checkpointed run; the result is bit-equal to having
    trained without interruption. ``checkpoint_path`` enables periodic
    checkpoints (``config.checkpoint_every``) plus a final one.
    """
    if dataset.split != "train":
        raise DataError(f"training requires a train split, got {dataset.split!r}")
    if config.kind != dataset.kind:
        raise DataError(
            f"config is for kind {config.kind!r} but dataset is {dataset.kind!r}"
        )
    expected_size = eval_size_for(config.input_size)
    if dataset.images.shape[1] != expected_size:
        raise DataError(
            f"train split must be loaded at the {expected_size}px pre-crop size "
            f"(got {dataset.images.shape[1]}px); use load_train_split"
        )
    n = len(dataset)
    if n == 0:
        raise DataError("train split is empty")

    if resume_from is not None:
        net, optim, header = load_checkpoint(resume_from)
        if optim is None:
            raise DataError(f"{resume_from} has no optimizer state to resume from")
        if int(header["seed"]) != config.seed:
            raise DataError(
                f"resume seed {header['seed']} differs from config seed "
                f"{config.seed}; the runs would not be bit-equal"
            )
        start_iter = int(header["iteration"])
        _apply_dropout_override(net, config.effective_drop_prob)
    else:
        arch_dict = dict(arch) if arch is not None else tinynet_spec(len(dataset.class_names))
        if config.input_size != arch_dict["input_size"]:
            raise ConfigError(
                f"config input_size {config.input_size} != architecture "
                f"input_size {arch_dict['input_size']}"
            )
        net = Network.from_arch_dict(arch_dict)
        if net.category_count != len(dataset.class_names):
            raise ConfigError(
                f"architecture emits {net.category_count} scores for "
                f"{len(dataset.class_names)} categories"
            )
        net.init_params(config.seed)
        _apply_dropout_override(net, config.effective_drop_prob)
        optim = MomentumSGD(config.optim, net.parameters())
        start_iter = 0

    params = net.parameters()
    perm_cache: dict = {}
    log: list[dict] = []
    for it in range(start_iter, config.iterations):
        crops, y = _augmented_batch(config, dataset, it, config.input_size, perm_cache)
        x = to_batch(crops, dtype=net.dtype)
        rng_it = stream(config.seed, "dropout", it)
        scores, caches = net.forward_train(x, rng_it)
        loss, dscores = softmax_xent(scores, y)
        grads = net.backward(dscores, caches)
        lr = optim.step(params, net.grads_in_order(grads), it)
        if it % config.log_every == 0 or it == config.iterations - 1:
            top1 = float((scores.argmax(axis=1) == y).mean())
            log.append({"iter": it, "lr": lr, "loss": loss, "train_top1": top1})
        done = it + 1
        if (
            checkpoint_path is not None
            and config.checkpoint_every
            and done % config.checkpoint_every == 0
            and done < config.iterations
        ):
            save_checkpoint(checkpoint_path, net, done, config.seed, optim)

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, net, config.iterations, config.seed, optim)
    return TrainResult(network=net, optimizer=optim, log=log, iteration=config.iterations)


def write_log(path: Path, log: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
