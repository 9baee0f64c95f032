"""Momentum SGD with weight decay and step learning-rate decay.

Update rule per parameter:

    v <- momentum * v - lr * (grad + weight_decay * param)
    param <- param + v

with lr = base_lr * decay_factor ** floor(iteration / decay_every).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError, DivergenceError

__all__ = ["OptimConfig", "MomentumSGD", "learning_rate"]


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    decay_factor: float = 0.1
    decay_every: int = 100_000

    def __post_init__(self):
        for name in ("base_lr", "momentum", "weight_decay", "decay_factor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"optimizer constant {name} must be non-negative")
        if self.decay_every <= 0:
            raise ConfigError("decay_every must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "OptimConfig":
        return cls(**raw)


def learning_rate(config: OptimConfig, iteration: int) -> float:
    return config.base_lr * config.decay_factor ** (iteration // config.decay_every)


class MomentumSGD:
    """Owns one velocity buffer per parameter; updates parameters in place."""

    def __init__(self, config: OptimConfig, params: list[tuple[str, np.ndarray]]):
        self.config = config
        self._names = [name for name, _ in params]
        self.velocities = [np.zeros_like(p) for _, p in params]

    def step(self, params: list[tuple[str, np.ndarray]], grads: list[np.ndarray],
             iteration: int) -> float:
        lr = learning_rate(self.config, iteration)
        wd = self.config.weight_decay
        mom = self.config.momentum
        for (name, param), grad, vel in zip(params, grads, self.velocities):
            if not np.all(np.isfinite(grad)):
                raise DivergenceError(
                    f"non-finite gradient for {name} at iteration {iteration}"
                )
            vel *= mom
            vel -= lr * (grad + wd * param)
            param += vel
        return lr
