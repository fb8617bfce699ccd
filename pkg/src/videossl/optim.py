"""SGD with classical momentum, coupled weight decay and a step LR schedule."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class SgdConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.001
    decay_factor: float = 10.0
    decay_every: int = 10_000

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not self.decay_factor > 1:
            raise ValueError("decay_factor must be > 1")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")


@dataclass
class OptState:
    velocities: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params) -> "OptState":
        return cls({name: np.zeros_like(p.data) for name, p in params.items()})


def lr_at(iteration: int, config: SgdConfig) -> float:
    try:
        return config.lr0 / config.decay_factor ** (iteration // config.decay_every)
    except OverflowError:
        return 0.0


def sgd_step(params, grads: Optional[Sequence[np.ndarray]], state: OptState, lr: float,
             config: SgdConfig) -> None:
    """In-place update of ``params`` (name -> Parameter) and ``state``.

    g' = g + wd * w;  v <- m * v + g';  w <- w - lr * v.
    ``grads`` defaults to each parameter's accumulated ``grad``.
    """
    items = list(params.items())
    if grads is None:
        grads = [p.grad for _, p in items]
    if len(grads) != len(items):
        raise ShapeError(f"{len(grads)} gradients for {len(items)} parameters")
    for (name, p), g in zip(items, grads):
        v = state.velocities.get(name)
        if v is None:
            v = state.velocities[name] = np.zeros_like(p.data)
        if g.shape != p.data.shape or v.shape != p.data.shape:
            raise ShapeError(f"{name}: gradient {g.shape} / velocity {v.shape} vs parameter {p.data.shape}")
        g = g + config.weight_decay * p.data
        v *= config.momentum
        v += g
        p.data -= lr * v
    state.step += 1
