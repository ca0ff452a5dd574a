"""Training hyperparameters and the Adam update."""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 20
    iterations_per_epoch: int = 32
    batch_size: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.epochs < 1 or self.iterations_per_epoch < 1 or self.batch_size < 1:
            raise ConfigError("epochs, iterations_per_epoch and batch_size must be positive")


def adam_step(params, grads, cfg):
    """One bias-corrected Adam update, applied in place; returns ``params``."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for '{name}'")
    params.step += 1
    t = params.step
    dt = params.dtype.type
    b1, b2 = dt(cfg.beta1), dt(cfg.beta2)
    c1 = dt(1 - cfg.beta1 ** t)
    c2 = dt(1 - cfg.beta2 ** t)
    lr, eps = dt(cfg.learning_rate), dt(cfg.epsilon)
    for name, theta in params.weights.items():
        g = grads[name]
        m = params.adam_m.setdefault(name, np.zeros_like(theta))
        v = params.adam_v.setdefault(name, np.zeros_like(theta))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params
