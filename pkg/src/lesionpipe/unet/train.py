"""Mini-batch training loop and inference helpers."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..evaluation import jaccard
from ..postprocess import postprocess
from . import layers
from .model import backward, forward, init_params, loss_xent
from .optim import adam_step


@dataclass
class History:
    rows: list = field(default_factory=list)        # (epoch, iteration, loss)
    epoch_jaccard: list = field(default_factory=list)

    @property
    def losses(self):
        return [r[2] for r in self.rows]

    def write_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        last_of_epoch = {}
        for i, (epoch, _, _) in enumerate(self.rows):
            last_of_epoch[epoch] = i
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "iteration", "loss", "train_jaccard"])
            for i, (epoch, it, loss) in enumerate(self.rows):
                tj = f"{self.epoch_jaccard[epoch]:.10f}" if last_of_epoch[epoch] == i else ""
                w.writerow([epoch, it, f"{loss:.10g}", tj])


def batch_jaccard(probs, targets, border=0, tau=0.5, select=False):
    """Per-image Jaccard of thresholded (optionally object-selected) predictions."""
    inner = layers.crop(probs, border)
    return [jaccard(postprocess(p, tau, select), t) for p, t in zip(inner, targets)]


def train(inputs, targets, unet_config, train_cfg, border=0, tau=0.5, select=False,
          params=None, progress=None):
    """Train on ``inputs`` (M, C, H, W) against border-cropped ``targets`` (M, H-2b, W-2b).

    Each iteration samples ``batch_size`` images uniformly (without
    replacement when enough are available) from a generator seeded with
    ``train_cfg.rng_seed``. The training Jaccard of an epoch is the mean over
    all images seen in that epoch's batches.
    """
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if len(inputs) == 0:
        raise DataError("cannot train on an empty dataset")
    if len(inputs) != len(targets):
        raise DataError("inputs and targets are not aligned")
    if params is None:
        params = init_params(unet_config, seed=train_cfg.rng_seed)
    rng = np.random.default_rng([train_cfg.rng_seed, 1])
    history = History()
    n = len(inputs)
    bs = train_cfg.batch_size
    for epoch in range(train_cfg.epochs):
        scores = []
        for it in range(train_cfg.iterations_per_epoch):
            pick = rng.choice(n, size=bs, replace=n < bs)
            x, y = inputs[pick], targets[pick]
            probs, cache = forward(params, x, mode="train")
            loss = loss_xent(layers.crop(probs, border), y)
            grads = backward(params, cache, y, border)
            adam_step(params, grads, train_cfg)
            history.rows.append((epoch, it, loss))
            scores.extend(batch_jaccard(probs, y, border, tau, select))
            if progress:
                progress(epoch, it, loss)
        history.epoch_jaccard.append(float(np.mean(scores)))
    return params, history


def predict(params, x):
    """Infer-mode softmax output (2, H, W) for a single (C, H, W) feature stack."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise DataError(f"expected a (C, H, W) feature stack, got shape {x.shape}")
    if x.shape[0] != params.config.in_channels:
        raise DataError(f"stack has {x.shape[0]} channels, model was trained on "
                        f"{params.config.in_channels}")
    probs, _ = forward(params, x[None], mode="infer")
    return probs[0]


def predict_many(params, stacks):
    return [predict(params, s) for s in stacks]
