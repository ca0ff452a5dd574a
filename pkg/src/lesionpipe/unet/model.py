"""U-Net definition: configuration, parameter container, forward and backward passes.

Layout for ``levels = L``: the contracting path has L levels of two
(3x3 conv -> batch norm -> ReLU) blocks with ``base_filters * 2**level``
filters and 2x2 average pooling between levels. The expanding path upsamples
with a learned 2x2 stride-2 transposed convolution, concatenates the skip
activation of the matching level and applies two more conv blocks. A 1x1
convolution maps to the class logits and a per-pixel softmax gives
probabilities. Channel 1 is the lesion class.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, NumericError
from . import layers

BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 3
    base_filters: int = 64
    conv_size: int = 3
    pool_size: int = 2
    in_channels: int = 1
    out_classes: int = 2

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError("a U-Net needs at least 2 levels")
        if self.conv_size < 1 or self.conv_size % 2 == 0:
            raise ConfigError("conv_size must be odd")
        if self.pool_size != 2:
            raise ConfigError("only 2x2 pooling / upsampling is supported")
        if self.base_filters < 1 or self.in_channels < 1 or self.out_classes != 2:
            raise ConfigError("invalid filter / channel / class counts")

    def filters(self, level):
        return self.base_filters * 2 ** level

    @property
    def min_divisor(self):
        return self.pool_size ** (self.levels - 1)


def _conv_blocks(cfg):
    """Yield (name, in_ch, out_ch) for every conv->BN->ReLU block, in forward order."""
    prev = cfg.in_channels
    for lvl in range(cfg.levels):
        for j in (1, 2):
            yield f"enc{lvl}.conv{j}", prev, cfg.filters(lvl)
            prev = cfg.filters(lvl)
    for lvl in reversed(range(cfg.levels - 1)):
        yield f"dec{lvl}.conv1", 2 * cfg.filters(lvl), cfg.filters(lvl)
        yield f"dec{lvl}.conv2", cfg.filters(lvl), cfg.filters(lvl)


def parameter_shapes(cfg):
    """Ordered mapping of learnable parameter name -> shape."""
    k = cfg.conv_size
    shapes = {}
    for name, cin, cout in _conv_blocks(cfg):
        shapes[f"{name}.w"] = (cout, cin, k, k)
        shapes[f"{name}.b"] = (cout,)
        shapes[f"{name}.gamma"] = (cout,)
        shapes[f"{name}.beta"] = (cout,)
    for lvl in reversed(range(cfg.levels - 1)):
        shapes[f"up{lvl}.w"] = (cfg.filters(lvl), cfg.filters(lvl + 1), 2, 2)
        shapes[f"up{lvl}.b"] = (cfg.filters(lvl),)
    shapes["out.w"] = (cfg.out_classes, cfg.base_filters, 1, 1)
    shapes["out.b"] = (cfg.out_classes,)
    return shapes


@dataclass
class UNetParams:
    """Learnable weights, batch-norm running statistics and Adam state."""

    config: UNetConfig
    weights: dict
    running: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0

    @property
    def dtype(self):
        return next(iter(self.weights.values())).dtype

    def copy(self):
        return UNetParams(
            self.config,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.running.items()},
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.step,
        )


def init_params(cfg, seed=0, dtype=np.float32):
    """Kaiming-normal weights (std sqrt(2/fan_in)), zero biases, gamma=1, beta=0."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".w"):
            fan_in = shape[1] * (shape[2] * shape[3] if not name.startswith("up") else 1)
            weights[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)
        elif name.endswith(".gamma"):
            weights[name] = np.ones(shape, dtype=dtype)
        else:
            weights[name] = np.zeros(shape, dtype=dtype)
    running = {}
    for name, _, cout in _conv_blocks(cfg):
        running[f"{name}.running_mean"] = np.zeros(cout, dtype=dtype)
        running[f"{name}.running_var"] = np.ones(cout, dtype=dtype)
    return UNetParams(cfg, weights, running)


def _check_finite(x, layer):
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite activation after layer '{layer}'")


def _conv_block_forward(params, name, x, mode, update_stats, record):
    w = params.weights
    pad = params.config.conv_size // 2
    z, conv_cache = layers.conv2d_forward(x, w[f"{name}.w"], w[f"{name}.b"], pad)
    bn, bn_cache, (mu, var) = layers.batchnorm_forward(
        z, w[f"{name}.gamma"], w[f"{name}.beta"], mode,
        params.running[f"{name}.running_mean"], params.running[f"{name}.running_var"])
    if mode == "train" and update_stats:
        rm, rv = params.running[f"{name}.running_mean"], params.running[f"{name}.running_var"]
        rm *= BN_MOMENTUM
        rm += (1 - BN_MOMENTUM) * mu.astype(rm.dtype)
        rv *= BN_MOMENTUM
        rv += (1 - BN_MOMENTUM) * var.astype(rv.dtype)
    out, relu_cache = layers.relu_forward(bn)
    _check_finite(out, name)
    record[name] = (conv_cache, bn_cache, relu_cache)
    return out


def forward(params, x, mode="train", update_stats=True):
    """Run the network on a batch ``x`` of shape (N, C, H, W).

    Returns ``(probabilities, cache)``; probabilities are (N, 2, H, W). Train
    mode normalises with batch statistics and, unless ``update_stats`` is
    false, folds them into the running averages.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    cfg = params.config
    x = np.asarray(x)
    if x.ndim != 4:
        raise DataError(f"expected an (N, C, H, W) batch, got shape {x.shape}")
    if x.shape[1] != cfg.in_channels:
        raise DataError(f"network expects {cfg.in_channels} input channels, got {x.shape[1]}")
    d = cfg.min_divisor
    if x.shape[2] % d or x.shape[3] % d:
        raise DataError(f"spatial size {x.shape[2:]} is not divisible by {d}")
    h = x.astype(params.dtype, copy=False)
    w = params.weights
    record = {}
    skips = []
    for lvl in range(cfg.levels):
        h = _conv_block_forward(params, f"enc{lvl}.conv1", h, mode, update_stats, record)
        h = _conv_block_forward(params, f"enc{lvl}.conv2", h, mode, update_stats, record)
        if lvl < cfg.levels - 1:
            skips.append(h)
            h, record[f"pool{lvl}"] = layers.avgpool_forward(h, cfg.pool_size)
    for lvl in reversed(range(cfg.levels - 1)):
        h, record[f"up{lvl}"] = layers.conv_transpose2x2_forward(h, w[f"up{lvl}.w"], w[f"up{lvl}.b"])
        _check_finite(h, f"up{lvl}")
        h = np.concatenate([skips[lvl], h], axis=1)
        h = _conv_block_forward(params, f"dec{lvl}.conv1", h, mode, update_stats, record)
        h = _conv_block_forward(params, f"dec{lvl}.conv2", h, mode, update_stats, record)
    logits, record["out"] = layers.conv2d_forward(h, w["out.w"], w["out.b"], 0)
    _check_finite(logits, "out")
    probs = layers.softmax(logits)
    cache = {"mode": mode, "step": params.step, "layers": record, "probs": probs}
    return probs, cache


def loss_xent(probs, target):
    """Mean cross-entropy of (N, 2, H, W) probabilities against (N, H, W) 0/1 targets."""
    try:
        return layers.xent_loss(probs, target)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _conv_block_backward(params, name, dout, record, grads):
    conv_cache, bn_cache, relu_cache = record[name]
    d = layers.relu_backward(dout, relu_cache)
    d, grads[f"{name}.gamma"], grads[f"{name}.beta"] = layers.batchnorm_backward(d, bn_cache)
    d, grads[f"{name}.w"], grads[f"{name}.b"] = layers.conv2d_backward(d, conv_cache)
    return d


def backward(params, cache, target, border=0):
    """Gradients of ``loss_xent(crop(probs, border), target)`` for every parameter.

    ``cache`` must come from a train-mode forward with the current parameters.
    """
    if not cache or "layers" not in cache:
        raise ValueError("missing forward cache")
    if cache["mode"] != "train":
        raise ValueError("backward needs a cache from a train-mode forward pass")
    if cache["step"] != params.step:
        raise ValueError("stale forward cache: parameters were updated since the forward pass")
    cfg = params.config
    probs = cache["probs"]
    target = np.asarray(target)
    expected = (probs.shape[0], probs.shape[2] - 2 * border, probs.shape[3] - 2 * border)
    if target.shape != expected:
        raise DataError(f"target shape {target.shape} does not match cropped output {expected}")
    record = cache["layers"]
    grads = {}
    d = layers.xent_logits_grad(probs, target, border)
    d, grads["out.w"], grads["out.b"] = layers.conv2d_backward(d, record["out"])
    skip_grads = {}
    for lvl in range(cfg.levels - 1):
        d = _conv_block_backward(params, f"dec{lvl}.conv2", d, record, grads)
        d = _conv_block_backward(params, f"dec{lvl}.conv1", d, record, grads)
        n_skip = cfg.filters(lvl)
        skip_grads[lvl] = d[:, :n_skip]
        d, grads[f"up{lvl}.w"], grads[f"up{lvl}.b"] = layers.conv_transpose2x2_backward(
            d[:, n_skip:], record[f"up{lvl}"])
    for lvl in reversed(range(cfg.levels)):
        if lvl < cfg.levels - 1:
            d = layers.avgpool_backward(d, record[f"pool{lvl}"]) + skip_grads[lvl]
        d = _conv_block_backward(params, f"enc{lvl}.conv2", d, record, grads)
        d = _conv_block_backward(params, f"enc{lvl}.conv1", d, record, grads)
    return {name: grads[name].astype(params.dtype, copy=False) for name in params.weights}
