"""Scenario configuration and the bundled A-D presets.

Scenario switches:

====  ===========  ===========  ====  ===============
tag   preprocess   postprocess  LBP   wavelet levels
====  ===========  ===========  ====  ===============
A     no           no           no    0
B     yes          yes          no    0
C     yes          yes          yes   0
D     yes          yes          no    3
====  ===========  ===========  ====  ===============

Config files are TOML. Top-level keys mirror :class:`ScenarioConfig`; the
``[network]``, ``[train]``, ``[preprocess]`` and ``[eval]`` tables fill the
nested settings. ``LESIONPIPE_PROFILE`` (``paper`` or ``toy``) picks the
preset scale when no file is given.
"""

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .preprocess import ContrastParams, VignetteParams
from .unet import TrainConfig, UNetConfig

SCENARIOS = ("A", "B", "C", "D")
PROFILES = ("paper", "toy")
PROFILE_ENV = "LESIONPIPE_PROFILE"


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 3
    base_filters: int = 64
    conv_size: int = 3
    pool_size: int = 2


@dataclass(frozen=True)
class EvalConfig:
    tau: float = 0.5
    batch_size: int = 16
    batches: int = 72


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "A"
    image_size: int = 216
    border: int = 20
    seed: int = 0
    data_root: str = None
    out_dir: str = None
    jobs: int = 1
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    contrast: ContrastParams = field(default_factory=ContrastParams)
    vignette: VignetteParams = field(default_factory=VignetteParams)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.image_size < 1 or self.border < 0:
            raise ConfigError("image_size must be positive and border non-negative")
        if self.border > self.image_size:
            raise ConfigError("border is wider than the image")
        size = self.input_size
        div = self.network.pool_size ** (self.network.levels - 1)
        if size % div:
            raise ConfigError(f"network input {size} is not divisible by {div}")
        if self.wavelet_levels and size < 2 ** self.wavelet_levels:
            raise ConfigError("image too small for the wavelet pyramid")
        if not 0 < self.eval.tau < 1:
            raise ConfigError("eval.tau must lie in (0, 1)")

    @property
    def preprocess(self):
        return self.scenario != "A"

    @property
    def postprocess(self):
        return self.scenario != "A"

    @property
    def lbp(self):
        return self.scenario == "C"

    @property
    def wavelet_levels(self):
        return 3 if self.scenario == "D" else 0

    @property
    def in_channels(self):
        return {"A": 1, "B": 1, "C": 2, "D": 4}[self.scenario]

    @property
    def input_size(self):
        return self.image_size + 2 * self.border

    @property
    def unet_config(self):
        return UNetConfig(in_channels=self.in_channels, **dataclasses.asdict(self.network))

    def with_train_seed(self):
        """Copy whose training RNG seed follows the scenario seed."""
        return dataclasses.replace(self, train=dataclasses.replace(self.train, rng_seed=self.seed))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "network": NetworkConfig,
    "train": TrainConfig,
    "preprocess": None,  # split into contrast / vignette below
    "eval": EvalConfig,
}
_VIGNETTE_KEYS = {
    "vignette_iterations": "max_iterations",
    "vignette_margin": "base_margin",
    "vignette_step": "step",
    "vignette_threshold": "darkness_threshold",
}


def config_from_dict(data):
    data = dict(data)
    kwargs = {}
    try:
        for section, cls in _SECTIONS.items():
            table = data.pop(section, None)
            if table is None:
                continue
            if section == "preprocess":
                table = dict(table)
                if "clip_fraction" in table:
                    kwargs["contrast"] = ContrastParams(clip_fraction=table.pop("clip_fraction"))
                vig = {_VIGNETTE_KEYS[k]: table.pop(k) for k in list(table) if k in _VIGNETTE_KEYS}
                if table:
                    raise ConfigError(f"unknown [preprocess] keys: {sorted(table)}")
                kwargs["vignette"] = VignetteParams(**vig)
            else:
                kwargs[section] = cls(**table)
        return ScenarioConfig(**data, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path):
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def preset_path(profile, scenario):
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    return resources.files("lesionpipe") / "presets" / f"{profile}_{scenario}.toml"


def preset(scenario, profile=None):
    """Bundled preset for ``scenario``; the profile defaults to $LESIONPIPE_PROFILE or 'toy'."""
    profile = profile or os.environ.get(PROFILE_ENV, "toy")
    with resources.as_file(preset_path(profile, scenario)) as p:
        return load_config(p)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(v)


def config_to_toml(cfg):
    lines = []
    for key in ("scenario", "image_size", "border", "seed", "data_root", "out_dir", "jobs"):
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key} = {_toml_value(value)}")
    for section in ("network", "train", "eval"):
        lines.append(f"\n[{section}]")
        for key, value in dataclasses.asdict(getattr(cfg, section)).items():
            lines.append(f"{key} = {_toml_value(value)}")
    lines.append("\n[preprocess]")
    lines.append(f"clip_fraction = {_toml_value(cfg.contrast.clip_fraction)}")
    for key, attr in _VIGNETTE_KEYS.items():
        lines.append(f"{key} = {_toml_value(getattr(cfg.vignette, attr))}")
    return "\n".join(lines) + "\n"


def save_config(path, cfg):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(config_to_toml(cfg))
