"""Run configuration read from INI-style key/value files.

Sections map onto the component configs::

    [figure]    FigureConfig
    [sampling]  SamplingConfig
    [train]     TrainConfig
    [inference] InferenceConfig
    [network]   n_joints, input_size, fc_widths, towers
    [data]      count, start, format, train_count

Unknown sections or keys raise ConfigError naming the offender.
"""
from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field, fields, replace

from .inference import InferenceConfig
from .network import LayerSpec
from .sampling import SamplingConfig
from .synth import FigureConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    count: int = 100
    start: int = 0
    format: str = "png"

    def __post_init__(self):
        if self.format not in ("png", "ppm"):
            raise ValueError("format must be png or ppm")
        if self.count < 0:
            raise ValueError("count must be >= 0")


@dataclass(frozen=True)
class NetworkConfig:
    input_size: int = 32
    fc_widths: tuple = (128, 64)
    towers: tuple = ("part", "body")

    def layer_spec(self, n_joints, towers=None):
        return LayerSpec(n_joints=n_joints, input_size=self.input_size,
                         fc_widths=tuple(self.fc_widths), towers=tuple(towers or self.towers))


@dataclass(frozen=True)
class RunConfig:
    figure: FigureConfig = field(default_factory=FigureConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def with_seed(self, seed):
        return replace(
            self,
            figure=replace(self.figure, seed=seed),
            sampling=replace(self.sampling, seed=seed),
            train=replace(self.train, seed=seed),
        )


SECTIONS = {f.name: f for f in fields(RunConfig)}


def _parse_value(raw, current):
    if isinstance(current, str):
        return raw.strip().strip("\"'")
    try:
        value = ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError):
        if isinstance(current, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "on"):
                return True
            if low in ("false", "no", "off"):
                return False
        return raw.strip()
    if isinstance(current, tuple) and isinstance(value, list):
        value = tuple(value)
    if isinstance(current, float) and isinstance(value, int):
        value = float(value)
    return value


def apply_overrides(cfg, section, values):
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section: {section}")
    sub = getattr(cfg, section)
    known = {f.name for f in fields(sub)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {section}.{key}")
        updates[key] = _parse_value(raw, getattr(sub, key)) if isinstance(raw, str) else raw
    try:
        return replace(cfg, **{section: replace(sub, **updates)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in [{section}]: {exc}") from exc


def load_config(path=None, overrides=()):
    """Read a config file (optional) then apply ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            cfg = apply_overrides(cfg, section, dict(parser[section]))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item}")
        key, value = item.split("=", 1)
        section, name = key.split(".", 1)
        cfg = apply_overrides(cfg, section.strip(), {name.strip(): value})
    return cfg
