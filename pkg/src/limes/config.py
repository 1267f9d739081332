"""YAML experiment configuration.

A config file has up to three sections, all optional::

    schema_version: 1
    generator:   {num_classes, feature_dim, period, steps, examples_per_step,
                  class_stddev, class_means, prior_amplitudes, prior_phases, seed}
    experiment:  {methods, period, split_fraction, stride, realizations, seed,
                  ensemble_size, retain_batches, erm_epochs, floor,
                  history_capacity, oracle, checkpoints}
    optimizer:   {learning_rate, beta1, beta2, epsilon, minibatch_size,
                  epochs_per_step, reset_adam_each_step}

Missing keys take their defaults; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .experiment import ExperimentConfig
from .optim import TrainConfig
from .stream import GeneratorConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _fields(cls, exclude=()) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)} - set(exclude)


def _build(cls, section: str, values: dict, **extra):
    allowed = _fields(cls, exclude=extra)
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}: unknown key")
    try:
        return cls(**values, **extra)
    except (TypeError, ValueError) as exc:
        message = str(exc)
        field = next((k for k in sorted(allowed, key=len, reverse=True) if k in message), None)
        where = f"{section}.{field}" if field else section
        raise ConfigError(f"{where}: {message}") from None


def parse_config(data: dict | None) -> tuple[GeneratorConfig, ExperimentConfig]:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r}")
    unknown = sorted(set(data) - {"schema_version", "generator", "experiment", "optimizer"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    sections = {}
    for name in ("generator", "experiment", "optimizer"):
        value = data.get(name) or {}
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: must be a mapping")
        sections[name] = dict(value)

    optimizer = sections["optimizer"]
    optimizer.setdefault("learning_rate", ExperimentConfig().train.learning_rate)
    train = _build(TrainConfig, "optimizer", optimizer)
    generator = _build(GeneratorConfig, "generator", sections["generator"])
    experiment = sections["experiment"]
    if "methods" in experiment and isinstance(experiment["methods"], str):
        experiment["methods"] = [m.strip() for m in experiment["methods"].split(",")]
    if "methods" in experiment:
        experiment["methods"] = tuple(experiment["methods"])
    return generator, _build(ExperimentConfig, "experiment", experiment, train=train)


def load_config(path) -> tuple[GeneratorConfig, ExperimentConfig]:
    path = Path(path)
    text = path.read_text()  # OSError propagates: an I/O failure, not a config error
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(data)
