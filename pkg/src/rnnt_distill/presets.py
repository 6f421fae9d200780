"""Shipped run configurations, loadable by name or copied as plain JSON."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .train import ConfigError, RunConfig, load_run_config

PRESET_NAMES = ("teacher", "student-distill", "prune60", "prune90")


def preset_path(name: str) -> Path:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; available: {list(PRESET_NAMES)}")
    return Path(resources.files("rnnt_distill").joinpath(f"configs/{name}.json"))


def load_preset(name: str) -> RunConfig:
    return load_run_config(preset_path(name))
