"""Experiment configuration: one YAML/JSON document, overridable from the command line."""

from __future__ import annotations

import copy
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .agent import AgentConfig
from .baselines import SELECTORS
from .env import EnvironmentConfig, GridEnvironment, build_environment
from .measurement import NoiseModel

GUIDE_KINDS = ("none", "random", "pretrained")
STREAM_NAMES = ("walk", "agent", "noise")


class ConfigError(ValueError):
    pass


def default_dict() -> dict:
    return {
        "environment": EnvironmentConfig().to_dict(),
        "environment_snapshot": None,
        "noise": {"sigma_toa": 1e-9, "nlos_bias_mean": 10e-9},
        "agent": AgentConfig().to_dict(),
        "guide": {"kind": "none", "seed": 0, "path": None},
        "selector": "juno",
        "seeds": [0],
        "streams": {name: None for name in STREAM_NAMES},
        "eval_episodes": 10,
        "output_dir": "runs",
    }


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def parse_override(item: str) -> tuple[list[str], object]:
    """``agent.alpha=0.3`` -> (["agent", "alpha"], 0.3); the value is parsed as YAML."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key.path=value")
    key, raw = item.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_override(d: dict, path: list[str], value) -> None:
    node = d
    for k in path[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config key {'.'.join(path)!r}")
        node = node[k]
    if path[-1] not in node:
        raise ConfigError(f"unknown config key {'.'.join(path)!r}")
    node[path[-1]] = value


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=default_dict)

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = d or {}
        if "config" in d and "seed" in d:  # a run manifest
            conf = copy.deepcopy(d["config"])
            conf["seeds"] = [d["seed"]]
            d = conf
        return cls(_merge(default_dict(), d))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(p.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: cannot parse: {exc}") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def with_overrides(self, items) -> "ExperimentConfig":
        d = copy.deepcopy(self.raw)
        for item in items:
            apply_override(d, *parse_override(item))
        return ExperimentConfig(d)

    def validate(self) -> None:
        r = self.raw
        try:
            self.environment_config()
            self.noise()
            self.agent()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if r["selector"] not in SELECTORS:
            raise ConfigError(f"selector must be one of {SELECTORS}, got {r['selector']!r}")
        g = r["guide"]
        if g["kind"] not in GUIDE_KINDS:
            raise ConfigError(f"guide.kind must be one of {GUIDE_KINDS}, got {g['kind']!r}")
        if g["kind"] == "pretrained" and not g["path"]:
            raise ConfigError("guide.kind 'pretrained' needs guide.path")
        seeds = r["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError(f"seeds must be a non-empty list of integers, got {seeds!r}")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be distinct")
        if not isinstance(r["eval_episodes"], int) or r["eval_episodes"] < 1:
            raise ConfigError("eval_episodes must be a positive integer")

    # -- typed views ----------------------------------------------------------------

    def environment_config(self) -> EnvironmentConfig:
        return EnvironmentConfig.from_dict(self.raw["environment"])

    def noise(self) -> NoiseModel:
        n = self.raw["noise"]
        return NoiseModel(float(n["sigma_toa"]), float(n["nlos_bias_mean"]))

    def agent(self) -> AgentConfig:
        return AgentConfig.from_dict(self.raw["agent"])

    @property
    def seeds(self) -> list[int]:
        return list(self.raw["seeds"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    def build_environment(self) -> GridEnvironment:
        snap = self.raw.get("environment_snapshot")
        if snap:
            return GridEnvironment.load(snap)
        return build_environment(self.environment_config())

    def stream_seeds(self, seed: int) -> dict[str, int | None]:
        return {k: self.raw["streams"].get(k) for k in STREAM_NAMES}

    def manifest(self, seed: int, **extra) -> dict:
        conf = copy.deepcopy(self.raw)
        conf["seeds"] = [seed]
        return {
            "config": conf,
            "seed": seed,
            "stream_derivation": "SeedSequence([stream_seed or seed, k]) for k, stream in "
                                 "enumerate(('walk', 'agent', 'noise'))",
            "versions": {"uwbsel": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            **extra,
        }
