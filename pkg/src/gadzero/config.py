"""Run configuration: every hyperparameter and the seed, with file round-trip.

The config file is JSON mirroring the dataclass structure. Flag-level
overrides win over the file, which wins over defaults. One seed governs all
stages; per-stage streams are derived from it deterministically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError


@dataclass
class PretrainSettings:
    epochs: int = 200
    lr: float = 1e-3
    temperature: float = 0.5
    edge_drop: float = 0.2
    attr_mask: float = 0.3


@dataclass
class PromptSettings:
    epochs: int = 900
    lr: float = 1e-3


@dataclass
class UnsupSettings:
    percentile: float = 40.0
    sharpness: float = 10.0
    reg_weight: float = 1e-2
    negative_sample_cap: int = 256


@dataclass
class RunConfig:
    d_prime: int = 8
    d_h: int = 128
    num_prompt_tokens: int = 1
    nonlinearity: str = "relu"
    seed: int = 0
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)
    prompt: PromptSettings = field(default_factory=PromptSettings)
    unsup: UnsupSettings = field(default_factory=UnsupSettings)

    def stage_seeds(self) -> dict[str, int]:
        state = np.random.SeedSequence(self.seed).generate_state(4)
        return {
            "pretrain": int(state[0]),
            "augment": int(state[1]),
            "prompt": int(state[2]),
            "sampling": int(state[3]),
        }

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return cls(**_parse_section(cls, raw, "config"))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            raw = json.loads(open(path).read())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid config JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)


_SECTIONS = {"pretrain": PretrainSettings, "prompt": PromptSettings, "unsup": UnsupSettings}


def _parse_section(cls, raw: dict, where: str) -> dict:
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    parsed = {}
    for key, value in raw.items():
        section = _SECTIONS.get(key)
        if section is not None and cls is RunConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}.{key}: expected an object")
            parsed[key] = section(**_parse_section(section, value, f"{where}.{key}"))
        else:
            parsed[key] = value
    return parsed


# flag name -> (section, field); None section means a top-level field
OVERRIDE_MAP = {
    "d_prime": (None, "d_prime"),
    "d_h": (None, "d_h"),
    "num_prompt_tokens": (None, "num_prompt_tokens"),
    "nonlinearity": (None, "nonlinearity"),
    "seed": (None, "seed"),
    "pretrain_epochs": ("pretrain", "epochs"),
    "pretrain_lr": ("pretrain", "lr"),
    "temperature": ("pretrain", "temperature"),
    "edge_drop": ("pretrain", "edge_drop"),
    "attr_mask": ("pretrain", "attr_mask"),
    "prompt_epochs": ("prompt", "epochs"),
    "prompt_lr": ("prompt", "lr"),
    "percentile": ("unsup", "percentile"),
    "sharpness": ("unsup", "sharpness"),
    "reg_weight": ("unsup", "reg_weight"),
    "negative_sample_cap": ("unsup", "negative_sample_cap"),
}


def resolve_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    """defaults <- config file <- explicitly passed flags."""
    cfg = RunConfig.from_file(config_path) if config_path else RunConfig()
    for flag, value in (overrides or {}).items():
        if value is None:
            continue
        if flag not in OVERRIDE_MAP:
            raise ConfigError(f"unknown override {flag!r}")
        section, name = OVERRIDE_MAP[flag]
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, name, value)
    return cfg
