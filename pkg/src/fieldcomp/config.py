"""Tool configuration: one JSON document with a section per concern."""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .ann import Hyperparams
from .errors import ConfigError, InvalidConfig, IoError
from .metrics import DEFAULT_HISTORY, BenchmarkConfig
from .simulator import ScenarioConfig


@dataclass
class GenerateConfig:
    points: list = field(default_factory=lambda: list(DEFAULT_HISTORY))

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(cls, data, "generate")
        cfg = cls(**data)
        if not cfg.points or min(cfg.points) < 3:
            raise ConfigError("generate.points must list runs of >= 3 points")
        return cfg


@dataclass
class TrainConfig:
    pca_components: int = 1
    ann: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(cls, data, "train")
        cfg = cls(**data)
        if cfg.pca_components not in (1, 2, 3):
            raise ConfigError("train.pca_components must be 1, 2 or 3")
        Hyperparams.from_dict(cfg.ann)
        return cfg


def _reject_unknown(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    unknown = sorted(set(data) - set(cls.__dataclass_fields__))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")


@dataclass
class ToolConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    seed: int = 0
    out: str = "out"

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(cls, data, "<root>")
        try:
            return cls(
                scenario=ScenarioConfig.from_dict(data.get("scenario", {})),
                generate=GenerateConfig.from_dict(data.get("generate", {})),
                train=TrainConfig.from_dict(data.get("train", {})),
                benchmark=BenchmarkConfig.from_dict(data.get("benchmark", {})),
                seed=int(data.get("seed", 0)),
                out=str(data.get("out", "out")),
            )
        except InvalidConfig as exc:
            raise ConfigError(str(exc)) from exc
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "generate": {"points": list(self.generate.points)},
            "train": {"pca_components": self.train.pca_components, "ann": dict(self.train.ann)},
            "benchmark": self.benchmark.to_dict(),
            "seed": self.seed,
            "out": self.out,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path):
    if path is None:
        return ToolConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return ToolConfig.from_dict(data)
