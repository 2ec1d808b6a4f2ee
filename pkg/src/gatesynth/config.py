"""Run configuration: one JSON document driving the whole pipeline.

Every source of randomness has a named seed (data_seed, train_seed,
sample_seed) and every module precondition is checked up front so a bad
config fails before any compute starts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .data import Circuit
from .diffusion import SAMPLER_MODES, DenoiserConfig, linear_schedule
from .exceptions import ConfigError, GatesynthError
from .gbr import GbrConfig
from .simulator import ProcessNominals


@dataclass
class ScheduleConfig:
    steps: int = 1000
    beta_start: float = 0.001
    beta_end: float = 0.02


@dataclass
class BenchConfig:
    test_fraction: float = 0.2
    split_seed: int = 0


@dataclass
class RunConfig:
    circuit: str = "not"
    data_seed: int = 1
    train_seed: int = 2
    sample_seed: int = 3
    n_real: int = 500
    n_synthetic: int = 500
    sampler: str = "paper"
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    gbr: GbrConfig = field(default_factory=GbrConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    nominals: dict = field(default_factory=dict)

    def validate(self) -> None:
        try:
            Circuit.from_name(self.circuit)
            if self.n_real < 1 or self.n_synthetic < 0:
                raise ConfigError("n_real must be >= 1 and n_synthetic >= 0")
            if self.sampler not in SAMPLER_MODES:
                raise ConfigError(f"sampler must be one of {SAMPLER_MODES}")
            linear_schedule(self.schedule.steps, self.schedule.beta_start,
                            self.schedule.beta_end)
            self.denoiser.seed = self.train_seed
            self.denoiser.validate()
            if self.gbr.n_trees < 1 or self.gbr.max_depth < 1:
                raise ConfigError("gbr.n_trees and gbr.max_depth must be >= 1")
            if not 0.0 < self.gbr.shrinkage <= 1.0:
                raise ConfigError("gbr.shrinkage must be in (0, 1]")
            if self.gbr.min_samples_leaf < 1:
                raise ConfigError("gbr.min_samples_leaf must be >= 1")
            if not 0.0 < self.bench.test_fraction < 1.0:
                raise ConfigError("bench.test_fraction must be in (0, 1)")
            self.process_nominals()  # raises on nonpositive overrides
        except ConfigError:
            raise
        except GatesynthError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_circuit(self) -> Circuit:
        return Circuit.from_name(self.circuit)

    def process_nominals(self) -> ProcessNominals:
        return ProcessNominals().with_overrides(self.nominals)

    def make_schedule(self):
        return linear_schedule(self.schedule.steps, self.schedule.beta_start,
                               self.schedule.beta_end)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["denoiser"]["widths"] = (
            list(self.denoiser.widths) if self.denoiser.widths else None
        )
        return d


def load_config(path) -> RunConfig:
    """Read a RunConfig from a JSON file; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    cfg = RunConfig()
    sections = {
        "schedule": (cfg.schedule, ScheduleConfig),
        "denoiser": (cfg.denoiser, DenoiserConfig),
        "gbr": (cfg.gbr, GbrConfig),
        "bench": (cfg.bench, BenchConfig),
    }
    for key, value in raw.items():
        if key in sections:
            target, cls = sections[key]
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            for sub, sub_value in value.items():
                if sub not in cls.__dataclass_fields__:
                    raise ConfigError(f"unknown config key {key}.{sub}")
                if sub == "widths" and sub_value is not None:
                    sub_value = tuple(sub_value)
                setattr(target, sub, sub_value)
        elif key == "nominals":
            if not isinstance(value, dict):
                raise ConfigError("config section 'nominals' must be an object")
            cfg.nominals = value
        elif key in RunConfig.__dataclass_fields__:
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg
