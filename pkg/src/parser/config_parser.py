from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import yaml
from cryptography.hazmat.primitives import hashes
from pydantic import (BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt, PositiveFloat, PositiveInt,
                      ValidationError, field_validator, model_validator)

from src.learning.dqn import DqnDomainError, TrainConfig
from src.simulation.physical_sim import GroundTruthModel
from src.slo.slo_core import Relation, ServiceSpec, Slo, SloDomainError, cv_service_slos

AGENTS = ("lsa", "vpa", "lgbn", "none")


class ConfigError(ValueError):
    """Custom exception for scenario configuration errors."""

    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or [message]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SloSchema(_Strict):
    variable: Literal["pixel", "cores", "fps"]
    relation: str
    threshold: PositiveFloat
    weight: PositiveFloat

    @field_validator("relation")
    @classmethod
    def known_relation(cls, value: str) -> str:
        try:
            return Relation.parse(value).value
        except SloDomainError as e:
            raise ValueError(str(e)) from e

    def to_slo(self) -> Slo:
        return Slo(self.variable, Relation.parse(self.relation), self.threshold, self.weight)


class GroundTruthSchema(_Strict):
    beta0: float = 5.0
    beta_cores: float = 6.0
    beta_pixel: float = -0.01
    sigma: NonNegativeFloat = 1.0
    beta_pixel_sq: float = 0.0

    def to_model(self) -> GroundTruthModel:
        return GroundTruthModel(self.beta0, self.beta_cores, self.beta_pixel, self.sigma, self.beta_pixel_sq)


class InitialSchema(_Strict):
    pixel: PositiveInt
    cores: PositiveInt


class ServiceSchema(_Strict):
    id: str = Field(min_length=1)
    agent: Literal["lsa", "vpa", "lgbn", "none"] = "lsa"
    pixel_bounds: tuple[PositiveInt, PositiveInt] = (100, 2000)
    pixel_step: PositiveInt = 100
    cores_step: PositiveInt = 1
    initial: InitialSchema
    slos: list[SloSchema] = Field(min_length=1)
    ground_truth: GroundTruthSchema = GroundTruthSchema()

    @model_validator(mode="after")
    def consistent(self) -> "ServiceSchema":
        p_min, p_max = self.pixel_bounds
        if p_min > p_max:
            raise ValueError(f"pixel_bounds must be ascending, got {list(self.pixel_bounds)}")
        if not p_min <= self.initial.pixel <= p_max:
            raise ValueError(f"initial pixel {self.initial.pixel} outside pixel_bounds {list(self.pixel_bounds)}")
        variables = [q.variable for q in self.slos]
        if len(set(variables)) != len(variables):
            raise ValueError(f"duplicate SLO variables {variables}")
        return self

    def to_spec(self) -> ServiceSpec:
        return ServiceSpec(self.id, tuple(q.to_slo() for q in self.slos), self.pixel_bounds,
                           self.pixel_step, self.cores_step)


class DeviceSchema(_Strict):
    c_phy: PositiveInt
    tick_seconds: PositiveFloat = 0.5


class TimingSchema(_Strict):
    warmup_ticks: NonNegativeInt = 60
    decision_interval: PositiveInt = 10
    retrain_interval: PositiveInt = 100
    retrain_backoff: float = Field(default=1.0, ge=1.0)
    retrain_delay_ticks: NonNegativeInt = 0


class PhaseSchema(_Strict):
    t_pixel: PositiveFloat | None = None
    t_fps: PositiveFloat | None = None
    max_cores: PositiveInt | None = None
    duration: PositiveInt = 100


class GsoSchema(_Strict):
    enabled: bool = False
    min_gain: float = 0.05


class TrainSchema(_Strict):
    learning_rate: PositiveFloat = 1e-3
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: NonNegativeInt = 5000
    batch_size: PositiveInt = 64
    target_sync: PositiveInt = 250
    total_steps: NonNegativeInt = 20000
    hidden: tuple[PositiveInt, ...] = (64, 64)
    replay_capacity: PositiveInt = 10000
    clip_norm: PositiveFloat = 10.0
    seed: int = 0

    @model_validator(mode="after")
    def valid_train_config(self) -> "TrainSchema":
        try:
            self.to_train_config()
        except DqnDomainError as e:
            raise ValueError(str(e)) from e
        return self

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class OutputSchema(_Strict):
    dir: str = "results"


class ScenarioConfig(_Strict):
    """A complete, validated scenario: device, services, phase schedule and repetitions."""
    name: str
    device: DeviceSchema
    timing: TimingSchema = TimingSchema()
    services: list[ServiceSchema] = Field(min_length=1)
    phases: list[PhaseSchema] = Field(min_length=1)
    repetitions: PositiveInt = 1
    seeds: list[int] = Field(min_length=1)
    gso: GsoSchema = GsoSchema()
    train: TrainSchema = TrainSchema()
    output: OutputSchema = OutputSchema()

    @model_validator(mode="after")
    def consistent(self) -> "ScenarioConfig":
        if self.repetitions != len(self.seeds):
            raise ValueError(f"repetitions ({self.repetitions}) must equal the number of seeds ({len(self.seeds)})")
        ids = [s.id for s in self.services]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate service ids {ids}")
        if sum(s.initial.cores for s in self.services) > self.device.c_phy:
            raise ValueError(f"initial cores exceed c_phy={self.device.c_phy}")
        interval = self.timing.decision_interval
        if self.timing.warmup_ticks % interval:
            raise ValueError(f"warmup_ticks must be a multiple of decision_interval ({interval})")
        for index, phase in enumerate(self.phases):
            if phase.max_cores is not None and not len(self.services) <= phase.max_cores <= self.device.c_phy:
                raise ValueError(f"phases.{index}.max_cores must lie in [{len(self.services)}, c_phy={self.device.c_phy}]")
            if phase.duration % interval:
                raise ValueError(f"phases.{index}.duration must be a multiple of decision_interval ({interval})")
        return self

    @property
    def iterations_per_phase(self) -> list[int]:
        return [phase.duration // self.timing.decision_interval for phase in self.phases]

    def with_overrides(self, seed: int | None = None, agent: str | None = None,
                       gso_enabled: bool | None = None, out: str | None = None) -> "ScenarioConfig":
        update = {}
        if seed is not None:
            update["seeds"] = [seed + i for i in range(self.repetitions)]
        if agent is not None:
            if agent not in AGENTS:
                raise ConfigError(f"agent: unknown agent '{agent}'")
            update["services"] = [s.model_copy(update={"agent": agent}) for s in self.services]
        if gso_enabled is not None:
            update["gso"] = self.gso.model_copy(update={"enabled": gso_enabled})
        if out is not None:
            update["output"] = OutputSchema(dir=out)
        return self.model_copy(update=update)


def _format_errors(error: ValidationError) -> list[str]:
    messages = []
    for detail in error.errors():
        path = ".".join(str(part) for part in detail["loc"]) or "<root>"
        messages.append(f"{path}: {detail['msg']}")
    return messages


def parse_config(document: dict) -> ScenarioConfig:
    if not isinstance(document, dict):
        raise ConfigError("<root>: scenario file must contain a mapping")
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as e:
        messages = _format_errors(e)
        raise ConfigError("Invalid scenario configuration:\n  " + "\n  ".join(messages), messages) from e


def load_config(path: str | Path) -> ScenarioConfig:
    """
    Read and validate a YAML scenario file.

    Raises:
        ConfigError: The file is missing, malformed, or fails validation
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file '{path}' does not exist") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file '{path}' is not valid YAML: {e}") from e
    return parse_config(document)


def canonical_json(config: ScenarioConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def fingerprint(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of a config, as hex."""
    digest = hashes.Hash(hashes.SHA256())
    digest.update(canonical_json(config).encode("utf-8"))
    return digest.finalize().hex()


TABLE_II = [(800, 33, 9), (1000, 33, 7), (1700, 35, 8), (1900, 35, 2), (1800, 34, 3)]


def _slo_documents(slos: list[Slo]) -> list[dict]:
    return [{"variable": q.variable, "relation": q.relation.value, "threshold": q.threshold, "weight": q.weight}
            for q in slos]


def default_scenario1() -> ScenarioConfig:
    """One video processing service through the five-phase threshold schedule."""
    return parse_config({
        "name": "scenario1",
        "device": {"c_phy": 10},
        "services": [{"id": "cv", "agent": "lsa", "initial": {"pixel": 800, "cores": 4},
                      "slos": _slo_documents(cv_service_slos(800, 33))}],
        "phases": [{"t_pixel": p, "t_fps": f, "max_cores": c, "duration": 100} for p, f, c in TABLE_II],
        "repetitions": 5,
        "seeds": [1, 2, 3, 4, 5],
        "output": {"dir": "results/scenario1"},
    })


def default_scenario2() -> ScenarioConfig:
    """Alice and Bob contending for eight cores, with the global optimizer enabled."""
    def service(name: str, cores: int, t_fps: float) -> dict:
        return {"id": name, "agent": "lsa", "initial": {"pixel": 1300, "cores": cores},
                "slos": [{"variable": "pixel", "relation": ">", "threshold": 1300.0, "weight": 0.8},
                         {"variable": "fps", "relation": ">", "threshold": t_fps, "weight": 1.2}]}

    return parse_config({
        "name": "scenario2",
        "device": {"c_phy": 8},
        "services": [service("alice", 1, 30.0), service("bob", 7, 10.0)],
        "phases": [{"duration": 100}],
        "repetitions": 5,
        "seeds": [1, 2, 3, 4, 5],
        "gso": {"enabled": True, "min_gain": 0.05},
        "output": {"dir": "results/scenario2"},
    })
