"""Run configuration: one JSON document holding every knob of a pipeline run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .neural.training import TrainConfig
from .progression import Thresholds
from .simulator import SCENARIOS, NoiseModel, Scenario, ScenarioSpec

PIPELINES = ("Raw", "MAE+p", "MAE", "VAE+p", "VAE")
PIPELINE_VARIANT = {"MAE": "mae", "MAE+p": "mae+p", "VAE": "vae", "VAE+p": "vae+p"}
METHODS = ("PLR", "MD", "GRI")


@dataclass
class RunConfig:
    seed: int = 42
    n_eyes: int = 376
    n_exams: int = 20
    duration: float = 9.5
    baseline_age: float = 60.0
    age_slope: float = -0.1
    scenarios: list = field(default_factory=lambda: [s.value for s in SCENARIOS])
    factorial: bool = True
    noise: NoiseModel = field(default_factory=NoiseModel)
    train: TrainConfig = field(default_factory=TrainConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    out: str = "runs/default"

    def __post_init__(self):
        for s in self.scenarios:
            Scenario(s)
        if self.n_eyes <= 0:
            raise ValueError("n_eyes must be positive")

    def scenario_spec(self, scenario) -> ScenarioSpec:
        return ScenarioSpec(Scenario(scenario), self.n_eyes, self.n_exams, self.duration,
                            self.baseline_age, self.age_slope, self.factorial)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "noise" in d:
            d["noise"] = NoiseModel(**d["noise"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if "thresholds" in d:
            d["thresholds"] = Thresholds(**d["thresholds"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
