"""Run configuration: scenario choice, overrides, tolerances and seed."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from ..scenarios import Scenario, get_scenario

OVERRIDE_KEYS = ("N", "dt", "t_end", "t_transient", "sample_stride", "horizon", "m")


def load_schema(name: str) -> dict:
    text = resources.files("omegalab.harness").joinpath("schemas", name).read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    scenario: str | dict = "ex61-l0"
    overrides: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"
    spectral_csv: bool = False
    random_u0: bool = False

    def resolve(self) -> Scenario:
        if isinstance(self.scenario, dict):
            sc = Scenario.from_dict(self.scenario)
        else:
            sc = get_scenario(self.scenario)
        return sc.with_overrides(**{k: v for k, v in self.overrides.items() if k in OVERRIDE_KEYS})

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "overrides": dict(self.overrides),
                "tolerances": dict(self.tolerances), "seed": self.seed, "out": self.out,
                "spectral_csv": self.spectral_csv, "random_u0": self.random_u0}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        jsonschema.validate(d, load_schema("config.schema.json"))
        return cls(d.get("scenario", "ex61-l0"), dict(d.get("overrides", {})),
                   dict(d.get("tolerances", {})), int(d.get("seed", 0)), d.get("out", "out"),
                   bool(d.get("spectral_csv", False)), bool(d.get("random_u0", False)))

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
