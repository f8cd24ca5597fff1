"""Declarative hyperparameter search spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError

KINDS = ("uniform", "loguniform", "integer", "categorical")


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dimension kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.choices:
                raise ConfigError(f"dimension {self.name!r} needs choices")
            if len(set(self.choices)) != len(self.choices):
                raise ConfigError(f"dimension {self.name!r} has duplicate choices")
        else:
            if self.low is None or self.high is None or not self.low < self.high:
                raise ConfigError(
                    f"dimension {self.name!r} needs low < high, got "
                    f"[{self.low}, {self.high}]")
            if self.kind == "loguniform" and self.low <= 0:
                raise ConfigError(f"log-uniform dimension {self.name!r} needs low > 0")
            if self.kind == "integer" and (
                    self.low != int(self.low) or self.high != int(self.high)):
                raise ConfigError(f"integer dimension {self.name!r} needs integer bounds")

    def contains(self, value) -> bool:
        if self.kind == "categorical":
            return value in self.choices
        if self.kind == "integer":
            return float(value) == int(value) and self.low <= value <= self.high
        return self.low <= value <= self.high


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple[Dimension, ...]

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ConfigError("dimension names must be unique")
        if not self.dimensions:
            raise ConfigError("search space needs at least one dimension")

    def __len__(self) -> int:
        return len(self.dimensions)

    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def validate(self, config: dict):
        if set(config) != set(self.names()):
            raise ConfigError(
                f"config keys {sorted(config)} do not match space {self.names()}")
        for d in self.dimensions:
            v = config[d.name]
            if not d.contains(v):
                raise ConfigError(f"value {v!r} outside dimension {d.name!r}")

    def span(self, d: Dimension) -> float:
        """Numeric width of a dimension in its sampling scale."""
        if d.kind == "categorical":
            return float(len(d.choices))
        if d.kind == "loguniform":
            return math.log(d.high) - math.log(d.low)
        return float(d.high - d.low)
