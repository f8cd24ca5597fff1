"""Hyperband resource scheduling: bracket/rung arithmetic for successive
halving with halving factor η and maximum budget R.

With s_max = ⌊log_η R⌋, bracket s ∈ {s_max, …, 0} starts
n = ⌈((s_max+1)/(s+1))·η^s⌉ configurations at budget r = R·η^(−s); each rung
keeps the top ⌊n/η⌋ performers and multiplies the budget by η.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class Bracket:
    s: int
    n_configs: int
    initial_budget: float
    rungs: tuple[tuple[int, float], ...]    # (n_configs, budget) per rung


@dataclass(frozen=True)
class HyperbandSchedule:
    R: float
    eta: int
    brackets: tuple[Bracket, ...]

    def total_budget(self) -> float:
        return sum(n * r for b in self.brackets for n, r in b.rungs)

    def total_trials(self) -> int:
        return sum(n for b in self.brackets for n, _ in b.rungs)


def hyperband_schedule(R: float, eta: int) -> HyperbandSchedule:
    if eta < 2:
        raise ConfigError("eta must be >= 2")
    if R < eta:
        raise ConfigError("R must be >= eta")
    s_max = int(math.floor(math.log(R) / math.log(eta) + 1e-12))
    brackets = []
    for s in range(s_max, -1, -1):
        n = int(math.ceil((s_max + 1) / (s + 1) * eta ** s))
        r = R * eta ** (-s)
        rungs = []
        n_i, r_i = n, r
        while n_i >= 1:
            rungs.append((n_i, r_i))
            n_i = n_i // eta
            r_i = r_i * eta
        brackets.append(Bracket(s=s, n_configs=n, initial_budget=r,
                                rungs=tuple(rungs)))
    return HyperbandSchedule(R=R, eta=eta, brackets=tuple(brackets))
