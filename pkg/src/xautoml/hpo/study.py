"""Study execution: drive an objective through random search, TPE, Hyperband,
or BOHB, recording every evaluation in an ordered, reproducible trace.

Every (configuration, budget) evaluation — including re-evaluations of a
surviving configuration at a higher rung — is its own TrialRecord. A failed
objective call is recorded with status "failed" and a null metric; it still
consumes its budget but never enters the TPE history.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError
from .hyperband import HyperbandSchedule, hyperband_schedule
from .samplers import TpeParams, random_suggest, tpe_suggest
from .space import SearchSpace

OPTIMIZERS = ("random", "tpe", "hyperband", "bohb")


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    config: dict
    budget: float
    metric: float | None
    seed: int
    status: str             # "completed" | "failed"

    def to_json(self) -> str:
        return json.dumps({
            "trial_id": self.trial_id,
            "config": self.config,
            "budget": self.budget,
            "metric": self.metric,
            "seed": self.seed,
            "status": self.status,
        }, sort_keys=True)


@dataclass
class StudyTrace:
    optimizer: str
    seed: int
    records: list[TrialRecord] = field(default_factory=list)

    def completed(self) -> list[TrialRecord]:
        return [r for r in self.records if r.status == "completed"]

    def total_budget(self) -> float:
        return sum(r.budget for r in self.records)

    def best(self) -> TrialRecord:
        done = self.completed()
        if not done:
            raise ValueError("no completed trials")
        return max(done, key=lambda r: (r.metric, -r.trial_id))

    def best_so_far(self) -> list[tuple[int, float]]:
        """(trial_id, best metric after that trial) for every record; trials
        before the first completion carry -inf."""
        out = []
        best = -math.inf
        for r in self.records:
            if r.status == "completed" and r.metric > best:
                best = r.metric
            out.append((r.trial_id, best))
        return out

    def to_jsonl(self) -> str:
        return "\n".join(r.to_json() for r in self.records) + "\n"


def _trial_seed(seed: int, trial_id: int) -> int:
    return int(np.random.SeedSequence([seed, trial_id]).generate_state(1)[0])


def run_study(objective, space: SearchSpace, optimizer: str, seed: int, *,
              n_trials: int | None = None, R: float = 27.0, eta: int = 3,
              n_passes: int = 1, tpe_params: TpeParams | None = None) -> StudyTrace:
    """Optimize ``objective(config, budget, seed) -> metric`` (higher is
    better).

    ``random`` and ``tpe`` evaluate ``n_trials`` configurations at full
    budget R. ``hyperband`` and ``bohb`` execute ``n_passes`` passes over the
    (R, η) bracket schedule; BOHB draws proposals from TPE once the largest
    budget that has at least dim+1 completed trials exists, and from random
    otherwise.
    """
    if optimizer not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {optimizer!r}; choose from {OPTIMIZERS}")
    tp = tpe_params or TpeParams()
    trace = StudyTrace(optimizer=optimizer, seed=seed)

    def evaluate(config, budget):
        trial_id = len(trace.records)
        tseed = _trial_seed(seed, trial_id)
        try:
            metric = float(objective(config, budget, tseed))
            status = "completed"
        except Exception:
            metric, status = None, "failed"
        rec = TrialRecord(trial_id=trial_id, config=config, budget=float(budget),
                          metric=metric, seed=tseed, status=status)
        trace.records.append(rec)
        return rec

    if optimizer in ("random", "tpe"):
        if n_trials is None:
            raise ConfigError(f"{optimizer} needs n_trials")
        for t in range(n_trials):
            if optimizer == "random":
                config = random_suggest(space, seed, t)
            else:
                history = [(r.config, r.metric) for r in trace.completed()]
                config = tpe_suggest(space, history, tp, seed, t)
            evaluate(config, R)
        return trace

    schedule = hyperband_schedule(R, eta)
    use_tpe = optimizer == "bohb"
    # BOHB's model gate is dim+1 observations at the largest populated
    # budget; that replaces the sampler's own startup count.
    bohb_tp = replace(tp, n_startup=len(space) + 1)
    suggestion_counter = 0
    for _ in range(n_passes):
        for bracket in schedule.brackets:
            configs = []
            for _ in range(bracket.n_configs):
                config = None
                if use_tpe:
                    history = _largest_budget_history(trace, len(space))
                    if history is not None:
                        config = tpe_suggest(space, history, bohb_tp, seed,
                                             suggestion_counter)
                if config is None:
                    config = random_suggest(space, seed, suggestion_counter)
                suggestion_counter += 1
                configs.append(config)

            survivors = list(range(len(configs)))
            for rung_idx, (n_rung, budget) in enumerate(bracket.rungs):
                rung_records = []
                for ci in survivors[:n_rung]:
                    rec = evaluate(configs[ci], budget)
                    rung_records.append((ci, rec))
                keep = n_rung // eta
                if keep < 1 or rung_idx == len(bracket.rungs) - 1:
                    break
                rung_records.sort(
                    key=lambda t: (-(t[1].metric if t[1].metric is not None
                                     else -math.inf), t[1].trial_id))
                survivors = [ci for ci, _ in rung_records[:keep]]
    return trace


def _largest_budget_history(trace: StudyTrace, dim: int):
    """Completed (config, metric) pairs at the largest budget holding at
    least dim+1 of them; None when no budget qualifies yet."""
    by_budget: dict[float, list] = {}
    for r in trace.completed():
        by_budget.setdefault(r.budget, []).append((r.config, r.metric))
    for budget in sorted(by_budget, reverse=True):
        if len(by_budget[budget]) >= dim + 1:
            return by_budget[budget]
    return None


def first_hit_iteration(trace: StudyTrace, threshold: float) -> float:
    """1-based index of the first completed trial with metric >= threshold;
    +inf when the study never reaches it (censored)."""
    for i, r in enumerate(trace.records, start=1):
        if r.status == "completed" and r.metric >= threshold:
            return float(i)
    return math.inf


def hp_importance(trace: StudyTrace, n_bins: int = 10) -> dict[str, float]:
    """Marginal importance per dimension: bin each dimension's sampled
    values (quantile bins for numeric, one bin per category), take the
    variance of per-bin mean metrics (weighted by bin population), and
    normalize importances to sum 1. Needs >= 10 completed trials.
    """
    done = trace.completed()
    if len(done) < 10:
        raise ConfigError(
            f"hp_importance needs >= 10 completed trials, have {len(done)}")
    metrics = np.array([r.metric for r in done], dtype=float)
    names = list(done[0].config.keys())
    raw: dict[str, float] = {}
    for name in names:
        values = [r.config[name] for r in done]
        if any(isinstance(v, str) for v in values):
            cats = sorted(set(values))
            codes = np.array([cats.index(v) for v in values])
        else:
            arr = np.array(values, dtype=float)
            edges = np.unique(np.quantile(arr, np.linspace(0, 1, n_bins + 1)[1:-1]))
            codes = np.searchsorted(edges, arr, side="left")
        var = 0.0
        overall = metrics.mean()
        for b in np.unique(codes):
            sel = codes == b
            var += sel.sum() * (metrics[sel].mean() - overall) ** 2
        raw[name] = var / len(done)
    total = sum(raw.values())
    if total <= 0:
        return {name: 1.0 / len(names) for name in names}
    return {name: v / total for name, v in raw.items()}
