"""Automated ablation study: tune a roster of learner arms that differ only
in declared components (model family, loss) under one optimizer, one budget,
and one set of CV folds, and report each arm's best failure-class metric and
its delta against the first (baseline) arm.

Default roster: an additive-model baseline ("gam"), cross-entropy boosting
("gbt_ce"), and focal-loss boosting ("gbt_fl"). The focal arm adds (alpha,
gamma) to the search space; alpha's interval is anchored at the training
minority fraction so the class weight cannot undershoot the imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data_model import stratified_folds
from ..errors import ConfigError, StageError
from ..hpo.space import Dimension, SearchSpace
from ..hpo.study import StudyTrace, run_study
from ..learners.gam import GamModel, GamSpec, fit_gam
from ..learners.gbt import BoostedModel, GbtSpec, fit_gbt
from ..learners.losses import FocalLossParams, LossSpec
from ..metrics import compute_metrics

ARM_NAMES = ("gam", "gbt_ce", "gbt_fl")

_ALPHA_CAP = 0.75


@dataclass(frozen=True)
class AblationPlan:
    arms: tuple[str, ...] = ARM_NAMES
    optimizer: str = "tpe"
    n_trials: int = 30              # random/tpe budget per arm
    R: float = 100.0                # max boosting rounds / cycles (fidelity axis)
    eta: int = 3
    n_passes: int = 1
    cv_folds: int = 3
    metric: str = "f1"
    seed: int = 0
    rounds_range: tuple[int, int] = (30, 120)

    def __post_init__(self):
        if len(self.arms) < 2:
            raise ConfigError("ablation needs at least 2 arms")
        # duplicates are allowed: running an arm against itself is the
        # natural sanity check that identical components yield delta == 0
        for a in self.arms:
            if a not in ARM_NAMES:
                raise ConfigError(f"unknown arm {a!r}; choose from {ARM_NAMES}")
        if not 1 <= self.rounds_range[0] <= self.rounds_range[1]:
            raise ConfigError("rounds_range must satisfy 1 <= lo <= hi")


@dataclass(frozen=True)
class ArmResult:
    name: str
    best_metric: float
    best_config: dict
    trace: StudyTrace
    delta_vs_baseline: float


def _multi_fidelity(optimizer: str) -> bool:
    return optimizer in ("hyperband", "bohb")


def arm_space(name: str, minority_frac: float, rounds_range: tuple[int, int],
              include_rounds: bool) -> SearchSpace:
    """Search space for one arm. The boosting-rounds (or cycle-count)
    dimension is omitted for multi-fidelity optimizers, where the budget
    axis supplies it."""
    dims: list[Dimension] = []
    if name == "gam":
        dims.append(Dimension("learning_rate", "loguniform", 0.05, 0.6))
        dims.append(Dimension("n_bins", "integer", 8, 32))
        dims.append(Dimension("reg_lambda", "loguniform", 0.1, 10.0))
        if include_rounds:
            dims.append(Dimension("n_cycles", "integer", 4, 20))
    else:
        dims.append(Dimension("learning_rate", "loguniform", 0.02, 0.3))
        dims.append(Dimension("max_depth", "integer", 2, 6))
        dims.append(Dimension("min_child_weight", "loguniform", 1e-3, 10.0))
        dims.append(Dimension("subsample", "uniform", 0.6, 1.0))
        if include_rounds:
            dims.append(Dimension("n_rounds", "integer",
                                  rounds_range[0], rounds_range[1]))
        if name == "gbt_fl":
            alpha_lo = min(max(minority_frac, 1e-3), _ALPHA_CAP - 1e-3)
            dims.append(Dimension("alpha", "uniform", alpha_lo, _ALPHA_CAP))
            dims.append(Dimension("gamma", "uniform", 0.0, 5.0))
    return SearchSpace(tuple(dims))


def build_spec(name: str, config: dict, n_rounds: int | None = None):
    """Learner spec from a trial config; ``n_rounds`` overrides the budgeted
    dimension (multi-fidelity trials and full-budget refits)."""
    if name == "gam":
        return GamSpec(
            n_cycles=int(n_rounds if n_rounds is not None else config["n_cycles"]),
            learning_rate=float(config["learning_rate"]),
            n_bins=int(config["n_bins"]),
            reg_lambda=float(config["reg_lambda"]),
        )
    if name == "gbt_fl":
        loss = LossSpec(name="focal", focal=FocalLossParams(
            alpha=float(config["alpha"]), gamma=float(config["gamma"])))
    else:
        loss = LossSpec(name="cross_entropy")
    return GbtSpec(
        loss=loss,
        n_rounds=int(n_rounds if n_rounds is not None else config["n_rounds"]),
        max_depth=int(config["max_depth"]),
        learning_rate=float(config["learning_rate"]),
        min_child_weight=float(config["min_child_weight"]),
        subsample=float(config["subsample"]),
        seed=0,
    )


def fit_arm(name: str, config: dict, X: np.ndarray, labels: np.ndarray,
            n_rounds: int | None = None):
    spec = build_spec(name, config, n_rounds)
    y01 = (np.asarray(labels) == 1).astype(float)
    if isinstance(spec, GamSpec):
        return fit_gam(X, y01, spec)
    return fit_gbt(X, y01, spec)


def make_arm_objective(name: str, X: np.ndarray, labels: np.ndarray,
                       folds, metric: str, fidelity: bool):
    """CV objective for one arm; all arms of a plan share the same folds."""
    labels = np.asarray(labels)

    def objective(config, budget, _trial_seed):
        rounds = max(1, int(round(budget))) if fidelity else None
        vals = []
        for train, test in folds:
            model = fit_arm(name, config, X[train], labels[train], rounds)
            proba = model.predict_proba(X[test])
            vals.append(compute_metrics(labels[test], probabilities=proba)[metric])
        return float(np.mean(vals))

    return objective


def run_ablation(plan: AblationPlan, X, labels) -> tuple[ArmResult, ...]:
    """Tune every arm under identical optimizer/budget/folds; results come
    back in plan order with deltas against the first arm."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if X.shape[0] != labels.shape[0]:
        raise ConfigError("X and labels must align")
    y01 = labels == 1
    if y01.all() or not y01.any():
        raise StageError("classify", "need both classes to run the ablation")
    minority_frac = float(min(y01.mean(), 1.0 - y01.mean()))
    folds = stratified_folds(labels, plan.cv_folds, plan.seed)
    fidelity = _multi_fidelity(plan.optimizer)

    results: list[ArmResult] = []
    baseline: float | None = None
    for name in plan.arms:
        space = arm_space(name, minority_frac, plan.rounds_range,
                          include_rounds=not fidelity)
        objective = make_arm_objective(name, X, labels, folds, plan.metric,
                                       fidelity)
        trace = run_study(objective, space, plan.optimizer, plan.seed,
                          n_trials=plan.n_trials, R=plan.R, eta=plan.eta,
                          n_passes=plan.n_passes)
        if not trace.completed():
            raise StageError("classify", f"arm {name!r}: every trial failed")
        best = trace.best()
        if baseline is None:
            baseline = best.metric
        results.append(ArmResult(
            name=name,
            best_metric=float(best.metric),
            best_config=dict(best.config),
            trace=trace,
            delta_vs_baseline=float(best.metric - baseline),
        ))
    return tuple(results)
