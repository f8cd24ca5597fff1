"""Model-agnostic feature selection: score features with several dissimilar
ranking algorithms, search for per-ranker weights and a feature count that
maximize cross-validated performance of a fixed inner model, then refine the
winning subset by recursive feature elimination.

Feature ids are integer column indices into the FeatureMatrix. Every ranker
produces min-max-normalized scores in [0,1] and a top-m set M_a; a feature
absent from a ranker's top set contributes nothing to that ranker's term of
the total weighted score T_ws(f) = Σ_a W_a · Rv_f(a, f). All tie-breaks are
by ascending feature id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression

from .data_model import stratified_folds
from .errors import ConfigError, DataError
from .feature_factory import FeatureMatrix
from .hpo.samplers import TpeParams, tpe_suggest
from .hpo.space import Dimension, SearchSpace
from .learners.gbt import BoostedModel, GbtSpec, feature_importance, fit_gbt
from .metrics import compute_metrics

RANKERS = ("mutual_information", "pearson_abs", "tree_split_gain",
           "permutation_importance", "l1_linear_weight")


@dataclass(frozen=True)
class RankingResult:
    ranker: str
    scores: np.ndarray              # normalized Rv_f per feature id
    top_set: tuple[int, ...]        # M_a, ordered by (score desc, id asc)

    def entries(self) -> dict[int, float]:
        return {i: float(s) for i, s in enumerate(self.scores)}


@dataclass(frozen=True)
class CastConfig:
    rankers: tuple[str, ...] = RANKERS
    m: int = 200
    iterations: int = 30
    fs_range: tuple[int, int] = (5, 50)
    cv_folds: int = 5
    metric: str = "accuracy"
    select_k: int | None = None     # keep only K low-overlap rankers
    inner_spec: GbtSpec = field(default_factory=lambda: GbtSpec(n_rounds=100, max_depth=4))
    permutations: int = 3
    seed: int = 0
    tpe: TpeParams = field(default_factory=TpeParams)

    def __post_init__(self):
        for r in self.rankers:
            if r not in RANKERS:
                raise ConfigError(f"unknown ranker {r!r}")
        if len(self.rankers) < 2:
            raise ConfigError("need at least 2 rankers")
        if self.m < 1:
            raise ConfigError("top-set size m must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 1 <= self.fs_range[0] <= self.fs_range[1]:
            raise ConfigError("fs_range must satisfy 1 <= min <= max")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if self.metric not in ("accuracy", "f1"):
            raise ConfigError("metric must be 'accuracy' or 'f1'")
        if self.select_k is not None and not 2 <= self.select_k <= len(self.rankers):
            raise ConfigError("select_k must lie in [2, n_rankers]")


@dataclass(frozen=True)
class CastSolution:
    selected_features: tuple[int, ...]
    weights: dict[str, float]           # W_a, normalized to sum 1
    fs: int
    total_scores: dict[int, float]      # T_ws for the selected features
    search_trace: tuple[dict, ...]      # per-iteration {weights, fs, metric}
    rankers: tuple[str, ...]
    best_metric: float
    converged: bool
    weight_variance: dict[str, float]


@dataclass(frozen=True)
class RfeStep:
    remaining: tuple[int, ...]
    eliminated: int | None      # None on the terminal single-feature record
    cv_metric: float


@dataclass(frozen=True)
class RfeTrace:
    steps: tuple[RfeStep, ...]
    best_subset: tuple[int, ...]


# ---------------------------------------------------------------------------
# rankers
# ---------------------------------------------------------------------------

def _as_matrix(fm) -> tuple[np.ndarray, int]:
    """(series-block matrix, total feature count). Scalar features are
    constant by construction, so rankers give them score 0 without ever
    materializing them."""
    if isinstance(fm, FeatureMatrix):
        return fm.series, fm.n_features
    X = np.asarray(fm, dtype=float)
    return X, X.shape[1]


def _quantile_discretize(col: np.ndarray, n_bins: int = 10) -> np.ndarray:
    edges = np.unique(np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1]))
    return np.searchsorted(edges, col, side="left")


def _mutual_information(col: np.ndarray, y01: np.ndarray) -> float:
    x = _quantile_discretize(col)
    n = x.size
    mi = 0.0
    for xv in np.unique(x):
        px = np.sum(x == xv) / n
        for yv in (0, 1):
            joint = np.sum((x == xv) & (y01 == yv)) / n
            if joint > 0:
                py = np.sum(y01 == yv) / n
                mi += joint * np.log(joint / (px * py))
    return float(max(mi, 0.0))


def _standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def rank_features(fm, labels, ranker: str, seed: int, m: int = 200) -> RankingResult:
    """Score every feature under one ranking algorithm.

    Returns min-max-normalized scores and the top-m set (score desc, id asc).
    Constant features score 0 under every ranker.
    """
    if ranker not in RANKERS:
        raise ConfigError(f"unknown ranker {ranker!r}")
    X, n_features = _as_matrix(fm)
    labels = np.asarray(labels)
    y01 = (labels == 1).astype(float)
    if len(set(np.unique(labels)) - {-1, 1}) > 0:
        raise DataError("labels must be -1/+1")
    n_series = X.shape[1]
    raw = np.zeros(n_features)
    variable = [j for j in range(n_series) if X[:, j].std() > 0]

    if ranker == "mutual_information":
        for j in variable:
            raw[j] = _mutual_information(X[:, j], y01)
    elif ranker == "pearson_abs":
        for j in variable:
            c = np.corrcoef(X[:, j], y01)[0, 1]
            raw[j] = abs(c) if np.isfinite(c) else 0.0
    elif ranker == "tree_split_gain":
        model = fit_gbt(X, y01, GbtSpec(seed=seed))
        for f, g in feature_importance(model).items():
            raw[f] = g
    elif ranker == "permutation_importance":
        model = fit_gbt(X, y01, GbtSpec(seed=seed))
        raw[:n_series] = _permutation_drops(model, X, labels, seed, n_repeats=3)
    else:   # l1_linear_weight
        clf = LogisticRegression(penalty="l1", C=1.0, solver="liblinear",
                                 random_state=seed, max_iter=200)
        clf.fit(_standardize(X), y01)
        raw[:n_series] = np.abs(clf.coef_[0])

    # contract: a constant column scores 0 under every ranker, even when the
    # underlying model leaves numerical residue on it
    constant = np.setdiff1d(np.arange(n_series), np.array(variable, dtype=int))
    raw[constant] = 0.0

    lo, hi = raw.min(), raw.max()
    scores = (raw - lo) / (hi - lo) if hi > lo else np.zeros_like(raw)
    order = sorted(range(n_features), key=lambda j: (-scores[j], j))
    top = tuple(order[: min(m, n_features)])
    return RankingResult(ranker=ranker, scores=scores, top_set=top)


def _permutation_drops(model: BoostedModel, X, labels, seed: int,
                       n_repeats: int = 3) -> np.ndarray:
    """Mean accuracy drop when one column is shuffled, per column."""
    base = compute_metrics(labels, probabilities=model.predict_proba(X))["accuracy"]
    rng = np.random.default_rng(seed)
    drops = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        acc = 0.0
        for _ in range(n_repeats):
            perm = X.copy()
            perm[:, j] = perm[rng.permutation(X.shape[0]), j]
            acc += compute_metrics(labels,
                                   probabilities=model.predict_proba(perm))["accuracy"]
        drops[j] = base - acc / n_repeats
    return np.maximum(drops, 0.0)


# ---------------------------------------------------------------------------
# ranker ensemble
# ---------------------------------------------------------------------------

def overlap_rate(a: RankingResult, b: RankingResult) -> float:
    """|M_a ∩ M_b| / m for two equally sized top sets."""
    if len(a.top_set) != len(b.top_set):
        raise ConfigError("top sets must have equal size")
    if not a.top_set:
        raise ConfigError("top sets are empty")
    return len(set(a.top_set) & set(b.top_set)) / len(a.top_set)


def select_rankers(results: dict[str, RankingResult], k: int) -> tuple[str, ...]:
    """Greedy low-overlap subset: start from the lowest-overlap pair, then
    repeatedly add the ranker with the smallest mean overlap to the chosen
    set. Ties resolve in RANKERS enum order. Returns ids in enum order."""
    names = [r for r in RANKERS if r in results]
    if k > len(names):
        raise ConfigError(f"cannot select {k} of {len(names)} rankers")
    if k == len(names):
        return tuple(names)
    ov = {(a, b): overlap_rate(results[a], results[b])
          for i, a in enumerate(names) for b in names[i + 1:]}
    best_pair = min(((ov[(a, b)], names.index(a), names.index(b))
                     for (a, b) in ov), key=lambda t: t)
    chosen = [names[best_pair[1]], names[best_pair[2]]]

    def pair_overlap(x: str, y: str) -> float:
        if names.index(x) > names.index(y):
            x, y = y, x
        return ov[(x, y)]

    while len(chosen) < k:
        mean_ov = [(np.mean([pair_overlap(r, c) for c in chosen]), names.index(r))
                   for r in names if r not in chosen]
        chosen.append(names[min(mean_ov)[1]])
    return tuple(r for r in names if r in chosen)


def weighted_total_score(results: dict[str, RankingResult],
                         weights: dict[str, float]) -> dict[int, float]:
    """T_ws(f) = Σ_a W_a · Rv_f(a, f), with Rv_f = 0 outside M_a."""
    total: dict[int, float] = {}
    for name, w in weights.items():
        res = results[name]
        for f in res.top_set:
            total[f] = total.get(f, 0.0) + w * float(res.scores[f])
    return total


def _top_fs(total: dict[int, float], fs: int) -> tuple[int, ...]:
    order = sorted(total, key=lambda f: (-total[f], f))
    return tuple(sorted(order[:fs]))


def _cv_metric(X: np.ndarray, labels: np.ndarray, spec: GbtSpec, folds: int,
               seed: int, metric: str) -> float:
    vals = []
    for train, test in stratified_folds(labels, folds, seed):
        model = fit_gbt(X[train], (labels[train] == 1).astype(float), spec)
        proba = model.predict_proba(X[test])
        vals.append(compute_metrics(labels[test], probabilities=proba)[metric])
    return float(np.mean(vals))


def cast_search(fm, labels, cfg: CastConfig) -> CastSolution:
    """Search (per-ranker weights, feature count) by TPE against the
    cross-validated inner-model metric; returns the best selection found.

    The search trace records every iteration; the best-so-far metric is
    non-decreasing by construction.
    """
    labels = np.asarray(labels)
    X, n_features = _as_matrix(fm)
    results = {r: rank_features(fm, labels, r, cfg.seed, cfg.m)
               for r in cfg.rankers}
    active = (select_rankers(results, cfg.select_k)
              if cfg.select_k is not None else tuple(cfg.rankers))

    fs_lo = min(cfg.fs_range[0], n_features)
    fs_hi = min(cfg.fs_range[1], n_features)
    dims = [Dimension(f"w_{r}", "uniform", 0.0, 1.0) for r in active]
    dims.append(Dimension("fs", "integer", fs_lo, fs_hi))
    space = SearchSpace(tuple(dims))

    history: list[tuple[dict, float]] = []
    trace = []
    best = None
    for t in range(cfg.iterations):
        config = tpe_suggest(space, history, cfg.tpe, cfg.seed, t)
        raw_w = np.array([config[f"w_{r}"] for r in active])
        if raw_w.sum() == 0:
            raw_w = np.ones_like(raw_w)
        w = {r: float(v) for r, v in zip(active, raw_w / raw_w.sum())}
        fs = int(config["fs"])
        total = weighted_total_score(results, w)
        selected = _top_fs(total, fs) if total else tuple(range(min(fs, n_features)))
        metric = _cv_metric(_materialize(fm, X, selected), labels,
                            cfg.inner_spec, cfg.cv_folds, cfg.seed, cfg.metric)
        history.append((config, metric))
        trace.append({"weights": w, "fs": fs, "metric": metric})
        if best is None or metric > best[0]:
            best = (metric, w, fs, selected, total)

    metric, w, fs, selected, total = best
    wv = _trailing_weight_variance(_best_so_far_weights(trace), active)
    return CastSolution(
        selected_features=selected,
        weights=w,
        fs=fs,
        total_scores={f: float(total.get(f, 0.0)) for f in selected},
        search_trace=tuple(trace),
        rankers=active,
        best_metric=metric,
        converged=all(v < 1e-2 for v in wv.values()),
        weight_variance=wv,
    )


def _materialize(fm, X: np.ndarray, selected) -> np.ndarray:
    if isinstance(fm, FeatureMatrix):
        return fm.take(list(selected))
    return X[:, list(selected)]


def _best_so_far_weights(trace) -> list[dict[str, float]]:
    """Weight vector of the best iteration seen so far, per iteration."""
    path, best = [], None
    for tr in trace:
        if best is None or tr["metric"] > best[0]:
            best = (tr["metric"], tr["weights"])
        path.append(best[1])
    return path


def _trailing_weight_variance(weight_dicts, active, window: int = 5) -> dict[str, float]:
    """Variance of each best-so-far weight over the trailing window — the
    convergence diagnostic for the weight search."""
    out = {}
    for r in active:
        tail = np.array([wd[r] for wd in weight_dicts[-window:]])
        out[r] = float(np.var(tail)) if tail.size > 1 else 0.0
    return out


# ---------------------------------------------------------------------------
# recursive feature elimination
# ---------------------------------------------------------------------------

def rfe(fm, labels, feature_ids, inner_spec: GbtSpec | None = None,
        cv_folds: int = 5, seed: int = 0, metric: str = "accuracy",
        permutations: int = 3) -> RfeTrace:
    """Eliminate the least important feature (by permutation importance of a
    model fit on the remaining set) one at a time down to a single feature.

    Each step records the remaining set, the eliminated feature, and the
    remaining set's cross-validated metric; the terminal record covers the
    last surviving feature. The best subset is the highest-metric step,
    earliest (largest) subset on ties.
    """
    labels = np.asarray(labels)
    X, _ = _as_matrix(fm)
    spec = inner_spec or GbtSpec(n_rounds=100, max_depth=4)
    remaining = sorted(int(f) for f in feature_ids)
    if len(remaining) < 2:
        raise ConfigError("rfe needs at least 2 features")

    steps: list[RfeStep] = []
    while True:
        sub = _materialize(fm, X, remaining)
        acc = _cv_metric(sub, labels, spec, cv_folds, seed, metric)
        if len(remaining) == 1:
            steps.append(RfeStep(tuple(remaining), None, acc))
            break
        model = fit_gbt(sub, (labels == 1).astype(float), spec)
        drops = _permutation_drops(model, sub, labels, seed, n_repeats=permutations)
        weakest = int(np.argmin(drops))     # first minimum = smallest id
        steps.append(RfeStep(tuple(remaining), remaining[weakest], acc))
        remaining.pop(weakest)

    best = max(range(len(steps)), key=lambda i: (steps[i].cv_metric, -i))
    return RfeTrace(steps=tuple(steps), best_subset=steps[best].remaining)
