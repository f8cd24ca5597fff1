"""Configuration samplers: independent random draws and a Tree-structured
Parzen Estimator.

TPE splits the completed history at a quantile into good/bad sets, fits a
per-dimension kernel density to each (Gaussian kernels with Scott's-rule
bandwidth for numeric dimensions, Laplace-smoothed frequencies for
categorical ones), draws candidates from the good density, and returns the
candidate maximizing Σ log l(x) − log g(x). Log-uniform dimensions are
modelled in log space; integer dimensions as rounded continuous values.
All draws derive from ``default_rng([seed, trial_id])`` so suggestions are
reproducible record-for-record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import Dimension, SearchSpace

_BW_FLOOR_FRAC = 1e-2
_BW_SHRINK = 0.3    # kernel floor: width·this/√(model points)
_PDF_EPS = 1e-300


@dataclass(frozen=True)
class TpeParams:
    gamma_quantile: float = 0.25
    n_candidates: int = 24
    n_startup: int = 10


def _rng_for(seed: int, trial_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial_id])


def random_suggest(space: SearchSpace, seed: int, trial_id: int) -> dict:
    """Independent draw per dimension, deterministic in (seed, trial_id)."""
    rng = _rng_for(seed, trial_id)
    config = {}
    for d in space.dimensions:
        if d.kind == "categorical":
            config[d.name] = d.choices[int(rng.integers(len(d.choices)))]
        elif d.kind == "integer":
            config[d.name] = int(rng.integers(int(d.low), int(d.high) + 1))
        elif d.kind == "loguniform":
            config[d.name] = float(np.exp(rng.uniform(np.log(d.low), np.log(d.high))))
        else:
            config[d.name] = float(rng.uniform(d.low, d.high))
    return config


class _NumericKde:
    """1-D Gaussian kernel density over observed values (sampling scale),
    mixed with a uniform prior over the bounds.

    The prior carries weight 1/(n+1): with little evidence proposals still
    roam the whole range, and the exploration share fades as observations
    accumulate. Kernel bandwidth follows Scott's rule with a small
    width-relative floor.
    """

    def __init__(self, values: np.ndarray, lo: float, hi: float):
        self.values = values
        self.lo = lo
        self.hi = hi
        self.width = hi - lo
        if values.size >= 2:
            s = float(np.std(values, ddof=1))
        else:
            s = 0.0
        scott = s * values.size ** (-1.0 / 5.0) if s > 0 else 0.0
        local = _BW_SHRINK * self.width / math.sqrt(values.size)
        self.bw = max(scott, local, self.width * _BW_FLOOR_FRAC, 1e-12)
        self.prior_weight = 1.0 / (values.size + 1.0)

    def sample(self, rng: np.random.Generator) -> float:
        if rng.uniform() < self.prior_weight:
            return float(rng.uniform(self.lo, self.hi))
        center = self.values[int(rng.integers(self.values.size))]
        return float(np.clip(rng.normal(center, self.bw), self.lo, self.hi))

    def log_pdf(self, x: float) -> float:
        z = (x - self.values) / self.bw
        kde = np.mean(np.exp(-0.5 * z * z)) / (self.bw * math.sqrt(2 * math.pi))
        dens = (self.prior_weight / self.width
                + (1.0 - self.prior_weight) * float(kde))
        return math.log(max(dens, _PDF_EPS))


class _CategoricalModel:
    def __init__(self, values, choices):
        counts = np.array([sum(1 for v in values if v == c) for c in choices],
                          dtype=float)
        self.choices = tuple(choices)
        self.probs = (counts + 1.0) / (counts.sum() + len(choices))

    def sample(self, rng: np.random.Generator):
        return self.choices[int(rng.choice(len(self.choices), p=self.probs))]

    def log_pdf(self, x) -> float:
        return math.log(float(self.probs[self.choices.index(x)]))


def _to_scale(d: Dimension, v):
    return math.log(v) if d.kind == "loguniform" else float(v)


def _from_scale(d: Dimension, v: float):
    if d.kind == "loguniform":
        v = math.exp(v)
        return float(min(max(v, d.low), d.high))
    if d.kind == "integer":
        return int(min(max(int(round(v)), int(d.low)), int(d.high)))
    return float(min(max(v, d.low), d.high))


def _fit_models(space: SearchSpace, configs: list[dict]):
    models = {}
    for d in space.dimensions:
        vals = [c[d.name] for c in configs]
        if d.kind == "categorical":
            models[d.name] = _CategoricalModel(vals, d.choices)
        else:
            lo = _to_scale(d, d.low)
            hi = _to_scale(d, d.high)
            arr = np.array([_to_scale(d, v) for v in vals], dtype=float)
            models[d.name] = _NumericKde(arr, lo, hi)
    return models


def tpe_suggest(space: SearchSpace, history, params: TpeParams,
                seed: int, trial_id: int, return_details: bool = False):
    """Propose a configuration from the history of completed trials.

    ``history`` is a sequence of (config, metric) pairs (higher metric is
    better). Falls back to a random draw until ``n_startup`` observations
    exist. With ``return_details=True`` also returns the candidate list and
    their acquisition scores for external verification.
    """
    completed = [(c, m) for c, m in history if m is not None]
    if len(completed) < params.n_startup:
        config = random_suggest(space, seed, trial_id)
        return (config, [config], [0.0]) if return_details else config

    rng = _rng_for(seed, trial_id)
    ordered = sorted(enumerate(completed), key=lambda t: (-t[1][1], t[0]))
    n_good = max(1, int(math.ceil(params.gamma_quantile * len(completed))))
    good = [c for _, (c, _) in ordered[:n_good]]
    bad = [c for _, (c, _) in ordered[n_good:]] or good

    l_models = _fit_models(space, good)
    g_models = _fit_models(space, bad)

    candidates = []
    for _ in range(params.n_candidates):
        cand = {}
        for d in space.dimensions:
            raw = l_models[d.name].sample(rng)
            cand[d.name] = raw if d.kind == "categorical" else _from_scale(d, raw)
        candidates.append(cand)

    scores = []
    for cand in candidates:
        s = 0.0
        for d in space.dimensions:
            x = cand[d.name] if d.kind == "categorical" else _to_scale(d, cand[d.name])
            s += l_models[d.name].log_pdf(x) - g_models[d.name].log_pdf(x)
        scores.append(s)
    best = int(np.argmax(scores))
    if return_details:
        return candidates[best], candidates, scores
    return candidates[best]
