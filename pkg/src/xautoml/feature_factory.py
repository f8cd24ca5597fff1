"""Derived-feature construction: expand raw sensor columns into a large
feature matrix via rolling statistics, sequential transforms, spectra,
integral transforms, cross-column correlation, and group-wise PCA, each
summarized by a set of aggregation operations.

Feature families
----------------
Per-sample *series* features (one value per dataset row):

* the raw column itself;
* series functions ``win5_mean/std/max/min`` (rolling, window 5,
  min_periods 1), ``pct``, ``diff``, ``logr`` (sequential, aligned at the
  later row with a flagged 0 sentinel at row 0), ``abs``, ``cdf`` (strict
  empirical P(X < x)), ``filter`` (centered moving average);
* ``pca`` projections of each column group onto components retaining at
  least ``pca_threshold`` of the group variance.

Dataset-level *scalar* features (stored once, broadcast on demand):

* every enabled operation (``mean std min max q1 q2 q3 mad skew kurt``)
  applied to the raw column, to each series-function output, and to the
  ``fft``/``fft_filter`` magnitude spectra;
* ``qcd`` = (Q3 − Q1)/(Q3 + Q1) per column;
* ``llt(s)`` = trapezoidal quadrature of x(t)·e^(−s·t) per column and per
  configured s, with row index scaled by ``llt_dt`` as t;
* ``corp`` = Pearson correlation of adjacent column pairs inside each
  column group.

Every output records provenance (source column(s), function, operation,
imputer, quality flags). Non-finite results are replaced by 0 and flagged so
downstream learners always see finite values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from .data_model import Dataset, ProcessDefinition
from .errors import ConfigError

SERIES_FUNCTIONS = ("win5_mean", "win5_std", "win5_max", "win5_min",
                    "pct", "diff", "abs", "cdf", "filter", "logr")
SPECTRUM_FUNCTIONS = ("fft", "fft_filter")
SCALAR_FUNCTIONS = ("qcd", "llt")
GROUP_FUNCTIONS = ("corp", "pca")
ALL_FUNCTIONS = SERIES_FUNCTIONS + SPECTRUM_FUNCTIONS + SCALAR_FUNCTIONS + GROUP_FUNCTIONS

OPERATIONS = ("mean", "std", "min", "max", "q1", "q2", "q3", "mad", "skew", "kurt")

# Minimum series length for each operation to be defined (sample std needs 2
# points, bias-corrected skew 3, bias-corrected excess kurtosis 4).
_MIN_LEN = {"std": 2, "skew": 3, "kurt": 4}


@dataclass(frozen=True)
class FeatureConfig:
    functions: tuple[str, ...] = ALL_FUNCTIONS
    operations: tuple[str, ...] = OPERATIONS
    include_raw_series: bool = True
    include_function_series: bool = True
    include_raw_summaries: bool = True
    window: int = 5
    min_periods: int = 1
    filter_width: int = 5
    llt_s_values: tuple[float, ...] = (0.5, 1.0, 2.0)
    llt_dt: float = 1.0
    pca_threshold: float = 0.9
    corp_full_matrix: bool = False

    def __post_init__(self):
        for f in self.functions:
            if f not in ALL_FUNCTIONS:
                raise ConfigError(f"unknown function {f!r}")
        for op in self.operations:
            if op not in OPERATIONS:
                raise ConfigError(f"unknown operation {op!r}")
        if len(set(self.functions)) != len(self.functions):
            raise ConfigError("duplicate function ids")
        if len(set(self.operations)) != len(self.operations):
            raise ConfigError("duplicate operation ids")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if not 1 <= self.min_periods <= self.window:
            raise ConfigError("min_periods must lie in [1, window]")
        if self.filter_width < 1:
            raise ConfigError("filter_width must be >= 1")
        if not 0 < self.pca_threshold <= 1:
            raise ConfigError("pca_threshold must lie in (0, 1]")
        if any(s <= 0 for s in self.llt_s_values):
            raise ConfigError("llt s-values must be > 0")
        if self.llt_dt <= 0:
            raise ConfigError("llt_dt must be > 0")

    def enabled(self, kind: tuple[str, ...]) -> tuple[str, ...]:
        return tuple(f for f in kind if f in self.functions)


@dataclass(frozen=True)
class Provenance:
    """Origin of one derived feature."""

    source: tuple[str, ...]
    function: str | None = None     # None = the raw column itself
    operation: str | None = None    # None = per-sample series feature
    imputer: str | None = None
    flags: tuple[str, ...] = ()

    def key(self) -> tuple:
        return (self.source, self.function, self.operation)

    def label(self) -> str:
        src = "+".join(self.source)
        fn = self.function or "raw"
        op = self.operation or "series"
        return f"{src}|{fn}|{op}"


class FeatureMatrix:
    """Derived features: a dense per-sample series block plus a scalar block
    of dataset-level summaries (broadcast to constant columns on access).

    Global feature indices run over the series block first, then scalars.
    """

    def __init__(self, series: np.ndarray, series_provenance: list[Provenance],
                 scalars: np.ndarray, scalar_provenance: list[Provenance],
                 groups: tuple[tuple[str, ...], ...] = ()):
        series = np.asarray(series, dtype=float)
        scalars = np.asarray(scalars, dtype=float)
        if series.ndim != 2:
            raise ValueError("series block must be 2-D")
        if series.shape[1] != len(series_provenance):
            raise ValueError("series provenance length mismatch")
        if scalars.shape != (len(scalar_provenance),):
            raise ValueError("scalar provenance length mismatch")
        keys = [p.key() for p in series_provenance] + [p.key() for p in scalar_provenance]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate feature provenance")
        if not np.isfinite(series).all() or not np.isfinite(scalars).all():
            raise ValueError("feature values must be finite")
        self.series = series
        self.series_provenance = list(series_provenance)
        self.scalars = scalars
        self.scalar_provenance = list(scalar_provenance)
        self.groups = groups

    # -- shape ----------------------------------------------------------
    @property
    def n_rows(self) -> int:
        return self.series.shape[0]

    @property
    def n_series(self) -> int:
        return self.series.shape[1]

    @property
    def n_features(self) -> int:
        return self.series.shape[1] + self.scalars.shape[0]

    @property
    def provenance(self) -> list[Provenance]:
        return self.series_provenance + self.scalar_provenance

    def is_scalar(self, j: int) -> bool:
        return j >= self.n_series

    def column(self, j: int) -> np.ndarray:
        if j < 0 or j >= self.n_features:
            raise IndexError(f"feature index {j} out of range")
        if j < self.n_series:
            return self.series[:, j]
        return np.full(self.n_rows, self.scalars[j - self.n_series])

    def take(self, indices) -> np.ndarray:
        """Materialize the given feature columns as a dense matrix."""
        indices = np.asarray(indices, dtype=int)
        out = np.empty((self.n_rows, indices.size), dtype=float)
        for pos, j in enumerate(indices.tolist()):
            out[:, pos] = self.column(j)
        return out

    def labels_for(self, indices) -> list[str]:
        prov = self.provenance
        return [prov[j].label() for j in np.asarray(indices, dtype=int).tolist()]

    # -- persistence ----------------------------------------------------
    def to_csv(self, path):
        """Full dense CSV (header = provenance labels). Intended for small
        matrices; the scalar block is broadcast."""
        prov = self.provenance
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(p.label() for p in prov) + "\n")
            for i in range(self.n_rows):
                row = [repr(float(self.series[i, k])) for k in range(self.n_series)]
                row += [repr(float(v)) for v in self.scalars]
                fh.write(",".join(row) + "\n")

    def save(self, series_path, meta_path):
        np.save(series_path, self.series)
        meta = {
            "scalars": [float(v) for v in self.scalars],
            "series_provenance": [_prov_dict(p) for p in self.series_provenance],
            "scalar_provenance": [_prov_dict(p) for p in self.scalar_provenance],
            "groups": [list(g) for g in self.groups],
        }
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, series_path, meta_path) -> "FeatureMatrix":
        series = np.load(series_path)
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        return cls(
            series=series,
            series_provenance=[_prov_from_dict(d) for d in meta["series_provenance"]],
            scalars=np.array(meta["scalars"], dtype=float),
            scalar_provenance=[_prov_from_dict(d) for d in meta["scalar_provenance"]],
            groups=tuple(tuple(g) for g in meta["groups"]),
        )

    @classmethod
    def from_array(cls, X: np.ndarray, column_ids=None,
                   imputer: str | None = None) -> "FeatureMatrix":
        """Wrap a plain numeric matrix as raw-series features."""
        X = np.asarray(X, dtype=float)
        if column_ids is None:
            column_ids = [f"f{j:03d}" for j in range(X.shape[1])]
        prov = [Provenance(source=(c,), imputer=imputer) for c in column_ids]
        return cls(X, prov, np.empty(0), [], groups=(tuple(column_ids),))


def _prov_dict(p: Provenance) -> dict:
    return {"source": list(p.source), "function": p.function,
            "operation": p.operation, "imputer": p.imputer, "flags": list(p.flags)}


def _prov_from_dict(d: dict) -> Provenance:
    return Provenance(source=tuple(d["source"]), function=d["function"],
                      operation=d["operation"], imputer=d["imputer"],
                      flags=tuple(d["flags"]))


# ---------------------------------------------------------------------------
# single-column functions
# ---------------------------------------------------------------------------

def apply_function(col, f: str, col2=None, *, config: FeatureConfig | None = None):
    """Apply one derivation function to a column (``corp`` takes two).

    Returns a 1-D array for series/spectrum functions, a float for ``qcd``
    and ``corp``, and a dict {s: float} for ``llt``. Sequential functions
    (``pct``, ``diff``, ``logr``) return length n−1. Division by zero and
    logs of non-positive values yield non-finite entries; callers that store
    results replace them with flagged sentinels.
    """
    cfg = config or FeatureConfig()
    x = np.asarray(col, dtype=float)
    if f in ("pct", "diff", "logr") and x.size < 2:
        raise ValueError(f"{f} needs at least 2 values")

    if f == "win5_mean":
        return _rolling(x, cfg).mean().to_numpy()
    if f == "win5_std":
        return _rolling(x, cfg).std(ddof=1).to_numpy()
    if f == "win5_max":
        return _rolling(x, cfg).max().to_numpy()
    if f == "win5_min":
        return _rolling(x, cfg).min().to_numpy()
    if f == "pct":
        with np.errstate(divide="ignore", invalid="ignore"):
            return (x[1:] - x[:-1]) / x[:-1] * 100.0
    if f == "diff":
        return np.diff(x)
    if f == "abs":
        return np.abs(x)
    if f == "cdf":
        order = np.sort(x)
        return np.searchsorted(order, x, side="left") / x.size
    if f == "filter":
        return (pd.Series(x)
                .rolling(cfg.filter_width, min_periods=1, center=True)
                .mean().to_numpy())
    if f == "logr":
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x[1:] / x[:-1])
    if f == "fft":
        return _half_spectrum(x - x.mean())
    if f == "fft_filter":
        smoothed = apply_function(x, "filter", config=cfg)
        return _half_spectrum(smoothed - smoothed.mean())
    if f == "qcd":
        q1, q3 = np.percentile(x, [25, 75])
        denom = q3 + q1
        return float((q3 - q1) / denom) if denom != 0 else math.inf
    if f == "llt":
        t = np.arange(x.size) * cfg.llt_dt
        return {s: float(np.trapezoid(x * np.exp(-s * t), dx=cfg.llt_dt))
                for s in cfg.llt_s_values}
    if f == "corp":
        if col2 is None:
            raise ValueError("corp needs two columns")
        y = np.asarray(col2, dtype=float)
        if x.std() == 0 or y.std() == 0:
            return 0.0
        return float(np.corrcoef(x, y)[0, 1])
    if f == "pca":
        raise ValueError("pca operates on column groups; use extract_all")
    raise ConfigError(f"unknown function {f!r}")


def _rolling(x, cfg: FeatureConfig):
    return pd.Series(x).rolling(cfg.window, min_periods=cfg.min_periods)


def _half_spectrum(centered: np.ndarray) -> np.ndarray:
    """First ⌈N/2⌉ magnitudes of the real FFT (real-input symmetry)."""
    n = centered.size
    return np.abs(np.fft.rfft(centered))[: (n + 1) // 2]


def apply_operation(col, op: str) -> float:
    """Aggregate a series into one scalar.

    Returns NaN when the series is shorter than the operation's definition
    requires (sample std, bias-corrected skew/kurtosis) or when the result
    is undefined (zero variance for skew/kurt); storing callers replace NaN
    with a flagged sentinel.
    """
    x = np.asarray(col, dtype=float)
    if x.size == 0:
        raise ValueError("cannot aggregate an empty series")
    if op not in OPERATIONS:
        raise ConfigError(f"unknown operation {op!r}")
    if x.size < _MIN_LEN.get(op, 1):
        return math.nan
    if op == "mean":
        return float(np.mean(x))
    if op == "std":
        return float(np.std(x, ddof=1))
    if op == "min":
        return float(np.min(x))
    if op == "max":
        return float(np.max(x))
    if op in ("q1", "q2", "q3"):
        q = {"q1": 25, "q2": 50, "q3": 75}[op]
        return float(np.percentile(x, q))
    if op == "mad":
        return float(np.mean(np.abs(x - np.mean(x))))
    if np.all(x == x[0]):
        return math.nan   # zero variance: higher moments undefined
    if op == "skew":
        return float(stats.skew(x, bias=False))
    return float(stats.kurtosis(x, fisher=True, bias=False))


# ---------------------------------------------------------------------------
# full extraction
# ---------------------------------------------------------------------------

def extract_all(d: Dataset, config: FeatureConfig | None = None,
                proc: ProcessDefinition | None = None) -> FeatureMatrix:
    """Expand every column of a complete dataset into the full derived
    feature set under ``config``.

    Sequential series (pct/diff/logr) are aligned at the later row, with a
    flagged sentinel 0 at row 0, so every series feature has one value per
    sample. When ``proc`` is None all columns form a single group for the
    ``corp`` and ``pca`` families. The output column count always equals
    ``expected_feature_count`` for the same inputs.
    """
    cfg = config or FeatureConfig()
    if d.missing_mask.any():
        raise ValueError("extract_all requires a complete (imputed) dataset")
    n = d.n_rows
    imput = d.imputer_id
    series_cols: list[np.ndarray] = []
    series_prov: list[Provenance] = []
    scalars: list[float] = []
    scalar_prov: list[Provenance] = []

    def add_scalar(value, prov: Provenance):
        if value is None or not math.isfinite(value):
            value, prov = 0.0, replace(prov, flags=prov.flags + ("nonfinite-replaced",))
        scalars.append(float(value))
        scalar_prov.append(prov)

    def add_series(arr, prov: Provenance):
        arr = np.asarray(arr, dtype=float)
        bad = ~np.isfinite(arr)
        if bad.any():
            arr = np.where(bad, 0.0, arr)
            prov = replace(prov, flags=prov.flags + ("nonfinite-replaced",))
        series_cols.append(arr)
        series_prov.append(prov)

    def summarize(arr, cid, fn):
        arr = np.asarray(arr, dtype=float)
        finite = arr[np.isfinite(arr)]
        for op in cfg.operations:
            prov = Provenance(source=(cid,), function=fn, operation=op, imputer=imput)
            if finite.size == 0:
                add_scalar(None, replace(prov, flags=("empty-input",)))
                continue
            if finite.size < arr.size:
                prov = replace(prov, flags=("nonfinite-dropped",))
            try:
                add_scalar(apply_operation(finite, op), prov)
            except ValueError:
                add_scalar(None, replace(prov, flags=prov.flags + ("insufficient-length",)))

    ser_fns = cfg.enabled(SERIES_FUNCTIONS)
    spec_fns = cfg.enabled(SPECTRUM_FUNCTIONS)

    for j, cid in enumerate(d.column_ids):
        col = d.values[:, j]

        if cfg.include_raw_series:
            add_series(col, Provenance(source=(cid,), imputer=imput))
        if cfg.include_raw_summaries:
            summarize(col, cid, None)

        for fn in ser_fns:
            out = apply_function(col, fn, config=cfg)
            if out.size == n - 1:       # sequential: align at the later row
                aligned = np.concatenate(([0.0], out))
                sflags = ("leading-sentinel",)
            else:
                aligned, sflags = out, ()
            if cfg.include_function_series:
                add_series(aligned, Provenance(source=(cid,), function=fn,
                                               imputer=imput, flags=sflags))
            summarize(out, cid, fn)

        for fn in spec_fns:
            summarize(apply_function(col, fn, config=cfg), cid, fn)

        if "qcd" in cfg.functions:
            add_scalar(apply_function(col, "qcd", config=cfg),
                       Provenance(source=(cid,), function="qcd", imputer=imput))
        if "llt" in cfg.functions:
            for s, val in apply_function(col, "llt", config=cfg).items():
                add_scalar(val, Provenance(source=(cid,), function=f"llt[s={s:g}]",
                                           imputer=imput))

    groups = _column_groups(d, proc)
    if "corp" in cfg.functions:
        for pair in _corp_pairs(groups, cfg):
            a, b = pair
            ia, ib = d.column_ids.index(a), d.column_ids.index(b)
            add_scalar(apply_function(d.values[:, ia], "corp", d.values[:, ib]),
                       Provenance(source=(a, b), function="corp", imputer=imput))
    if "pca" in cfg.functions:
        for gidx, group in enumerate(groups):
            idx = [d.column_ids.index(c) for c in group]
            proj = _group_pca(d.values[:, idx], cfg.pca_threshold)
            for k in range(proj.shape[1]):
                add_series(proj[:, k],
                           Provenance(source=(f"group{gidx}",),
                                      function=f"pca[{k}]", imputer=imput))

    series = (np.column_stack(series_cols) if series_cols
              else np.empty((n, 0)))
    return FeatureMatrix(series, series_prov,
                         np.array(scalars, dtype=float), scalar_prov,
                         groups=tuple(tuple(g) for g in groups))


def _column_groups(d: Dataset, proc: ProcessDefinition | None):
    if proc is None:
        return [list(d.column_ids)]
    return [list(g) for g in proc.unit_processes if g]


def _corp_pairs(groups, cfg: FeatureConfig):
    pairs = []
    for group in groups:
        if cfg.corp_full_matrix:
            pairs.extend((group[i], group[j])
                         for i in range(len(group)) for j in range(i + 1, len(group)))
        else:
            pairs.extend(zip(group[:-1], group[1:]))
    return pairs


def _group_pca(block: np.ndarray, threshold: float) -> np.ndarray:
    """Project a column block onto the leading principal components that
    together retain >= threshold of the variance. Sign fixed so each
    component's largest-magnitude loading is positive."""
    centered = block - block.mean(axis=0)
    if not centered.any():
        return np.empty((block.shape[0], 0))
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s ** 2
    ratio = np.cumsum(var) / var.sum()
    k = int(np.searchsorted(ratio, threshold - 1e-12) + 1)
    k = min(k, vt.shape[0])
    comps = vt[:k]
    signs = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    return centered @ (comps * signs[:, None]).T


def pca_rank(block: np.ndarray, threshold: float) -> int:
    """Number of components ``extract_all`` keeps for a column block."""
    return _group_pca(np.asarray(block, dtype=float), threshold).shape[1]


def expected_feature_count(d: Dataset, config: FeatureConfig | None = None,
                           proc: ProcessDefinition | None = None) -> int:
    """Closed-form feature count for ``extract_all`` on the same inputs.

    With C raw columns, a enabled series functions, b enabled spectrum
    functions, m enabled operations, u = number of llt s-values (0 when llt
    is disabled), indicator toggles r_s (raw series), f_s (function series),
    r_m (raw summaries), and q (qcd):

        count = C · (r_s + f_s·a + m·(r_m + a + b) + q + u)
                + corp pair count + Σ_g pca components of group g

    The corp pair count is Σ_g (|g|−1) for adjacent pairs, or Σ_g |g|·(|g|−1)/2
    in full-matrix mode. The pca term is data-dependent (variance threshold);
    everything else depends only on the configuration and column count.
    """
    cfg = config or FeatureConfig()
    C = d.n_cols
    a = len(cfg.enabled(SERIES_FUNCTIONS))
    b = len(cfg.enabled(SPECTRUM_FUNCTIONS))
    m = len(cfg.operations)
    u = len(cfg.llt_s_values) if "llt" in cfg.functions else 0
    q = 1 if "qcd" in cfg.functions else 0
    count = C * (int(cfg.include_raw_series) + int(cfg.include_function_series) * a
                 + m * (int(cfg.include_raw_summaries) + a + b) + q + u)
    groups = _column_groups(d, proc)
    if "corp" in cfg.functions:
        count += len(_corp_pairs(groups, cfg))
    if "pca" in cfg.functions:
        for group in groups:
            idx = [d.column_ids.index(c) for c in group]
            count += pca_rank(d.values[:, idx], cfg.pca_threshold)
    return count
