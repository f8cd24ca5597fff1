"""Classical imputers turning incomplete sensor columns into complete ones.

Four methods: column mean, column median, most frequent value (ties broken by
the smallest value), and k-nearest-neighbour imputation whose distance uses
only dimensions observed in both rows, scaled by the fraction of shared
dimensions. Columns with no observed value at all cannot be imputed and are
dropped with a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.impute import KNNImputer

from .data_model import Dataset
from .errors import ConfigError

METHODS = ("knn", "mean", "median", "most_frequent")


@dataclass(frozen=True)
class ImputerSpec:
    method: str = "mean"
    k_neighbors: int = 5    # knn only

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(
                f"unknown imputation method {self.method!r}; choose from {METHODS}")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")

    @property
    def imputer_id(self) -> str:
        if self.method == "knn":
            return f"knn{self.k_neighbors}"
        return self.method


@dataclass(frozen=True)
class ImputationResult:
    dataset: Dataset
    dropped_column_ids: tuple[str, ...] = ()
    warnings: tuple[str, ...] = field(default_factory=tuple)


def _most_frequent(obs: np.ndarray) -> float:
    values, counts = np.unique(obs, return_counts=True)
    # np.unique returns sorted values, so the first argmax is the smallest
    # value among the tied most-frequent ones.
    return float(values[np.argmax(counts)])


def fit_impute(d: Dataset, spec: ImputerSpec) -> ImputationResult:
    """Impute all missing cells of ``d``; returns a complete dataset.

    Observed cells are never modified. Columns that are entirely missing are
    dropped and reported. A complete input passes through unchanged apart
    from the imputer id stamp.
    """
    mask = d.missing_mask
    keep = ~mask.all(axis=0)
    warnings = []
    dropped = tuple(c for c, k in zip(d.column_ids, keep) if not k)
    for c in dropped:
        warnings.append(f"column {c!r} dropped: no observed values")

    values = np.where(mask, np.nan, d.values)[:, keep]
    if not np.isnan(values).any():
        out = values
    elif spec.method == "knn":
        imputer = KNNImputer(n_neighbors=spec.k_neighbors, weights="uniform")
        out = imputer.fit_transform(values)
        if out.shape[1] != values.shape[1]:  # pragma: no cover - keep guard
            raise AssertionError("KNNImputer dropped a column unexpectedly")
    else:
        out = values.copy()
        for j in range(values.shape[1]):
            col = values[:, j]
            nan = np.isnan(col)
            if not nan.any():
                continue
            obs = col[~nan]
            if spec.method == "mean":
                fill = float(np.mean(obs))
            elif spec.method == "median":
                fill = float(np.median(obs))
            else:
                fill = _most_frequent(obs)
            out[nan, j] = fill

    return ImputationResult(
        dataset=d.with_imputed(out, spec.imputer_id, keep_columns=keep),
        dropped_column_ids=dropped,
        warnings=tuple(warnings),
    )
