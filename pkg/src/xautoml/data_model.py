"""Loading, validation, profiling, and process-structure inference for raw
sensor datasets.

Two file formats are supported: the whitespace-separated sensor format with a
separate label file (literal ``NaN`` marks a missing reading), and a generic
CSV with a header row and a ``label`` column (empty cell marks a missing
reading). Labels are -1 (normal) / +1 (failure) in both formats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, ParseError, StructuralError

VALID_LABELS = (-1, 1)


@dataclass(frozen=True)
class Dataset:
    """Immutable row-major sensor matrix with missing mask and binary labels.

    Arrays are marked read-only on construction so instances can be shared
    across workers.
    """

    values: np.ndarray          # (n_rows, n_cols) float64, 0.0 where missing
    missing_mask: np.ndarray    # (n_rows, n_cols) bool, True = missing
    labels: np.ndarray          # (n_rows,) int, each -1 or +1
    column_ids: tuple[str, ...]
    timestamps: tuple[str, ...] | None = None
    imputer_id: str | None = None   # set by imputation, None for raw data

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.missing_mask, dtype=bool)
        labels = np.asarray(self.labels, dtype=int)
        if values.ndim != 2:
            raise DataError("values must be a 2-D matrix")
        if mask.shape != values.shape:
            raise DataError("missing_mask shape differs from values shape")
        if labels.shape != (values.shape[0],):
            raise DataError("labels length differs from row count")
        if labels.size and not np.isin(labels, VALID_LABELS).all():
            bad = labels[~np.isin(labels, VALID_LABELS)][0]
            raise DataError(f"labels must be -1 or +1, found {bad}")
        if len(self.column_ids) != values.shape[1]:
            raise DataError("column_ids length differs from column count")
        if len(set(self.column_ids)) != len(self.column_ids):
            raise DataError("column_ids are not unique")
        if self.timestamps is not None and len(self.timestamps) != values.shape[0]:
            raise DataError("timestamps length differs from row count")
        for arr in (values, mask, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "column_ids", tuple(self.column_ids))
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", tuple(self.timestamps))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def with_imputed(self, values: np.ndarray, imputer_id: str,
                     keep_columns: np.ndarray | None = None) -> "Dataset":
        """Return a complete copy of this dataset with new values.

        ``keep_columns`` restricts to a boolean column selection (used when
        all-missing columns are dropped).
        """
        ids = self.column_ids
        if keep_columns is not None:
            ids = tuple(c for c, k in zip(ids, keep_columns) if k)
        return Dataset(
            values=np.array(values, dtype=float),
            missing_mask=np.zeros_like(np.asarray(values, dtype=float), dtype=bool),
            labels=np.array(self.labels),
            column_ids=ids,
            timestamps=self.timestamps,
            imputer_id=imputer_id,
        )


@dataclass(frozen=True)
class DataProfile:
    """Summary statistics of a Dataset."""

    n_rows: int
    n_cols: int
    n_missing_cells: int
    n_constant_cols: int
    n_low_variance_cols: int
    n_failures: int
    imbalance_ratio: float
    variance_threshold: float

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "n_missing_cells": self.n_missing_cells,
            "n_constant_cols": self.n_constant_cols,
            "n_low_variance_cols": self.n_low_variance_cols,
            "n_failures": self.n_failures,
            "imbalance_ratio": self.imbalance_ratio,
            "variance_threshold": self.variance_threshold,
        }


@dataclass(frozen=True)
class ProcessDefinition:
    """Column groups recovered from the periodic missing-value structure.

    ``unit_processes`` holds disjoint groups of column ids; ``cycles`` maps
    each group index to the largest number of columns in the group sharing one
    identical missing-mask signature.
    """

    unit_processes: tuple[tuple[str, ...], ...]
    cycles: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for group in self.unit_processes:
            for cid in group:
                if cid in seen:
                    raise DataError(f"column {cid!r} appears in two unit processes")
                seen.add(cid)

    def group_indices(self, column_ids) -> list[list[int]]:
        """Column positions of each group within the given id ordering."""
        pos = {c: i for i, c in enumerate(column_ids)}
        return [[pos[c] for c in group if c in pos] for group in self.unit_processes]


def load_secom(data_path, labels_path) -> Dataset:
    """Load the whitespace-separated sensor format plus its label file.

    The data file holds one sample per line, numeric tokens separated by
    whitespace, with the literal case-sensitive token ``NaN`` marking a
    missing reading. The label file holds ``<label> "<dd/mm/yyyy hh:mm:ss>"``
    per line. Row counts must match.
    """
    rows: list[list[float]] = []
    mask_rows: list[list[bool]] = []
    with _open_data(data_path) as fh:
        for r, line in enumerate(fh):
            tokens = line.split()
            if not tokens:
                continue
            vals, miss = [], []
            for c, tok in enumerate(tokens):
                if tok == "NaN":
                    vals.append(0.0)
                    miss.append(True)
                    continue
                try:
                    v = float(tok)
                except ValueError:
                    raise ParseError(
                        f"cannot parse token {tok!r} at row {r}, column {c}",
                        row=r, col=c) from None
                if not math.isfinite(v):
                    raise ParseError(
                        f"non-finite token {tok!r} at row {r}, column {c}"
                        " (missing readings must be spelled 'NaN')",
                        row=r, col=c)
                vals.append(v)
                miss.append(False)
            if rows and len(vals) != len(rows[0]):
                raise StructuralError(
                    f"row {r} has {len(vals)} columns, expected {len(rows[0])}")
            rows.append(vals)
            mask_rows.append(miss)
    if not rows:
        raise StructuralError(f"data file {data_path} contains no samples")

    labels, timestamps = _read_label_file(labels_path)
    if len(labels) != len(rows):
        raise StructuralError(
            f"label file has {len(labels)} rows, data file has {len(rows)}")

    n_cols = len(rows[0])
    column_ids = tuple(f"s{i:03d}" for i in range(n_cols))
    return Dataset(
        values=np.array(rows, dtype=float),
        missing_mask=np.array(mask_rows, dtype=bool),
        labels=np.array(labels, dtype=int),
        column_ids=column_ids,
        timestamps=tuple(timestamps),
    )


def _open_data(path, newline=None):
    try:
        return open(path, encoding="utf-8", newline=newline)
    except OSError as exc:
        raise DataError(f"cannot open data file {path!r}: {exc.strerror}") from None


def _read_label_file(path):
    labels, timestamps = [], []
    with _open_data(path) as fh:
        for r, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split(None, 1)
            try:
                lab = int(float(parts[0]))
            except ValueError:
                raise ParseError(f"cannot parse label {parts[0]!r} at row {r}",
                                 row=r, col=0) from None
            if lab not in VALID_LABELS:
                raise ParseError(f"label {lab} at row {r} is not -1 or +1",
                                 row=r, col=0)
            ts = parts[1].strip().strip('"') if len(parts) > 1 else ""
            labels.append(lab)
            timestamps.append(ts)
    return labels, timestamps


def load_csv(path) -> Dataset:
    """Load the generic CSV format: header row, a ``label`` column, optional
    ``timestamp`` column, empty field = missing."""
    with _open_data(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise StructuralError(f"CSV file {path} is empty") from None
        if "label" not in header:
            raise StructuralError("CSV header has no 'label' column")
        label_idx = header.index("label")
        ts_idx = header.index("timestamp") if "timestamp" in header else None
        feat_idx = [i for i in range(len(header))
                    if i != label_idx and i != ts_idx]

        rows, mask_rows, labels, timestamps = [], [], [], []
        for r, rec in enumerate(reader):
            if len(rec) != len(header):
                raise StructuralError(
                    f"row {r} has {len(rec)} fields, header has {len(header)}")
            try:
                lab = int(float(rec[label_idx]))
            except ValueError:
                raise ParseError(
                    f"cannot parse label {rec[label_idx]!r} at row {r}",
                    row=r, col=label_idx) from None
            if lab not in VALID_LABELS:
                raise ParseError(f"label {lab} at row {r} is not -1 or +1",
                                 row=r, col=label_idx)
            labels.append(lab)
            if ts_idx is not None:
                timestamps.append(rec[ts_idx])
            vals, miss = [], []
            for c in feat_idx:
                cell = rec[c].strip()
                if cell == "":
                    vals.append(0.0)
                    miss.append(True)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"cannot parse cell {cell!r} at row {r}, column {c}",
                        row=r, col=c) from None
                if not math.isfinite(v):
                    raise ParseError(
                        f"non-finite cell {cell!r} at row {r}, column {c}",
                        row=r, col=c)
                vals.append(v)
                miss.append(False)
            rows.append(vals)
            mask_rows.append(miss)
    if not rows:
        raise StructuralError(f"CSV file {path} contains no data rows")
    return Dataset(
        values=np.array(rows, dtype=float),
        missing_mask=np.array(mask_rows, dtype=bool),
        labels=np.array(labels, dtype=int),
        column_ids=tuple(header[i] for i in feat_idx),
        timestamps=tuple(timestamps) if ts_idx is not None else None,
    )


def profile(d: Dataset, variance_threshold: float = 1.0) -> DataProfile:
    """Profile a dataset: missing cells, constant and low-variance columns,
    failure count, imbalance ratio.

    Variance is the sample variance (ddof=1) over observed values only. A
    column whose observed values are all equal is constant; an all-missing
    column counts as constant (it carries no information). Constant columns
    are a subset of low-variance columns.
    """
    if variance_threshold <= 0:
        raise ValueError("variance_threshold must be > 0")
    vals = np.where(d.missing_mask, np.nan, d.values)
    n_constant = 0
    n_lowvar = 0
    for j in range(d.n_cols):
        col = vals[:, j]
        obs = col[~np.isnan(col)]
        if obs.size == 0 or np.all(obs == obs[0]):
            n_constant += 1
            n_lowvar += 1
            continue
        if np.var(obs, ddof=1) < variance_threshold:
            n_lowvar += 1
    n_failures = int(np.sum(d.labels == 1))
    n_normal = d.n_rows - n_failures
    minority = min(n_failures, n_normal)
    majority = max(n_failures, n_normal)
    ratio = math.inf if minority == 0 else majority / minority
    return DataProfile(
        n_rows=d.n_rows,
        n_cols=d.n_cols,
        n_missing_cells=int(d.missing_mask.sum()),
        n_constant_cols=n_constant,
        n_low_variance_cols=n_lowvar,
        n_failures=n_failures,
        imbalance_ratio=ratio,
        variance_threshold=variance_threshold,
    )


def infer_process_definition(d: Dataset, similarity_threshold: float = 0.9) -> ProcessDefinition:
    """Group columns whose missing-mask Jaccard similarity reaches the
    threshold (single-link agglomeration).

    Two columns with no missing values at all have identical (empty) masks
    and similarity 1. The cycle count of a group is the largest number of its
    columns sharing one identical non-empty mask signature (1 when the group
    has no missing values).
    """
    if not 0 < similarity_threshold <= 1:
        raise ValueError("similarity_threshold must be in (0, 1]")
    mask = d.missing_mask.astype(np.int64)
    counts = mask.sum(axis=0)                      # per-column missing count
    inter = mask.T @ mask                          # pairwise intersections
    union = counts[:, None] + counts[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        jac = np.where(union > 0, inter / np.maximum(union, 1), 1.0)

    parent = list(range(d.n_cols))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    ii, jj = np.nonzero(np.triu(jac >= similarity_threshold, k=1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(d.n_cols):
        groups.setdefault(find(i), []).append(i)
    ordered = [groups[r] for r in sorted(groups)]

    unit_processes = []
    cycles = {}
    for gidx, cols in enumerate(ordered):
        unit_processes.append(tuple(d.column_ids[i] for i in cols))
        sigs: dict[bytes, int] = {}
        for i in cols:
            if counts[i] == 0:
                continue
            key = d.missing_mask[:, i].tobytes()
            sigs[key] = sigs.get(key, 0) + 1
        cycles[gidx] = max(sigs.values()) if sigs else 1
    return ProcessDefinition(unit_processes=tuple(unit_processes), cycles=cycles)


def stratified_folds(labels, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """K stratified folds over a label vector; returns (train, test) index
    pairs. Per-class counts across test folds differ by at most one."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("fold count k must be >= 2")
    rng = np.random.default_rng(seed)
    test_members: list[list[int]] = [[] for _ in range(k)]
    for cls in sorted(set(labels.tolist())):
        idx = np.nonzero(labels == cls)[0]
        if idx.size < k:
            raise ValueError(
                f"class {cls} has only {idx.size} samples, needs >= {k} for {k} folds")
        idx = rng.permutation(idx)
        for pos, row in enumerate(idx.tolist()):
            test_members[pos % k].append(row)
    all_rows = np.arange(labels.size)
    folds = []
    for members in test_members:
        test = np.sort(np.array(members, dtype=int))
        train = np.setdiff1d(all_rows, test)
        folds.append((train, test))
    return folds


def stratified_split(d: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold split of a dataset's rows, deterministic in seed."""
    return stratified_folds(d.labels, k, seed)
