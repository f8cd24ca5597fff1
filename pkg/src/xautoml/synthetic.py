"""Deterministic synthetic data: imbalanced classification generators, a
small bundled dataset for end-to-end runs, a profile-exact stand-in for the
semiconductor benchmark, and a multi-fidelity toy objective for optimizer
comparisons.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .data_model import Dataset


def make_imbalanced(n_rows: int = 2000, n_cols: int = 20, n_informative: int = 5,
                    pos_frac: float = 1 / 15, seed: int = 0,
                    signal: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Imbalanced binary data with labels in {-1, +1}.

    The first ``n_informative`` columns carry signal through a logistic
    model; the rest are pure noise. The intercept is solved so the expected
    positive fraction matches ``pos_frac``; realized labels are Bernoulli
    draws, so counts vary around n_rows * pos_frac.
    """
    if not 0 < pos_frac < 0.5:
        raise ValueError("pos_frac must lie in (0, 0.5)")
    if n_informative > n_cols:
        raise ValueError("n_informative cannot exceed n_cols")
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, n_cols))
    w = rng.uniform(0.5, 1.0, size=n_informative) * signal
    score = X[:, :n_informative] @ w / np.sqrt(n_informative)

    lo, hi = -40.0, 40.0
    for _ in range(200):
        b = 0.5 * (lo + hi)
        rate = np.mean(1.0 / (1.0 + np.exp(-(score + b))))
        if rate > pos_frac:
            hi = b
        else:
            lo = b
    b = 0.5 * (lo + hi)
    p = 1.0 / (1.0 + np.exp(-(score + b)))
    y = np.where(rng.uniform(size=n_rows) < p, 1, -1)
    # guarantee both classes for stratified work downstream
    if (y == 1).sum() < 2:
        y[np.argsort(p)[-2:]] = 1
    if (y == -1).sum() < 2:
        y[np.argsort(p)[:2]] = -1
    return X, y


def make_mini_dataset(seed: int = 7) -> Dataset:
    """200-row, 12-column dataset with group-structured missing values and a
    roughly 8:1 label imbalance; the bundled end-to-end fixture."""
    rng = np.random.default_rng(seed)
    n, c = 200, 12
    X = rng.normal(loc=rng.uniform(-2, 2, size=c), scale=rng.uniform(0.5, 2.0, size=c),
                   size=(n, c))
    w = np.array([1.5, -1.2, 1.0])
    score = X[:, :3] @ w
    thresh = np.quantile(score, 0.89)
    y = np.where(score > thresh, 1, -1)

    mask = np.zeros((n, c), dtype=bool)
    rows_a = rng.choice(n, size=30, replace=False)
    rows_b = rng.choice(n, size=18, replace=False)
    mask[np.ix_(rows_a, [4, 5, 6])] = True      # one sub-process group
    mask[np.ix_(rows_b, [7, 8])] = True         # another
    values = np.where(mask, 0.0, X)
    return Dataset(
        values=values,
        missing_mask=mask,
        labels=y,
        column_ids=tuple(f"m{j:02d}" for j in range(c)),
    )


def write_csv(d: Dataset, path):
    """Write a dataset in the generic CSV format (empty cell = missing)."""
    with open(path, "w", encoding="utf-8") as fh:
        cols = list(d.column_ids)
        header = cols + ["label"] + (["timestamp"] if d.timestamps else [])
        fh.write(",".join(header) + "\n")
        for i in range(d.n_rows):
            cells = ["" if d.missing_mask[i, j] else repr(float(d.values[i, j]))
                     for j in range(d.n_cols)]
            cells.append(str(int(d.labels[i])))
            if d.timestamps:
                cells.append(d.timestamps[i])
            fh.write(",".join(cells) + "\n")


def write_secom(d: Dataset, data_path, labels_path):
    """Write a dataset in the whitespace-separated format with a label file."""
    with open(data_path, "w", encoding="utf-8") as fh:
        for i in range(d.n_rows):
            toks = ["NaN" if d.missing_mask[i, j] else f"{d.values[i, j]:.4f}"
                    for j in range(d.n_cols)]
            fh.write(" ".join(toks) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for i in range(d.n_rows):
            ts = (d.timestamps[i] if d.timestamps
                  else f"{(i % 28) + 1:02d}/0{(i % 9) + 1}/2008 12:{i % 60:02d}:00")
            fh.write(f'{int(d.labels[i])} "{ts}"\n')


def make_benchmark_twin(seed: int = 20260823) -> Dataset:
    """Deterministic stand-in matching the published profile of the public
    semiconductor benchmark exactly: 1567 rows, 590 columns, 104 failure
    labels, 41,951 missing cells, 116 constant columns.

    Missing cells are laid out in four identical-mask column groups
    (100x300 + 50x200 + 13x150 + 1x1 = 41,951 cells) so process-structure
    inference has real structure to find.
    """
    rng = np.random.default_rng(seed)
    n, c = 1567, 590
    n_const = 116

    mu = rng.uniform(-50, 50, size=c)
    sigma = rng.uniform(2.0, 20.0, size=c)
    values = rng.normal(mu, sigma, size=(n, c))
    for j in range(n_const):
        values[:, j] = float(j) * 0.5   # constant columns, distinct values

    mask = np.zeros((n, c), dtype=bool)
    var_cols = np.arange(n_const, c)
    plan = [(100, 300), (50, 200), (13, 150), (1, 1)]
    start = 0
    for n_cols_g, n_rows_g in plan:
        cols = var_cols[start:start + n_cols_g]
        rows = rng.choice(n, size=n_rows_g, replace=False)
        mask[np.ix_(rows, cols)] = True
        start += n_cols_g
    assert int(mask.sum()) == 41951

    labels = np.full(n, -1, dtype=int)
    labels[rng.choice(n, size=104, replace=False)] = 1
    values = np.where(mask, 0.0, values)

    base = np.datetime64("2008-07-19T11:55:00")
    stamps = []
    for i in range(n):
        t = base + np.timedelta64(97 * i, "m")
        s = str(t)  # YYYY-MM-DDThh:mm:ss
        stamps.append(f"{s[8:10]}/{s[5:7]}/{s[0:4]} {s[11:19]}")
    return Dataset(
        values=values,
        missing_mask=mask,
        labels=labels,
        column_ids=tuple(f"s{j:03d}" for j in range(c)),
        timestamps=tuple(stamps),
    )


QUADRATIC_OPTIMUM = {"x": 0.7, "y": 0.3, "z": 0.55}


def quadratic_objective(config: dict, budget: float, noise_seed: int,
                        max_budget: float = 81.0,
                        noise_scale: float = 0.1) -> float:
    """Multi-fidelity toy objective: negative squared distance to the
    optimum (higher is better, maximum 0) minus a pessimistic fidelity-error
    term that decays quadratically to zero at full budget.

    The error is keyed to the *configuration* (hash of its values and
    ``noise_seed``), not to the evaluation call: re-evaluating the same
    configuration at a higher budget refines the same estimate, which is the
    premise cheap-rung promotion relies on. A partial-budget metric is never
    optimistic, so reaching a near-zero metric requires genuinely being near
    the optimum."""
    keys = sorted(config)
    true = -sum((float(config[k]) - QUADRATIC_OPTIMUM[k]) ** 2 for k in keys)
    frac = max(0.0, 1.0 - budget / max_budget) ** 2
    if frac == 0.0:
        return true
    values = [round(float(config[k]), 12) for k in keys]
    digest = hashlib.sha256(
        struct.pack(f"<{len(values)}dq", *values, noise_seed)).digest()
    noise_rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return true - abs(noise_rng.normal(0.0, noise_scale)) * frac
