"""Ensemble anomaly screening: a portfolio of L unsupervised detectors votes
failure-like (+1) / normal-like (-1) per sample; the label-signed vote ratio
(the abnormal factor) grades how far each sample deviates from its own
class, and thresholds on that factor flag rows as anomalous.

Conventions:
  * features are standardized internally before any detector runs;
  * for clustering detectors the minority cluster maps to +1, because the
    failure class is the rare one;
  * a detector that cannot run on the given data (degenerate geometry, too
    few rows) abstains — the effective L shrinks and the abstention is
    recorded;
  * the vote ratio P/N saturates at the effective L when N = 0, which keeps
    the factor finite and monotone in P.
"""

from __future__ import annotations

import csv
import json
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans
from sklearn.ensemble import IsolationForest
from sklearn.neighbors import LocalOutlierFactor

from .errors import ConfigError, DataError
from .feature_factory import FeatureMatrix
from .seeding import derive_seed

FAMILIES = ("kmeans", "isolation_forest", "lof", "mahalanobis",
            "histogram_outlier", "pca_reconstruction")
LEVELS = ("normal", "anomalous", "undetermined")

# flag fraction for detectors whose knob is not a contamination rate
_SCORE_FLAG_QUANTILE = 0.95


@dataclass(frozen=True)
class DetectorSpec:
    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown detector family {self.family!r}")
        want = 2 if self.family == "histogram_outlier" else 1
        if len(self.params) != want:
            raise ConfigError(f"{self.family} takes {want} parameter(s)")

    @property
    def detector_id(self) -> str:
        tag = "_".join(f"{p:g}" for p in self.params)
        return f"{self.family}_{tag}"


@dataclass(frozen=True)
class DetectorPortfolio:
    detectors: tuple[DetectorSpec, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.detectors) < 2:
            raise ConfigError("portfolio needs at least 2 detectors")
        ids = [d.detector_id for d in self.detectors]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate detector ids in portfolio")

    @property
    def size(self) -> int:
        return len(self.detectors)


def default_portfolio(seed: int = 0) -> DetectorPortfolio:
    """Twelve detector variants across the six families."""
    return DetectorPortfolio(detectors=(
        DetectorSpec("kmeans", (2,)),
        DetectorSpec("kmeans", (3,)),
        DetectorSpec("kmeans", (4,)),
        DetectorSpec("isolation_forest", (0.05,)),
        DetectorSpec("isolation_forest", (0.1,)),
        DetectorSpec("lof", (10,)),
        DetectorSpec("lof", (20,)),
        DetectorSpec("mahalanobis", (0.95,)),
        DetectorSpec("histogram_outlier", (10, 0.95)),
        DetectorSpec("histogram_outlier", (20, 0.9)),
        DetectorSpec("pca_reconstruction", (0.9,)),
        DetectorSpec("pca_reconstruction", (0.95,)),
    ), seed=seed)


@dataclass(frozen=True)
class VoteTally:
    votes_p: np.ndarray         # per-sample count of +1 votes
    votes_n: np.ndarray         # per-sample count of -1 votes
    n_detectors: int            # effective L after abstentions
    abstained: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.asarray(self.votes_p)
        n = np.asarray(self.votes_n)
        if p.shape != n.shape or p.ndim != 1:
            raise DataError("vote arrays must be equal-length 1-D")
        if np.any(p < 0) or np.any(n < 0):
            raise DataError("vote counts must be non-negative")
        if np.any(p + n != self.n_detectors):
            raise DataError("vote counts must sum to the detector count")

    @property
    def n_samples(self) -> int:
        return self.votes_p.shape[0]


@dataclass(frozen=True)
class Thresholds:
    t_normal: float = -5.0
    t_failure: float = 0.1

    def __post_init__(self):
        if not (self.t_normal < 0.0 < self.t_failure):
            raise ConfigError("thresholds must satisfy t_normal < 0 < t_failure")


@dataclass(frozen=True)
class AnomalyReport:
    a_f: np.ndarray
    level: tuple[str, ...]
    thresholds: Thresholds
    excluded_rows: tuple[int, ...]
    labels: np.ndarray
    votes_p: np.ndarray
    votes_n: np.ndarray
    abstained: tuple[str, ...] = ()
    grades: tuple[int, ...] | None = None   # quartile rank of |A_f| within anomalous

    def counts(self) -> dict[str, int]:
        return {lv: sum(1 for x in self.level if x == lv) for lv in LEVELS}

    def summary(self) -> dict:
        return {
            "counts": self.counts(),
            "thresholds": {"t_normal": self.thresholds.t_normal,
                           "t_failure": self.thresholds.t_failure},
            "n_excluded": len(self.excluded_rows),
            "abstained_detectors": list(self.abstained),
        }


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------

def _detector_votes(spec: DetectorSpec, X: np.ndarray, seed: int) -> np.ndarray:
    """+1/-1 votes for one detector on the standardized matrix.

    Raises on data the detector cannot handle; the caller turns that into an
    abstention.
    """
    n = X.shape[0]
    if spec.family == "kmeans":
        k = int(spec.params[0])
        assign = KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(X)
        sizes = np.bincount(assign, minlength=k)
        minority = int(np.argmin(sizes))
        return np.where(assign == minority, 1, -1)
    if spec.family == "isolation_forest":
        pred = IsolationForest(contamination=spec.params[0],
                               random_state=seed).fit_predict(X)
        return -pred        # sklearn outlier = -1, our failure vote = +1
    if spec.family == "lof":
        k = int(spec.params[0])
        if n <= k:
            raise DataError("too few rows for the neighborhood size")
        pred = LocalOutlierFactor(n_neighbors=k).fit_predict(X)
        return -pred
    if spec.family == "mahalanobis":
        cov = np.cov(X, rowvar=False)
        cov = np.atleast_2d(cov) + 1e-9 * np.eye(X.shape[1])
        d2 = np.einsum("ij,ji->i", X @ np.linalg.inv(cov), X.T)
        cut = np.quantile(d2, spec.params[0])
        return np.where(d2 > cut, 1, -1)
    if spec.family == "histogram_outlier":
        bins, q = int(spec.params[0]), spec.params[1]
        score = np.zeros(n)
        for j in range(X.shape[1]):
            col = X[:, j]
            lo, hi = col.min(), col.max()
            if hi == lo:
                continue
            edges = np.linspace(lo, hi, bins + 1)
            idx = np.clip(np.searchsorted(edges, col, side="right") - 1, 0, bins - 1)
            density = np.bincount(idx, minlength=bins) / n
            score += -np.log(density[idx] + 1e-12)
        cut = np.quantile(score, q)
        return np.where(score > cut, 1, -1)
    # pca_reconstruction
    threshold = spec.params[0]
    centered = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s ** 2
    total = var.sum()
    if total == 0:
        raise DataError("no variance to reconstruct")
    ratios = np.cumsum(var) / total
    rank = int(np.searchsorted(ratios, threshold - 1e-12) + 1)
    basis = vt[:rank]
    err = np.sum((centered - centered @ basis.T @ basis) ** 2, axis=1)
    cut = np.quantile(err, _SCORE_FLAG_QUANTILE)
    return np.where(err > cut, 1, -1)


def fit_predict_portfolio(fm, portfolio: DetectorPortfolio) -> VoteTally:
    """Run every detector and tally +1/-1 votes per sample.

    Detectors that fail on the given data abstain; the tally's detector
    count reflects only those that voted. A matrix with no variance at all
    (identical rows) makes every detector abstain.
    """
    if isinstance(fm, FeatureMatrix):
        X = fm.take(list(range(fm.n_features)))
    else:
        X = np.asarray(fm, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("need a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise DataError("matrix must be finite")

    mu, sd = X.mean(axis=0), X.std(axis=0)
    degenerate = np.all(sd == 0)
    sd = np.where(sd == 0, 1.0, sd)
    Xs = (X - mu) / sd

    p = np.zeros(X.shape[0], dtype=int)
    n = np.zeros(X.shape[0], dtype=int)
    abstained: list[str] = []
    voted = 0
    for spec in portfolio.detectors:
        if degenerate:
            abstained.append(spec.detector_id)
            continue
        det_seed = derive_seed(portfolio.seed, spec.detector_id)
        try:
            votes = _detector_votes(spec, Xs, det_seed)
        except (DataError, ValueError, np.linalg.LinAlgError):
            abstained.append(spec.detector_id)
            continue
        p += votes == 1
        n += votes == -1
        voted += 1
    return VoteTally(votes_p=p, votes_n=n, n_detectors=voted,
                     abstained=tuple(abstained))


# ---------------------------------------------------------------------------
# abnormal factor and level assignment
# ---------------------------------------------------------------------------

def abnormal_factor(tally: VoteTally, labels) -> np.ndarray:
    """Label-signed vote ratio A_f = Y * (P / N).

    When N = 0 the ratio saturates at the effective detector count, keeping
    the factor finite and monotone in P. If every detector abstained the
    factor is 0 everywhere.
    """
    labels = np.asarray(labels)
    if labels.shape != tally.votes_p.shape:
        raise DataError("labels must align with the tally")
    if len(set(np.unique(labels)) - {-1, 1}) > 0:
        raise DataError("labels must be -1/+1")
    p = tally.votes_p.astype(float)
    n = tally.votes_n.astype(float)
    ratio = np.where(n > 0, p / np.where(n > 0, n, 1.0), float(tally.n_detectors))
    return labels * ratio


def classify_levels(a_f, labels, tally: VoteTally,
                    thresholds: Thresholds | None = None,
                    assign_grades: bool = False) -> AnomalyReport:
    """Assign each sample one of {normal, anomalous, undetermined}.

    Precedence: a split vote (P = N, including the all-abstain case) is
    undetermined before any threshold applies. Then a label -1 sample with
    A_f below t_normal, or a label +1 sample with A_f strictly inside
    (0, t_failure), is anomalous; everything else is normal. Anomalous rows
    form the exclusion set. Optionally each anomalous sample also gets a
    quartile grade (1-4) of |A_f| within the anomalous set.
    """
    th = thresholds or Thresholds()
    a_f = np.asarray(a_f, dtype=float)
    labels = np.asarray(labels)
    if not (a_f.shape == labels.shape == tally.votes_p.shape):
        raise DataError("a_f, labels, and tally must align")

    undetermined = tally.votes_p == tally.votes_n
    anomalous = ~undetermined & (
        ((labels == -1) & (a_f < th.t_normal))
        | ((labels == 1) & (0 < a_f) & (a_f < th.t_failure))
    )
    level = np.full(a_f.shape, "normal", dtype=object)
    level[anomalous] = "anomalous"
    level[undetermined] = "undetermined"

    grades = None
    if assign_grades:
        g = np.zeros(a_f.shape, dtype=int)
        dev = np.abs(a_f[anomalous])
        if dev.size:
            edges = np.quantile(dev, [0.25, 0.5, 0.75])
            g[anomalous] = np.searchsorted(edges, dev, side="left") + 1
        grades = tuple(int(x) for x in g)

    return AnomalyReport(
        a_f=a_f,
        level=tuple(str(x) for x in level),
        thresholds=th,
        excluded_rows=tuple(int(i) for i in np.nonzero(anomalous)[0]),
        labels=labels,
        votes_p=tally.votes_p,
        votes_n=tally.votes_n,
        abstained=tally.abstained,
        grades=grades,
    )


def adaptive_thresholds(a_f, labels, target_quantile: float
                        ) -> tuple[Thresholds, tuple[str, ...]]:
    """Data-driven thresholds: the target quantile of A_f over label -1 sets
    t_normal; the same quantile of the positive A_f values over label +1
    sets t_failure. A missing class (or a quantile that would violate
    t_normal < 0 < t_failure) falls back to the default with a warning.
    """
    if not 0.0 < target_quantile < 0.5:
        raise ConfigError("target_quantile must lie in (0, 0.5)")
    a_f = np.asarray(a_f, dtype=float)
    labels = np.asarray(labels)
    notes: list[str] = []
    defaults = Thresholds()

    neg = a_f[labels == -1]
    if neg.size == 0:
        t_normal = defaults.t_normal
        notes.append("no label -1 samples; t_normal defaulted")
    else:
        t_normal = float(np.quantile(neg, target_quantile))
        if t_normal >= 0.0:
            t_normal = defaults.t_normal
            notes.append("quantile of label -1 factors was non-negative; "
                         "t_normal defaulted")

    pos = a_f[(labels == 1) & (a_f > 0)]
    if pos.size == 0:
        t_failure = defaults.t_failure
        notes.append("no positive factors among label +1 samples; "
                     "t_failure defaulted")
    else:
        t_failure = float(np.quantile(pos, target_quantile))

    for msg in notes:
        _warnings.warn(msg, stacklevel=2)
    return Thresholds(t_normal=t_normal, t_failure=t_failure), tuple(notes)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def write_report_csv(report: AnomalyReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "label", "votes_p", "votes_n", "a_f", "level"])
        for i in range(report.a_f.shape[0]):
            w.writerow([i, int(report.labels[i]), int(report.votes_p[i]),
                        int(report.votes_n[i]), repr(float(report.a_f[i])),
                        report.level[i]])


def write_report_summary(report: AnomalyReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
