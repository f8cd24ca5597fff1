"""Histogram-based gradient-boosted trees with pluggable second-order loss.

Greedy level-wise growth on quantile-binned features. Split gain follows the
standard second-order formulation

    gain = 1/2 · [G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]

with leaf value −G/(H+λ) scaled by the learning rate. Bin codes are computed
with ``searchsorted(edges, x, side="left")`` so that *code ≤ b* is exactly
*x ≤ edges[b]*; prediction on raw values therefore routes rows identically
to training. Everything is deterministic for a fixed spec and seed; split
ties resolve to the lowest (feature, bin) pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, DataError
from .losses import LossSpec, loss_value_grad_hess, sigmoid

_FEATURE_CHUNK = 512


@dataclass(frozen=True)
class GbtSpec:
    loss: LossSpec = field(default_factory=LossSpec)
    n_rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1e-3
    n_bins: int = 64
    subsample: float = 1.0
    reg_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ConfigError("n_rounds must be >= 0")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.min_child_weight < 0:
            raise ConfigError("min_child_weight must be >= 0")
        if not 2 <= self.n_bins <= 255:
            raise ConfigError("n_bins must lie in [2, 255]")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must lie in (0, 1]")
        if self.reg_lambda < 0:
            raise ConfigError("reg_lambda must be >= 0")


@dataclass
class Tree:
    """Flat array representation; node 0 is the root. Internal nodes carry
    the split (feature, bin, threshold) and its stats; leaves carry values."""

    feature: np.ndarray     # int32, -1 for leaves
    bin_id: np.ndarray      # int32, split bin b (go left when code <= b)
    threshold: np.ndarray   # float64, raw-value threshold (x <= t goes left)
    left: np.ndarray        # int32 child ids, -1 for leaves
    right: np.ndarray
    value: np.ndarray       # float64 leaf values (0 for internal)
    gain: np.ndarray        # float64 split gain (0 for leaves)
    grad_sum: np.ndarray    # float64 node G
    hess_sum: np.ndarray    # float64 node H

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return self.value[node]
            rows = np.nonzero(internal)[0]
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])

    def leaf_of_codes(self, codes: np.ndarray) -> np.ndarray:
        """Leaf index per row using bin codes (training-time routing)."""
        node = np.zeros(codes.shape[0], dtype=np.int32)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            rows = np.nonzero(internal)[0]
            nd = node[rows]
            go_left = codes[rows, self.feature[nd]] <= self.bin_id[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])


@dataclass
class BoostedModel:
    trees: list[Tree]
    base_score: float
    spec: GbtSpec
    n_features: int
    bin_edges: list[np.ndarray]
    train_curve: np.ndarray     # mean training loss after each round

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"expected {self.n_features} feature columns, got "
                f"{X.shape[1] if X.ndim == 2 else 'non-2D'}")
        z = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            z += tree.predict_value(X)
        return z

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.raw_scores(X))

    def to_json(self) -> str:
        payload = {
            "base_score": self.base_score,
            "n_features": self.n_features,
            "spec": {
                "loss": self.spec.loss.name,
                "focal": (None if self.spec.loss.focal is None else
                          {"alpha": self.spec.loss.focal.alpha,
                           "gamma": self.spec.loss.focal.gamma}),
                "n_rounds": self.spec.n_rounds,
                "max_depth": self.spec.max_depth,
                "learning_rate": self.spec.learning_rate,
                "min_child_weight": self.spec.min_child_weight,
                "n_bins": self.spec.n_bins,
                "subsample": self.spec.subsample,
                "reg_lambda": self.spec.reg_lambda,
                "seed": self.spec.seed,
            },
            "trees": [
                {k: getattr(t, k).tolist()
                 for k in ("feature", "bin_id", "threshold", "left", "right",
                           "value", "gain", "grad_sum", "hess_sum")}
                for t in self.trees
            ],
        }
        return json.dumps(payload, sort_keys=True)


def quantile_bin_edges(col: np.ndarray, n_bins: int) -> np.ndarray:
    """Interior thresholds (at most n_bins−1) splitting a column into
    quantile bins; duplicates removed, so constants yield no edges."""
    qs = np.linspace(0, 100, n_bins + 1)[1:-1]
    return np.unique(np.percentile(col, qs))


def bin_codes(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    codes = np.empty(X.shape, dtype=np.uint8)
    for j, e in enumerate(edges):
        codes[:, j] = np.searchsorted(e, X[:, j], side="left")
    return codes


def fit_gbt(X: np.ndarray, y01: np.ndarray, spec: GbtSpec) -> BoostedModel:
    """Fit the boosting ensemble on features X and labels in {0,1}."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y01, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be 2-D")
    if y.shape != (X.shape[0],):
        raise DataError("label length mismatch")
    if not np.isfinite(X).all():
        raise DataError("features must be finite")
    classes = set(np.unique(y).tolist())
    if not classes <= {0.0, 1.0}:
        raise DataError("labels must be 0/1 at the learner boundary")
    if len(classes) < 2:
        raise DataError("both classes must be present in training labels")

    n, n_feat = X.shape
    pos_rate = float(y.mean())
    base = float(np.log(pos_rate / (1.0 - pos_rate)))
    edges = [quantile_bin_edges(X[:, j], spec.n_bins) for j in range(n_feat)]
    codes = bin_codes(X, edges)
    n_code = max(int(codes.max()) + 1, 1) if codes.size else 1

    rng = np.random.default_rng(spec.seed)
    z = np.full(n, base)
    trees: list[Tree] = []
    curve = []
    for _ in range(spec.n_rounds):
        value, grad, hess = loss_value_grad_hess(spec.loss, y, z)
        curve.append(float(value.mean()))
        if spec.subsample < 1.0:
            size = max(1, int(round(spec.subsample * n)))
            sample = np.sort(rng.choice(n, size=size, replace=False))
        else:
            sample = np.arange(n)
        tree = _grow_tree(codes, grad, hess, edges, sample, spec, n_code)
        trees.append(tree)
        leaf = tree.leaf_of_codes(codes)
        z = z + tree.value[leaf]
    value, _, _ = loss_value_grad_hess(spec.loss, y, z)
    curve.append(float(value.mean()))
    return BoostedModel(trees=trees, base_score=base, spec=spec,
                        n_features=n_feat, bin_edges=edges,
                        train_curve=np.array(curve))


def _grow_tree(codes, grad, hess, edges, sample, spec: GbtSpec, n_code: int) -> Tree:
    n_feat = codes.shape[1]
    lam = spec.reg_lambda

    feature = [-1]
    bin_id = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]
    gain_l = [0.0]
    gsum = [float(grad[sample].sum())]
    hsum = [float(hess[sample].sum())]

    # frontier: rows currently assigned to each active node
    frontier = [(0, sample)]
    for depth in range(spec.max_depth):
        if not frontier:
            break
        hist_g, hist_h = _histograms(codes, grad, hess, frontier, n_feat, n_code)
        next_frontier = []
        for slot, (node, rows) in enumerate(frontier):
            G, H = gsum[node], hsum[node]
            best = _best_split(hist_g[slot], hist_h[slot], G, H, lam,
                               spec.min_child_weight, edges)
            if best is None:
                value[node] = -G / (H + lam) * spec.learning_rate
                continue
            feat, b, gain, gl, hl = best
            feature[node] = feat
            bin_id[node] = b
            threshold[node] = float(edges[feat][b])
            gain_l[node] = gain
            go_left = codes[rows, feat] <= b
            for child_rows, g_c, h_c, attr in (
                    (rows[go_left], gl, hl, "left"),
                    (rows[~go_left], G - gl, H - hl, "right")):
                child = len(feature)
                feature.append(-1)
                bin_id.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                gain_l.append(0.0)
                gsum.append(g_c)
                hsum.append(h_c)
                if attr == "left":
                    left[node] = child
                else:
                    right[node] = child
                if depth + 1 < spec.max_depth:
                    next_frontier.append((child, child_rows))
                else:
                    value[child] = -g_c / (h_c + lam) * spec.learning_rate
        frontier = next_frontier

    return Tree(
        feature=np.array(feature, dtype=np.int32),
        bin_id=np.array(bin_id, dtype=np.int32),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value),
        gain=np.array(gain_l),
        grad_sum=np.array(gsum),
        hess_sum=np.array(hsum),
    )


def _histograms(codes, grad, hess, frontier, n_feat, n_code):
    """Per-(node-slot, feature, bin) gradient and hessian sums, accumulated
    with one bincount per feature chunk."""
    n_slots = len(frontier)
    rows = np.concatenate([r for _, r in frontier])
    slot_of = np.concatenate([np.full(r.size, i, dtype=np.int64)
                              for i, (_, r) in enumerate(frontier)])
    hist_g = np.zeros((n_slots, n_feat, n_code))
    hist_h = np.zeros((n_slots, n_feat, n_code))
    for start in range(0, n_feat, _FEATURE_CHUNK):
        stop = min(start + _FEATURE_CHUNK, n_feat)
        width = stop - start
        chunk = codes[rows][:, start:stop].astype(np.int64)
        flat = ((slot_of[:, None] * width + np.arange(width)[None, :]) * n_code
                + chunk).ravel()
        minlength = n_slots * width * n_code
        w_g = np.repeat(grad[rows], width)
        w_h = np.repeat(hess[rows], width)
        hist_g[:, start:stop, :] = np.bincount(
            flat, weights=w_g, minlength=minlength).reshape(n_slots, width, n_code)
        hist_h[:, start:stop, :] = np.bincount(
            flat, weights=w_h, minlength=minlength).reshape(n_slots, width, n_code)
    return hist_g, hist_h


def _best_split(hg, hf, G, H, lam, min_child_weight, edges):
    """Best (feature, bin, gain, G_left, H_left) for one node, or None.

    Ties break to the lowest flat (feature-major, bin) index.
    """
    n_feat, n_code = hg.shape
    GL = np.cumsum(hg, axis=1)
    HL = np.cumsum(hf, axis=1)
    HR = H - HL
    parent = G * G / (H + lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        gains = 0.5 * (GL ** 2 / (HL + lam) + (G - GL) ** 2 / (HR + lam) - parent)
    valid = np.zeros((n_feat, n_code), dtype=bool)
    for j in range(n_feat):
        valid[j, : edges[j].size] = True    # a threshold exists at bin b
    valid &= (HL >= min_child_weight) & (HR >= min_child_weight)
    gains = np.where(valid, gains, -np.inf)
    flat = int(np.argmax(gains))
    feat, b = divmod(flat, n_code)
    best_gain = gains[feat, b]
    if not np.isfinite(best_gain) or best_gain <= 0.0:
        return None
    return feat, b, float(best_gain), float(GL[feat, b]), float(HL[feat, b])


def feature_importance(model: BoostedModel) -> dict[int, float]:
    """Total split gain per feature index; unused features absent."""
    out: dict[int, float] = {}
    for tree in model.trees:
        internal = tree.feature >= 0
        for f, g in zip(tree.feature[internal].tolist(), tree.gain[internal].tolist()):
            out[f] = out.get(f, 0.0) + g
    return dict(sorted(out.items()))


def partial_dependence(model: BoostedModel, X: np.ndarray, feature: int,
                       grid_size: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Quantile grid over X[:, feature] and the mean predicted probability
    with that column overridden to each grid value."""
    X = np.asarray(X, dtype=float)
    if not 0 <= feature < model.n_features:
        raise DataError(f"feature index {feature} out of range")
    if grid_size < 1:
        raise ConfigError("grid_size must be >= 1")
    qs = np.linspace(0, 100, grid_size) if grid_size > 1 else np.array([50.0])
    grid = np.unique(np.percentile(X[:, feature], qs))
    means = np.empty(grid.size)
    work = X.copy()
    for i, v in enumerate(grid):
        work[:, feature] = v
        means[i] = float(model.predict_proba(work).mean())
    return grid, means
