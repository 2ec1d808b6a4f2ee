"""Least-squares gradient boosting on exact-greedy regression trees, plus the
augmentation benchmark (real vs real+artificial training, fixed real test set).

Trees use exact variance-reduction splits with deterministic tie-breaking
(lowest feature index, then lowest threshold), so fitted models are fully
reproducible and small traces can be checked by hand.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import (
    IoFailure,
    LeakageDetectedError,
    LengthMismatchError,
    SchemaMismatchError,
    TooFewRowsError,
    ZeroReferenceError,
)


@dataclass
class GbrConfig:
    n_trees: int = 200
    max_depth: int = 3
    shrinkage: float = 0.05
    min_samples_leaf: int = 5


@dataclass
class _Node:
    feature: int | None = None
    threshold: float = 0.0
    value: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exact greedy search for the split with the largest SSE reduction.

    Returns (gain, feature, threshold) or None. Scanning features in
    ascending index and thresholds in ascending value with a strict
    improvement test gives the documented tie-breaking for free.
    """
    n = y.shape[0]
    total_sum = y.sum()
    total_sq = (y * y).sum()
    parent_sse = total_sq - total_sum * total_sum / n
    best = None
    for feat in range(x.shape[1]):
        order = np.argsort(x[:, feat], kind="stable")
        xs = x[order, feat]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        for i in range(min_leaf - 1, n - min_leaf):
            if xs[i] == xs[i + 1]:
                continue
            thr = xs[i] + (xs[i + 1] - xs[i]) / 2.0
            if not (xs[i] < thr < xs[i + 1]):
                continue  # adjacent floats: midpoint would misroute
            n_l = i + 1
            sse_l = csq[i] - csum[i] * csum[i] / n_l
            sum_r = total_sum - csum[i]
            sse_r = (total_sq - csq[i]) - sum_r * sum_r / (n - n_l)
            gain = parent_sse - sse_l - sse_r
            if best is None or gain > best[0]:
                best = (gain, feat, thr)
    if best is None or best[0] <= 0.0:
        return None
    return best


class RegressionTree:
    """Depth-limited CART regression tree with exact greedy splits."""

    def __init__(self, max_depth: int, min_samples_leaf: int):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.root: _Node | None = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "RegressionTree":
        self.root = self._grow(x, y, depth=0)
        return self

    def _grow(self, x: np.ndarray, y: np.ndarray, depth: int) -> _Node:
        node = _Node(value=float(y.mean()))
        if depth >= self.max_depth or y.shape[0] < 2 * self.min_samples_leaf:
            return node
        split = _best_split(x, y, self.min_samples_leaf)
        if split is None:
            return node
        _, feat, thr = split
        mask = x[:, feat] <= thr
        node.feature = feat
        node.threshold = thr
        node.left = self._grow(x[mask], y[mask], depth + 1)
        node.right = self._grow(x[~mask], y[~mask], depth + 1)
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            node = self.root
            while node.feature is not None:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


@dataclass
class GbrModel:
    """init prediction plus shrunken trees: f(x) = init + sum nu_i tree_i(x)."""

    init: float
    trees: list[tuple[RegressionTree, float]]
    config: GbrConfig

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        pred = np.full(x.shape[0], self.init)
        for tree, nu in self.trees:
            pred += nu * tree.predict(x)
        return pred


def fit_gbr(features: np.ndarray, target: np.ndarray,
            config: GbrConfig | None = None, seed: int = 0) -> GbrModel:
    """Stagewise least-squares boosting: each tree fits the current residuals.

    Exact greedy splits make the fit deterministic; the seed is accepted for
    interface stability but unused (reserved for row subsampling).
    """
    del seed
    config = config or GbrConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise LengthMismatchError(f"features {x.shape} vs target {y.shape}")
    if y.shape[0] < 2 * config.min_samples_leaf:
        raise TooFewRowsError(
            f"need at least {2 * config.min_samples_leaf} rows, got {y.shape[0]}"
        )
    init = float(y.mean())
    residual = y - init
    trees: list[tuple[RegressionTree, float]] = []
    for _ in range(config.n_trees):
        tree = RegressionTree(config.max_depth, config.min_samples_leaf).fit(x, residual)
        residual = residual - config.shrinkage * tree.predict(x)
        trees.append((tree, config.shrinkage))
    return GbrModel(init=init, trees=trees, config=config)


def regression_metrics(y_true, y_pred) -> dict[str, float]:
    """R2, MSE, RMSE, MAE and MAPE with the standard definitions."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape or yt.size == 0:
        raise LengthMismatchError(f"need equal nonzero lengths, got {yt.shape} vs {yp.shape}")
    if np.any(yt == 0.0):
        raise ZeroReferenceError("true values contain zero; MAPE undefined")
    ss_res = float(np.sum((yt - yp) ** 2))
    ss_tot = float(np.sum((yt - yt.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroReferenceError("constant true values; R2 undefined")
    mse = float(np.mean((yt - yp) ** 2))
    return {
        "r2": 1.0 - ss_res / ss_tot,
        "mse": mse,
        "rmse": float(np.sqrt(mse)),
        "mae": float(np.mean(np.abs(yt - yp))),
        "mape": float(100.0 * np.mean(np.abs(yt - yp) / np.abs(yt))),
    }


METRIC_NAMES = ("r2", "mse", "rmse", "mae", "mape")
# Signed improvement, positive = better: gain for R2, reduction for errors.
_HIGHER_IS_BETTER = {"r2"}


@dataclass
class TargetComparison:
    real: dict[str, float]
    augmented: dict[str, float]
    improvement_pct: dict[str, float]


@dataclass
class BenchReport:
    targets: dict[str, TargetComparison]
    config: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(asdict(self), fh, sort_keys=True, indent=2)
        except OSError as exc:
            raise IoFailure(f"cannot write report {path}: {exc}") from exc

    def to_csv(self, path) -> None:
        """Metric rows by (real, augmented, improvement) per target."""
        names = list(self.targets)
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                header = ["metric"]
                for group in ("real", "augmented", "improvement_pct"):
                    header += [f"{group}_{t}" for t in names]
                fh.write(",".join(header) + "\n")
                for metric in METRIC_NAMES:
                    row = [metric]
                    for group in ("real", "augmented", "improvement_pct"):
                        row += [repr(getattr(self.targets[t], group)[metric]) for t in names]
                    fh.write(",".join(row) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write report {path}: {exc}") from exc


def _improvement(real: dict[str, float], aug: dict[str, float]) -> dict[str, float]:
    out = {}
    for name in METRIC_NAMES:
        base = real[name]
        delta = (aug[name] - base) if name in _HIGHER_IS_BETTER else (base - aug[name])
        out[name] = float("nan") if base == 0.0 else 100.0 * delta / abs(base)
    return out


def run_benchmark(real_train: Dataset, synthetic: Dataset, real_test: Dataset,
                  targets: list[str] | None = None,
                  config: GbrConfig | None = None, seed: int = 0) -> BenchReport:
    """Fit per-target GBR models on real rows alone and on real + synthetic,
    then score both on the fixed real test set.
    """
    config = config or GbrConfig()
    for other, label in ((synthetic, "synthetic"), (real_test, "test")):
        if other.schema.feature_names != real_train.schema.feature_names:
            raise SchemaMismatchError(f"{label} dataset schema does not match train schema")
    # Exact duplicate rows across train/test would leak the answer.
    test_rows = {r.tobytes() for r in real_test.values}
    for r in real_train.values:
        if r.tobytes() in test_rows:
            raise LeakageDetectedError("identical row present in both train and test sets")

    schema = real_train.schema
    targets = list(targets) if targets is not None else list(schema.output_names)
    for t in targets:
        if t not in schema.output_names:
            raise SchemaMismatchError(f"{t!r} is not an output feature of this schema")

    x_train = real_train.inputs()
    x_aug = np.vstack([x_train, synthetic.inputs()]) if synthetic.n_rows else x_train
    x_test = real_test.inputs()

    report_targets = {}
    for name in targets:
        y_train = real_train.column(name)
        y_aug = (np.concatenate([y_train, synthetic.column(name)])
                 if synthetic.n_rows else y_train)
        y_test = real_test.column(name)
        model_real = fit_gbr(x_train, y_train, config, seed)
        model_aug = fit_gbr(x_aug, y_aug, config, seed)
        m_real = regression_metrics(y_test, model_real.predict(x_test))
        m_aug = regression_metrics(y_test, model_aug.predict(x_test))
        report_targets[name] = TargetComparison(
            real=m_real, augmented=m_aug, improvement_pct=_improvement(m_real, m_aug)
        )
    echo = {
        "n_trees": config.n_trees,
        "max_depth": config.max_depth,
        "shrinkage": config.shrinkage,
        "min_samples_leaf": config.min_samples_leaf,
        "n_real_train": real_train.n_rows,
        "n_synthetic": synthetic.n_rows,
        "n_real_test": real_test.n_rows,
        "seed": seed,
    }
    return BenchReport(targets=report_targets, config=echo)
