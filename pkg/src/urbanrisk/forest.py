"""Random forest regression built from scratch.

CART regression trees with exhaustive variance-reduction splits over
midpoints of sorted unique feature values, per-node random feature
subsets, bootstrap aggregation, k-fold cross-validation and grid search.

Determinism contract: every operation is a pure function of its inputs and
seed. Per-tree random streams are derived from (seed, tree index) alone, so
training order cannot change the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, DimensionError, DomainError

_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters; defaults are the tuned values used by the pipeline."""

    n_trees: int = 200
    max_depth: int | None = 8
    max_features: str | int = "sqrt"  # "all", "sqrt", or explicit count
    min_samples_leaf: int = 5
    min_samples_split: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigurationError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigurationError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise ConfigurationError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigurationError("min_samples_leaf must be >= 1")
        if isinstance(self.max_features, str):
            if self.max_features not in ("all", "sqrt"):
                raise ConfigurationError(
                    f"max_features must be 'all', 'sqrt' or an int, "
                    f"got {self.max_features!r}"
                )
        elif self.max_features < 1:
            raise ConfigurationError("max_features count must be >= 1")

    def resolve_features(self, p: int) -> int:
        if self.max_features == "all":
            return p
        if self.max_features == "sqrt":
            return max(1, int(math.isqrt(p)))
        return min(p, int(self.max_features))


@dataclass(frozen=True)
class RegressionTree:
    """Flat-array CART tree; `feature[i] == -1` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            idx = node[rows]
            go_left = x[rows, self.feature[idx]] <= self.threshold[idx]
            node[rows] = np.where(go_left, self.left[idx], self.right[idx])
            active = self.feature[node] >= 0
        return self.value[node]

    @property
    def depth(self) -> int:
        depths = {0: 0}
        best = 0
        for i in range(len(self.feature)):
            d = depths[i]
            best = max(best, d)
            if self.feature[i] >= 0:
                depths[int(self.left[i])] = d + 1
                depths[int(self.right[i])] = d + 1
        return best


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    config: ForestConfig
    n_features: int


def _best_split(x, y, feature_ids, min_leaf):
    """Best (feature, threshold, gain-score) over candidate features.

    The score maximized is sum over children of (sum y)^2 / n, which orders
    splits identically to variance reduction within a node.
    """
    n = y.shape[0]
    total = float(y.sum())
    base = total * total / n
    best = (None, 0.0, -np.inf)
    for f in feature_ids:
        xf = x[:, f]
        order = np.argsort(xf, kind="stable")
        xs = xf[order]
        csum = np.cumsum(y[order])
        lo, hi = min_leaf - 1, n - min_leaf  # candidate boundary after index i
        if lo >= hi:
            continue
        idx = np.arange(lo, hi)
        distinct = xs[lo:hi] < xs[lo + 1 : hi + 1]
        idx = idx[distinct]
        if idx.size == 0:
            continue
        n_left = idx + 1.0
        sum_left = csum[idx]
        score = sum_left**2 / n_left + (total - sum_left) ** 2 / (n - n_left)
        pos = int(np.argmax(score))
        if score[pos] > best[2]:
            thr = (xs[idx[pos]] + xs[idx[pos] + 1]) / 2.0
            best = (int(f), float(thr), float(score[pos]))
    if best[0] is None:
        return None
    gain = best[2] - base
    ss_node = float(y @ y) - base
    if gain <= _GAIN_EPS * max(ss_node, 1.0):
        return None
    return best[0], best[1]


def _grow_tree(x, y, config: ForestConfig, rng: np.random.Generator) -> RegressionTree:
    p = x.shape[1]
    m = config.resolve_features(p)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        count.append(int(rows.size))
        return len(feature) - 1

    root_rows = np.arange(x.shape[0])
    stack = [(new_node(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        if rows.size < config.min_samples_split or rows.size < 2 * config.min_samples_leaf:
            continue
        candidates = rng.choice(p, size=m, replace=False) if m < p else np.arange(p)
        split = _best_split(x[rows], y[rows], candidates, config.min_samples_leaf)
        if split is None:
            continue
        f, thr = split
        go_left = x[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left_rows, right_rows = rows[go_left], rows[~go_left]
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))
    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
        count=np.array(count, dtype=np.int64),
    )


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,))
    )


def fit_tree(x, y, config: ForestConfig) -> RegressionTree:
    """Grow a single CART tree on the data as given (no bootstrap)."""
    xm = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xm.ndim != 2 or yv.ndim != 1 or xm.shape[0] != yv.shape[0]:
        raise DimensionError("feature matrix and targets disagree")
    if xm.shape[0] == 0:
        raise DomainError("empty training data")
    return _grow_tree(xm, yv, config, _tree_rng(config.seed, 0))


def fit_forest(x, y, config: ForestConfig) -> ForestModel:
    """Train `config.n_trees` CART trees on bootstrap samples.

    Each tree's generator is keyed by (seed, tree index); bootstrap indices
    are drawn first, then per-node feature subsets, so serial and any
    parallel schedule produce identical models.
    """
    xm = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xm.ndim != 2 or yv.ndim != 1 or xm.shape[0] != yv.shape[0]:
        raise DimensionError("feature matrix and targets disagree")
    n = xm.shape[0]
    if n == 0:
        raise DomainError("empty training data")
    if not (np.all(np.isfinite(xm)) and np.all(np.isfinite(yv))):
        raise DomainError("training data contains non-finite values")

    trees = []
    for t in range(config.n_trees):
        rng = _tree_rng(config.seed, t)
        sample = rng.integers(0, n, size=n)
        trees.append(_grow_tree(xm[sample], yv[sample], config, rng))
    return ForestModel(trees=tuple(trees), config=config, n_features=xm.shape[1])


def predict_forest(model: ForestModel, x) -> np.ndarray:
    """Mean of per-tree predictions."""
    xm = np.asarray(x, dtype=float)
    if xm.ndim != 2 or xm.shape[1] != model.n_features:
        raise DimensionError(
            f"expected {model.n_features} feature columns, got "
            f"{xm.shape[1] if xm.ndim == 2 else 'non-matrix'}"
        )
    total = np.zeros(xm.shape[0])
    for tree in model.trees:
        total += tree.predict(xm)
    return total / len(model.trees)


def r2_score(y_true, y_pred) -> float:
    """1 - RSS/TSS; raises on zero-variance truth."""
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.shape != yp.shape or yt.size < 2:
        raise DimensionError("need equal-length vectors with >= 2 entries")
    tss = float(np.sum((yt - yt.mean()) ** 2))
    if tss == 0.0:
        raise DegenerateDataError("true values have zero variance")
    return 1.0 - float(np.sum((yt - yp) ** 2)) / tss


def rmse(y_true, y_pred) -> float:
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.shape != yp.shape or yt.size < 2:
        raise DimensionError("need equal-length vectors with >= 2 entries")
    return float(np.sqrt(np.mean((yt - yp) ** 2)))


@dataclass(frozen=True)
class CvResult:
    """Per-fold scores; degenerate folds are reported, not fatal."""

    per_fold_r2: np.ndarray
    per_fold_rmse: np.ndarray
    mean_r2: float
    std_r2: float
    mean_rmse: float
    fold_errors: tuple[tuple[int, str], ...] = ()


def _fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(np.random.SeedSequence(entropy=seed)).permutation(n)
    return [fold for fold in np.array_split(perm, k)]


def kfold_cv(x, y, config: ForestConfig, k: int, seed: int) -> CvResult:
    """Shuffled k-fold cross-validation of a forest configuration.

    Rows are shuffled once by `seed` and split into k near-equal folds;
    fold assignment depends only on (n, k, seed), so different configs
    evaluated with the same seed see identical folds.
    """
    xm = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    n = xm.shape[0]
    if k < 2:
        raise DomainError("k must be >= 2")
    if k > n:
        raise DomainError(f"k = {k} exceeds n = {n}")
    return _cv_on_folds(xm, yv, config, _fold_indices(n, k, seed))


def _cv_on_folds(xm, yv, config, folds) -> CvResult:
    r2s, rmses, errors = [], [], []
    for fold_no, test_idx in enumerate(folds):
        mask = np.ones(xm.shape[0], dtype=bool)
        mask[test_idx] = False
        model = fit_forest(xm[mask], yv[mask], config)
        pred = predict_forest(model, xm[test_idx])
        try:
            r2s.append(r2_score(yv[test_idx], pred))
            rmses.append(rmse(yv[test_idx], pred))
        except (DegenerateDataError, DimensionError) as err:
            errors.append((fold_no, str(err)))
    if not r2s:
        # every fold degenerate: surfaced as error entries, not an exception
        return CvResult(
            per_fold_r2=np.empty(0),
            per_fold_rmse=np.empty(0),
            mean_r2=math.nan,
            std_r2=math.nan,
            mean_rmse=math.nan,
            fold_errors=tuple(errors),
        )
    r2_arr = np.array(r2s)
    rmse_arr = np.array(rmses)
    return CvResult(
        per_fold_r2=r2_arr,
        per_fold_rmse=rmse_arr,
        mean_r2=float(r2_arr.mean()),
        std_r2=float(r2_arr.std()),
        mean_rmse=float(rmse_arr.mean()),
        fold_errors=tuple(errors),
    )


@dataclass(frozen=True)
class GridSearchResult:
    grid: tuple[ForestConfig, ...]
    per_config_cv: tuple[CvResult, ...]
    best_index: int

    @property
    def best_config(self) -> ForestConfig:
        return self.grid[self.best_index]


def _depth_key(config: ForestConfig) -> float:
    return math.inf if config.max_depth is None else config.max_depth


def grid_search(x, y, grid: list[ForestConfig], k: int, seed: int) -> GridSearchResult:
    """Cross-validate every config on identical folds; best by mean R².

    Ties favor the lower-complexity config: fewer trees, then shallower.
    """
    if not grid:
        raise ConfigurationError("grid is empty")
    xm = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if k > xm.shape[0]:
        raise DomainError(f"k = {k} exceeds n = {xm.shape[0]}")
    folds = _fold_indices(xm.shape[0], k, seed)
    results = [_cv_on_folds(xm, yv, config, folds) for config in grid]

    def sort_key(i):
        mean = results[i].mean_r2
        primary = math.inf if math.isnan(mean) else -mean
        return (primary, grid[i].n_trees, _depth_key(grid[i]))

    best_index = min(range(len(grid)), key=sort_key)
    if math.isnan(results[best_index].mean_r2):
        raise DegenerateDataError("every configuration was degenerate under CV")
    return GridSearchResult(
        grid=tuple(grid), per_config_cv=tuple(results), best_index=best_index
    )


def default_grid(seed: int = 0) -> list[ForestConfig]:
    """The tuned point plus its neighborhood: 96 configurations.

    Exhaustive cross of trees {100, 200, 400}, depth {4, 8, 16, unlimited},
    leaf {1, 5}, split {2, 5}, features {sqrt, all}.
    """
    grid = []
    for trees in (100, 200, 400):
        for depth in (4, 8, 16, None):
            for leaf in (1, 5):
                for split in (2, 5):
                    for feats in ("sqrt", "all"):
                        grid.append(ForestConfig(
                            n_trees=trees, max_depth=depth, max_features=feats,
                            min_samples_leaf=leaf, min_samples_split=split,
                            seed=seed,
                        ))
    return grid
