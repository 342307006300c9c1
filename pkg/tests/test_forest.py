import numpy as np
import pytest

from urbanrisk import forest
from urbanrisk.errors import ConfigurationError, DegenerateDataError, DimensionError, DomainError


def exhaustive_split_oracle(x_col, y):
    """Best midpoint threshold by direct variance-reduction search."""
    order = np.argsort(x_col)
    xs, ys = x_col[order], y[order]
    best_gain, best_thr = -np.inf, None
    parent_ss = np.sum((ys - ys.mean()) ** 2)
    for i in range(len(xs) - 1):
        if xs[i] == xs[i + 1]:
            continue
        left, right = ys[: i + 1], ys[i + 1 :]
        ss = np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2)
        gain = parent_ss - ss
        if gain > best_gain:
            best_gain = gain
            best_thr = (xs[i] + xs[i + 1]) / 2.0
    return best_thr


def step_data(n=200):
    x = np.linspace(0.0, 1.0, n).reshape(-1, 1)
    y = (x[:, 0] >= 0.5).astype(float)
    return x, y


def nonlinear_data(rng, n=500, p=4, noise=0.0):
    x = rng.uniform(size=(n, p))
    y = np.sin(6 * x[:, 0]) + 2.0 * x[:, 1] ** 2 + x[:, 2]
    return x, y + noise * rng.normal(size=n)


class TestTree:
    def test_depth_one_recovers_step_threshold(self):
        x, y = step_data()
        config = forest.ForestConfig(
            n_trees=1, max_depth=1, max_features="all",
            min_samples_leaf=1, min_samples_split=2, seed=0,
        )
        tree = forest.fit_tree(x, y, config)
        oracle = exhaustive_split_oracle(x[:, 0], y)
        assert tree.threshold[0] == pytest.approx(oracle, abs=1e-12)
        assert 0.49 < tree.threshold[0] < 0.51

    def test_split_matches_oracle_on_random_column(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(80, 1))
        y = rng.normal(size=80) + 2.0 * (x[:, 0] > 0.3)
        config = forest.ForestConfig(
            n_trees=1, max_depth=1, max_features="all",
            min_samples_leaf=1, min_samples_split=2, seed=0,
        )
        tree = forest.fit_tree(x, y, config)
        assert tree.threshold[0] == pytest.approx(
            exhaustive_split_oracle(x[:, 0], y), abs=1e-12
        )

    def test_respects_min_samples_leaf(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        config = forest.ForestConfig(
            n_trees=1, max_depth=None, max_features="all",
            min_samples_leaf=7, min_samples_split=2, seed=0,
        )
        tree = forest.fit_tree(x, y, config)
        leaf_counts = tree.count[tree.feature == -1]
        assert np.all(leaf_counts >= 7)

    def test_respects_max_depth(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(200, 3))
        y = rng.normal(size=200)
        config = forest.ForestConfig(
            n_trees=1, max_depth=3, max_features="all",
            min_samples_leaf=1, min_samples_split=2, seed=0,
        )
        assert forest.fit_tree(x, y, config).depth <= 3

    def test_children_partition_parent(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(60, 2))
        y = rng.normal(size=60)
        config = forest.ForestConfig(
            n_trees=1, max_depth=4, max_features="all",
            min_samples_leaf=2, min_samples_split=4, seed=0,
        )
        tree = forest.fit_tree(x, y, config)
        for node in range(len(tree.feature)):
            if tree.feature[node] >= 0:
                left, right = tree.left[node], tree.right[node]
                assert tree.count[node] == tree.count[left] + tree.count[right]

    def test_pure_node_becomes_leaf(self):
        x = np.arange(20.0).reshape(-1, 1)
        config = forest.ForestConfig(
            n_trees=1, max_depth=None, max_features="all",
            min_samples_leaf=1, min_samples_split=2, seed=0,
        )
        tree = forest.fit_tree(x, np.ones(20), config)
        assert len(tree.feature) == 1
        assert tree.value[0] == 1.0


class TestForest:
    def test_degenerate_leaf_size_predicts_mean(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        config = forest.ForestConfig(n_trees=10, min_samples_leaf=10**6, seed=1)
        model = forest.fit_forest(x, y, config)
        assert all(len(t.feature) == 1 for t in model.trees)
        # each single-leaf tree predicts its own bootstrap mean
        expected = np.mean([t.value[0] for t in model.trees])
        assert np.allclose(forest.predict_forest(model, x), expected)

    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(6)
        x, y = nonlinear_data(rng, n=120)
        config = forest.ForestConfig(n_trees=25, seed=9)
        p1 = forest.predict_forest(forest.fit_forest(x, y, config), x)
        p2 = forest.predict_forest(forest.fit_forest(x, y, config), x)
        assert np.array_equal(p1, p2)

    def test_tree_streams_are_index_keyed(self):
        # prefix property: the first trees of a larger forest are identical,
        # so training order/schedule cannot matter
        rng = np.random.default_rng(7)
        x, y = nonlinear_data(rng, n=100)
        small = forest.fit_forest(x, y, forest.ForestConfig(n_trees=4, seed=3))
        large = forest.fit_forest(x, y, forest.ForestConfig(n_trees=12, seed=3))
        for a, b in zip(small.trees, large.trees[:4]):
            assert np.array_equal(a.feature, b.feature)
            assert np.array_equal(a.threshold, b.threshold)
            assert np.array_equal(a.value, b.value)

    def test_prediction_is_mean_of_trees(self):
        rng = np.random.default_rng(8)
        x, y = nonlinear_data(rng, n=90)
        model = forest.fit_forest(x, y, forest.ForestConfig(n_trees=15, seed=2))
        grid = rng.uniform(size=(30, x.shape[1]))
        per_tree = np.array([tree.predict(grid) for tree in model.trees])
        assert np.max(np.abs(per_tree.mean(axis=0) - forest.predict_forest(model, grid))) <= 1e-12

    def test_predictions_bounded_by_training_targets(self):
        rng = np.random.default_rng(9)
        x, y = nonlinear_data(rng, n=150, noise=0.3)
        model = forest.fit_forest(x, y, forest.ForestConfig(n_trees=20, seed=4))
        pred = forest.predict_forest(model, rng.uniform(size=(200, x.shape[1])))
        assert pred.min() >= y.min() - 1e-12
        assert pred.max() <= y.max() + 1e-12

    def test_monotone_training_capacity(self):
        rng = np.random.default_rng(10)
        x, y = nonlinear_data(rng, n=500, noise=0.0)
        previous = -np.inf
        for depth in range(1, 9):
            config = forest.ForestConfig(
                n_trees=15, max_depth=depth, max_features="all",
                min_samples_leaf=1, min_samples_split=2, seed=5,
            )
            model = forest.fit_forest(x, y, config)
            r2 = forest.r2_score(y, forest.predict_forest(model, x))
            assert r2 >= previous - 1e-12
            previous = r2

    def test_feature_width_mismatch(self):
        rng = np.random.default_rng(11)
        x, y = nonlinear_data(rng, n=50)
        model = forest.fit_forest(x, y, forest.ForestConfig(n_trees=2, seed=0))
        with pytest.raises(DimensionError):
            forest.predict_forest(model, rng.uniform(size=(5, x.shape[1] + 1)))

    def test_empty_data_rejected(self):
        with pytest.raises(DomainError):
            forest.fit_forest(np.empty((0, 2)), np.empty(0), forest.ForestConfig(seed=0))


class TestMetrics:
    def test_perfect_prediction(self):
        y = np.array([1.0, 2.0, 3.0])
        assert forest.r2_score(y, y) == 1.0
        assert forest.rmse(y, y) == 0.0

    def test_mean_prediction_gives_zero_r2(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        pred = np.full(4, y.mean())
        assert forest.r2_score(y, pred) == pytest.approx(0.0, abs=1e-15)

    def test_rmse_hand_arithmetic(self):
        assert forest.rmse([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]) == pytest.approx(
            np.sqrt(4.0 / 3.0), abs=1e-15
        )

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateDataError):
            forest.r2_score([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


class TestKfold:
    def test_fold_partition(self):
        rng = np.random.default_rng(12)
        folds = forest._fold_indices(25, 4, 7)
        combined = np.sort(np.concatenate(folds))
        assert np.array_equal(combined, np.arange(25))
        sizes = sorted(len(f) for f in folds)
        assert sizes[-1] - sizes[0] <= 1

    def test_constant_target_surfaces_fold_errors(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(20, 2))
        y = np.ones(20)
        result = forest.kfold_cv(x, y, forest.ForestConfig(n_trees=2, seed=0), 4, 1)
        assert len(result.fold_errors) == 4
        assert result.per_fold_r2.size == 0
        assert np.isnan(result.mean_r2)

    def test_grid_fails_when_all_configs_degenerate(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(20, 2))
        y = np.ones(20)
        with pytest.raises(DegenerateDataError):
            forest.grid_search(x, y, [forest.ForestConfig(n_trees=2, seed=0)], 4, 1)

    def test_partially_degenerate_folds_reported(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(12, 2))
        # constant except two rows: most folds degenerate, some usable
        y = np.zeros(12)
        y[0], y[1] = 1.0, 2.0
        config = forest.ForestConfig(
            n_trees=2, min_samples_leaf=1, min_samples_split=2, seed=0
        )
        result = forest.kfold_cv(x, y, config, 6, seed=3)
        assert len(result.fold_errors) >= 1
        assert len(result.per_fold_r2) + len(result.fold_errors) == 6

    def test_leave_one_out_with_single_leaf_trees(self):
        x = np.array([[0.0], [1.0], [2.0]])
        y = np.array([3.0, 6.0, 9.0])
        config = forest.ForestConfig(
            n_trees=1, max_depth=0, max_features="all",
            min_samples_leaf=1, min_samples_split=2, seed=0,
        )
        folds = forest._fold_indices(3, 3, seed=5)
        for fold in folds:
            mask = np.ones(3, dtype=bool)
            mask[fold] = False
            model = forest.fit_forest(x[mask], y[mask], config)
            pred = forest.predict_forest(model, x[fold])
            # single-leaf tree on a bootstrap of the 2 training rows: the
            # prediction is the bootstrap mean, an average of training rows
            assert y[mask].min() - 1e-12 <= pred[0] <= y[mask].max() + 1e-12

    def test_deterministic(self):
        rng = np.random.default_rng(15)
        x, y = nonlinear_data(rng, n=60)
        config = forest.ForestConfig(n_trees=8, seed=11)
        r1 = forest.kfold_cv(x, y, config, 5, 2)
        r2 = forest.kfold_cv(x, y, config, 5, 2)
        assert np.array_equal(r1.per_fold_r2, r2.per_fold_r2)
        assert r1.mean_r2 == r2.mean_r2

    def test_mean_std_recomputable(self):
        rng = np.random.default_rng(16)
        x, y = nonlinear_data(rng, n=60)
        result = forest.kfold_cv(x, y, forest.ForestConfig(n_trees=8, seed=1), 5, 2)
        assert result.mean_r2 == pytest.approx(result.per_fold_r2.mean(), abs=1e-12)
        assert result.std_r2 == pytest.approx(result.per_fold_r2.std(), abs=1e-12)

    def test_k_exceeding_n(self):
        with pytest.raises(DomainError):
            forest.kfold_cv(np.ones((3, 1)), np.arange(3.0),
                            forest.ForestConfig(seed=0), 4, 0)


class TestGridSearch:
    def test_single_config(self):
        rng = np.random.default_rng(17)
        x, y = nonlinear_data(rng, n=50)
        grid = [forest.ForestConfig(n_trees=5, seed=0)]
        result = forest.grid_search(x, y, grid, 5, 1)
        assert result.best_index == 0

    def test_degenerate_config_not_selected(self):
        rng = np.random.default_rng(18)
        x, y = nonlinear_data(rng, n=100)
        good = forest.ForestConfig(
            n_trees=20, max_depth=8, max_features="all",
            min_samples_leaf=2, min_samples_split=4, seed=0,
        )
        stump = forest.ForestConfig(n_trees=20, max_depth=0, seed=0)
        result = forest.grid_search(x, y, [stump, good], 5, 1)
        assert result.best_config == good

    def test_paper_grid_point_encoded_exactly(self):
        config = forest.ForestConfig(
            n_trees=200, max_depth=8, max_features="sqrt",
            min_samples_leaf=5, min_samples_split=5, seed=0,
        )
        assert config.n_trees == 200
        assert config.max_depth == 8
        assert config.resolve_features(4) == 2
        assert config in forest.default_grid(seed=0)

    def test_tie_prefers_lower_complexity(self):
        rng = np.random.default_rng(19)
        x = rng.normal(size=(30, 2))
        y = np.zeros(30)
        y[:3] = [1.0, 2.0, 3.0]
        # both configs are forced to identical single-leaf trees: exact tie
        a = forest.ForestConfig(n_trees=4, max_depth=0, seed=0)
        b = forest.ForestConfig(n_trees=2, max_depth=0, seed=0)
        result = forest.grid_search(x, y, [a, b], 3, 2)
        assert result.best_config == b

    def test_identical_folds_across_configs(self):
        rng = np.random.default_rng(20)
        x, y = nonlinear_data(rng, n=60)
        config = forest.ForestConfig(n_trees=6, seed=4)
        alone = forest.kfold_cv(x, y, config, 5, 9)
        within = forest.grid_search(x, y, [forest.ForestConfig(n_trees=3, seed=4), config], 5, 9)
        assert np.array_equal(within.per_config_cv[1].per_fold_r2, alone.per_fold_r2)

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            forest.grid_search(np.ones((10, 1)), np.arange(10.0), [], 2, 0)

    def test_default_grid_size(self):
        grid = forest.default_grid(seed=1)
        assert len(grid) == 96
        assert len(set(grid)) == 96


class TestConfigValidation:
    def test_invalid_values(self):
        with pytest.raises(ConfigurationError):
            forest.ForestConfig(n_trees=0)
        with pytest.raises(ConfigurationError):
            forest.ForestConfig(min_samples_split=1)
        with pytest.raises(ConfigurationError):
            forest.ForestConfig(min_samples_leaf=0)
        with pytest.raises(ConfigurationError):
            forest.ForestConfig(max_features="bogus")
        with pytest.raises(ConfigurationError):
            forest.ForestConfig(max_depth=-1)

    def test_sqrt_features_floor(self):
        config = forest.ForestConfig(max_features="sqrt")
        assert config.resolve_features(6) == 2
        assert config.resolve_features(16) == 4
        assert config.resolve_features(1) == 1
