import math

import numpy as np
import pytest

from flowgate.dataset import EncodedDataset
from flowgate.wrf import (DEFAULT_CLASS_WEIGHTS, DecisionTree, Forest,
                          ForestConfig, TreeConfig, beta_factor, fit,
                          init_weights, load_forest, majority_partition,
                          per_class_accuracy, predict_batch, roulette_sample,
                          save_forest, train_tree, tree_accuracy,
                          update_weights, weighted_vote)

from conftest import synthetic_dataset


class TestInitWeights:
    def test_stated_class_profile(self):
        # training counts per stated distribution; Normal samples get
        # 0.3 / 17129
        counts = [17129, 3107, 35700, 52, 1126]
        labels = np.repeat(np.arange(5), counts)
        w = init_weights(labels, DEFAULT_CLASS_WEIGHTS)
        assert w[0] == pytest.approx(0.3 / 17129, rel=1e-9)
        assert w[0] == pytest.approx(1.7514e-5, rel=1e-3)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_uniform_reduction(self):
        labels = np.repeat(np.arange(5), [10, 20, 30, 5, 35])
        n = labels.size
        profile = np.bincount(labels, minlength=5) / n
        w = init_weights(labels, profile)
        assert np.allclose(w, 1.0 / n)
        w_none = init_weights(labels, None)
        assert np.allclose(w_none, 1.0 / n)

    def test_weighted_empty_class_is_error(self):
        labels = np.repeat(np.arange(4), 5)  # class 4 absent
        with pytest.raises(ValueError, match="class 4"):
            init_weights(labels, DEFAULT_CLASS_WEIGHTS)


class TestRouletteSample:
    def test_degenerate_distribution(self):
        w = np.array([0.0, 0.0, 1.0, 0.0])
        idx = roulette_sample(w, 50, np.random.default_rng(0))
        assert np.all(idx == 2)

    def test_uniform_frequencies(self):
        n, draws = 20, 100_000
        w = np.full(n, 1.0 / n)
        idx = roulette_sample(w, draws, np.random.default_rng(7))
        counts = np.bincount(idx, minlength=n)
        expected = draws / n
        sigma = math.sqrt(draws * (1 / n) * (1 - 1 / n))
        assert np.all(np.abs(counts - expected) < 3 * sigma)

    def test_deterministic(self):
        w = np.array([0.1, 0.2, 0.3, 0.4])
        a = roulette_sample(w, 100, np.random.default_rng(3))
        b = roulette_sample(w, 100, np.random.default_rng(3))
        assert np.array_equal(a, b)


class TestTrainTree:
    def test_pure_bootstrap(self):
        X = np.random.default_rng(0).random((10, 3))
        y = np.full(10, 3)
        tree = train_tree(X, y, np.arange(3), TreeConfig(),
                          np.random.default_rng(0))
        assert tree.depth() == 0
        assert np.all(tree.predict(X) == 3)

    def test_separable_threshold(self):
        X = np.array([[0.1], [0.2], [0.3], [1.1], [1.2], [1.3]])
        y = np.array([0, 0, 0, 1, 1, 1])
        tree = train_tree(X, y, np.array([0]),
                          TreeConfig(min_samples_leaf=1, max_features=None),
                          np.random.default_rng(0))
        assert tree.depth() == 1
        assert tree.root["threshold"] == pytest.approx(0.7)
        assert np.all(tree.predict(X) == y)

    def test_deterministic(self):
        ds = synthetic_dataset([20] * 5, seed=3, n_features=10)
        a = train_tree(ds.X, ds.y, np.arange(10), TreeConfig(),
                       np.random.default_rng(5))
        b = train_tree(ds.X, ds.y, np.arange(10), TreeConfig(),
                       np.random.default_rng(5))
        assert a.root == b.root

    def test_perfect_fit_on_consistent_data(self):
        rng = np.random.default_rng(9)
        X = rng.random((80, 4))
        y = rng.integers(0, 5, 80)
        tree = train_tree(X, y, np.arange(4),
                          TreeConfig(max_depth=10**6, min_samples_leaf=1,
                                     max_features=None),
                          np.random.default_rng(0))
        assert np.all(tree.predict(X) == y)

    def test_leaf_tie_goes_to_lowest_code(self):
        X = np.zeros((4, 2))
        y = np.array([1, 1, 3, 3])
        tree = train_tree(X, y, np.arange(2), TreeConfig(),
                          np.random.default_rng(0))
        assert tree.root["label"] == 1


class TestTreeAccuracy:
    def _constant_tree(self, label):
        return DecisionTree({"label": label, "hist": [0] * 5})

    def _dataset(self, labels):
        labels = np.asarray(labels)
        return EncodedDataset(X=np.zeros((labels.size, 2)), y=labels,
                              feature_names=["a", "b"], encoders={})

    def test_coin_flip_tree(self):
        ds = self._dataset([0] * 5 + [1] * 5)
        e, a = tree_accuracy(self._constant_tree(0), ds)
        assert e == pytest.approx(0.5)
        assert a == pytest.approx(0.0)

    def test_point_one_error(self):
        ds = self._dataset([0] * 9 + [1])
        e, a = tree_accuracy(self._constant_tree(0), ds)
        assert e == pytest.approx(0.1)
        assert a == pytest.approx(0.5 * math.log(9.0))

    def test_perfect_tree_clamped(self):
        ds = self._dataset([0] * 10)
        e, a = tree_accuracy(self._constant_tree(0), ds)
        assert e == pytest.approx(1e-6)
        assert a == pytest.approx(0.5 * math.log((1 - 1e-6) / 1e-6))
        assert math.isfinite(a)


class TestBetaFactor:
    def test_balanced_weights_all_one(self):
        for maj in (True, False):
            for corr in (True, False):
                assert beta_factor(maj, corr, 0.5, 0.5) == 1.0

    def test_minority_misclassified(self):
        assert beta_factor(False, False, 0.7, 0.3) == \
            pytest.approx(2 ** 0.4, rel=1e-9)
        assert beta_factor(False, False, 0.7, 0.3) == pytest.approx(1.3195,
                                                                    rel=1e-4)

    def test_minority_correct(self):
        assert beta_factor(False, True, 0.7, 0.3) == \
            pytest.approx(2 ** -0.4, rel=1e-9)
        assert beta_factor(False, True, 0.7, 0.3) == pytest.approx(0.7579,
                                                                   rel=1e-4)

    def test_majority_cells(self):
        assert beta_factor(True, True, 0.8, 0.2) == pytest.approx(2 ** 0.6)
        assert beta_factor(True, False, 0.8, 0.2) == pytest.approx(2 ** -0.6)

    def test_exponent_clamp(self):
        assert beta_factor(True, True, 100.0, 0.0) == 2.0 ** 10

    def test_invert_majority_swaps_majority_row(self):
        assert beta_factor(True, True, 0.8, 0.2, invert_majority=True) == \
            pytest.approx(2 ** -0.6)
        assert beta_factor(False, True, 0.8, 0.2, invert_majority=True) == \
            pytest.approx(beta_factor(False, True, 0.8, 0.2))


class TestUpdateWeights:
    def test_uniform_multiplier_cancels(self):
        w = np.full(4, 0.25)
        truth = np.array([0, 0, 0, 0])
        preds = truth.copy()
        out = update_weights(w, preds, truth, 1.3,
                             is_majority=[True, False, False, False, False])
        assert np.allclose(out, w)

    def test_identity_multipliers(self):
        # a_m = 0 with a partition where m == n: all multipliers are 1
        truth = np.array([0, 0, 1, 1])
        preds = np.array([0, 1, 1, 0])
        out = update_weights(np.full(4, 0.25), preds, truth, 0.0,
                             is_majority=[True, False, False, False, False])
        assert np.allclose(out, 0.25)

    def test_hand_normalized_single_error(self):
        # four equal weights, a_m = 0.5 ln 9, balanced partition (beta = 1),
        # one misclassified sample -> 9/12 and 1/12 each
        w = np.full(4, 0.25)
        truth = np.array([0, 0, 1, 1])
        preds = np.array([1, 0, 1, 1])
        out = update_weights(w, preds, truth, 0.5 * math.log(9.0),
                             is_majority=[True, False, False, False, False])
        assert out[0] == pytest.approx(0.75)
        assert np.allclose(out[1:], 1.0 / 12)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_misclassified_ratio_exceeds_correct(self):
        rng = np.random.default_rng(0)
        w = rng.random(20)
        w /= w.sum()
        truth = np.repeat(np.arange(5), 4)
        preds = truth.copy()
        preds[3] = (truth[3] + 1) % 5  # one class-0 sample wrong
        is_majority, _, _ = majority_partition(w, truth)
        out = update_weights(w, preds, truth, 0.7, is_majority)
        ratio = out / w
        same_class = truth == truth[3]
        wrong_ratio = ratio[3]
        right_ratios = ratio[same_class & (preds == truth)]
        assert np.all(wrong_ratio > right_ratios)

    def test_sum_and_positivity(self):
        rng = np.random.default_rng(4)
        w = init_weights(np.repeat(np.arange(5), [50, 10, 70, 3, 12]),
                         DEFAULT_CLASS_WEIGHTS)
        truth = np.repeat(np.arange(5), [50, 10, 70, 3, 12])
        for _ in range(20):
            preds = np.where(rng.random(truth.size) < 0.3,
                             rng.integers(0, 5, truth.size), truth)
            is_majority, _, _ = majority_partition(w, truth)
            w = update_weights(w, preds, truth, 0.9, is_majority)
            assert w.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(w > 0)


class TestMajorityPartition:
    def test_threshold_is_per_class_mean(self):
        labels = np.repeat(np.arange(5), [60, 10, 15, 10, 5])
        w = np.full(100, 0.01)
        is_majority, m, n = majority_partition(w, labels)
        assert list(is_majority) == [True, False, False, False, False]
        assert m == pytest.approx(0.6)
        assert n == pytest.approx(0.4)


class TestPerClassAccuracy:
    def test_perfect_tree(self):
        ds = synthetic_dataset([15] * 5, seed=0, n_features=6, noise=0.01,
                               informative=6)
        tree = train_tree(ds.X, ds.y, np.arange(6),
                          TreeConfig(max_depth=30, min_samples_leaf=1,
                                     max_features=None),
                          np.random.default_rng(0))
        assert np.allclose(per_class_accuracy(tree, ds), 1.0)

    def test_constant_tree(self):
        ds = synthetic_dataset([10] * 5, seed=1, n_features=4)
        tree = DecisionTree({"label": 0, "hist": [0] * 5})
        row = per_class_accuracy(tree, ds)
        assert row[0] == 1.0
        assert np.all(row[1:] == 0.0)

    def test_absent_class_is_error(self):
        ds = synthetic_dataset([5, 5, 5, 5, 5], seed=0, n_features=4)
        ds.y[ds.y == 4] = 3
        tree = DecisionTree({"label": 0, "hist": [0] * 5})
        with pytest.raises(ValueError, match="class 4"):
            per_class_accuracy(tree, ds)


def constant_forest(labels_per_tree, matrix):
    trees = [DecisionTree({"label": int(c), "hist": [0] * 5})
             for c in labels_per_tree]
    return Forest(trees=trees,
                  accuracy_matrix=np.asarray(matrix, dtype=np.float64),
                  mask=np.ones(3, dtype=np.uint8),
                  config=ForestConfig(n_trees=len(trees)))


class TestWeightedVote:
    def test_unanimity(self):
        matrix = np.random.default_rng(0).random((5, 3)) + 0.01
        forest = constant_forest([2, 2, 2], matrix)
        assert weighted_vote(forest, [0.0, 0.0, 0.0]) == 2

    def test_all_ones_matrix_is_majority_vote(self):
        forest = constant_forest([1, 1, 2], np.ones((5, 3)))
        assert weighted_vote(forest, [0.0, 0.0, 0.0]) == 1

    def test_two_tree_score_comparison(self):
        matrix = np.zeros((5, 2))
        matrix[1, 0] = 0.9  # tree 0 accuracy on class 1
        matrix[2, 1] = 0.4  # tree 1 accuracy on class 2
        forest = constant_forest([1, 2], matrix)
        assert weighted_vote(forest, [0.0, 0.0, 0.0]) == 1

    def test_tie_goes_to_lowest_code(self):
        forest = constant_forest([3, 1], np.ones((5, 2)))
        assert weighted_vote(forest, [0.0, 0.0, 0.0]) == 1


class TestFitAndPredict:
    def test_single_tree_forest_matches_tree(self):
        ds = synthetic_dataset([20] * 5, seed=2, n_features=8)
        mask = np.ones(8, dtype=np.uint8)
        forest = fit(ds, mask, ForestConfig(n_trees=1), seed=0)
        assert np.array_equal(predict_batch(forest, ds.X),
                              forest.trees[0].predict(ds.X))

    def test_deterministic(self):
        ds = synthetic_dataset([15] * 5, seed=4, n_features=8)
        mask = np.ones(8, dtype=np.uint8)
        a = fit(ds, mask, ForestConfig(n_trees=5), seed=3)
        b = fit(ds, mask, ForestConfig(n_trees=5), seed=3)
        assert np.array_equal(a.accuracy_matrix, b.accuracy_matrix)
        assert all(x.root == y.root for x, y in zip(a.trees, b.trees))

    def test_mask_restricts_splits(self):
        ds = synthetic_dataset([20] * 5, seed=5, n_features=10)
        mask = np.array([1, 0, 1, 0, 1, 0, 1, 0, 1, 0], dtype=np.uint8)
        forest = fit(ds, mask, ForestConfig(n_trees=3), seed=0)
        allowed = set(np.flatnonzero(mask))

        def features(node):
            if "label" in node:
                return set()
            return ({node["feature"]} | features(node["left"])
                    | features(node["right"]))

        for tree in forest.trees:
            assert features(tree.root) <= allowed

    def test_weight_history_invariants(self):
        ds = synthetic_dataset([30, 10, 40, 5, 15], seed=6, n_features=6)
        mask = np.ones(6, dtype=np.uint8)
        forest = fit(ds, mask, ForestConfig(n_trees=5), seed=1,
                     record_weights=True)
        assert len(forest.weight_history) == 6
        for w in forest.weight_history:
            assert w.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(w > 0)

    def test_baseline_degeneration(self):
        ds = synthetic_dataset([20] * 5, seed=7, n_features=6)
        mask = np.ones(6, dtype=np.uint8)
        cfg = ForestConfig.baseline(n_trees=4)
        forest = fit(ds, mask, cfg, seed=2)
        # uniform profile, no updates: every bootstrap is the classical
        # uniform one; the vote matrix degenerates to all ones
        assert np.all(forest.vote_matrix() == 1.0)
        preds = predict_batch(forest, ds.X)
        stacked = np.stack([t.predict(ds.X) for t in forest.trees])
        majority = np.array([np.argmax(np.bincount(col, minlength=5))
                             for col in stacked.T])
        assert np.array_equal(preds, majority)

    def test_empty_and_mismatched_inputs(self):
        ds = synthetic_dataset([10] * 5, seed=0, n_features=6)
        with pytest.raises(ValueError, match="empty feature mask"):
            fit(ds, np.zeros(6, dtype=np.uint8), ForestConfig(n_trees=1), 0)
        forest = fit(ds, np.ones(6, dtype=np.uint8),
                     ForestConfig(n_trees=1), 0)
        with pytest.raises(ValueError, match="feature columns"):
            predict_batch(forest, np.zeros((2, 9)))
        assert predict_batch(forest, np.zeros((0, 6))).size == 0

    def test_tree_error_carries_index(self):
        ds = synthetic_dataset([10, 10, 10, 10, 10], seed=0, n_features=6)
        ds.y[ds.y == 4] = 3  # class 4 absent -> per-class accuracy fails
        cfg = ForestConfig(n_trees=1, class_weights=None)
        with pytest.raises(RuntimeError, match="tree 0"):
            fit(ds, np.ones(6, dtype=np.uint8), cfg, 0)


class TestPersistence:
    def test_round_trip_identical_predictions(self, tmp_path):
        ds = synthetic_dataset([20] * 5, seed=8, n_features=8)
        mask = np.ones(8, dtype=np.uint8)
        forest = fit(ds, mask, ForestConfig(n_trees=5), seed=4)
        path = tmp_path / "model.json"
        save_forest(forest, path)
        loaded = load_forest(path)
        assert np.array_equal(predict_batch(loaded, ds.X),
                              predict_batch(forest, ds.X))
        assert np.array_equal(loaded.accuracy_matrix, forest.accuracy_matrix)
        path2 = tmp_path / "model2.json"
        save_forest(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{}")
        with pytest.raises(ValueError, match="not a flowgate model"):
            load_forest(path)
