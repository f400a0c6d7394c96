"""Metrics, random baselines, and heatmap export."""

import numpy as np
import pytest

from roadscore.evaluation import (
    ConfusionMatrix,
    TaskReport,
    analytic_random_macro,
    attention_heatmap,
    confusion,
    left_fraction_mass,
    macro_accuracy,
    minmax_normalize,
    predict_labels,
    random_baseline,
    random_baseline_trials,
    render_overlay,
    task_report,
    upsample_nearest,
    write_pgm,
    write_ppm,
)
from roadscore.model import NetworkConfig, PanoramaNetwork, TaskSpec

from oracles import analytic_prior_macro


def read_pnm(path):
    with open(path) as fh:
        tokens = fh.read().split()
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    depth = 3 if magic == "P3" else 1
    data = np.array(tokens[4:], dtype=np.int64)
    if depth == 1:
        return magic, data.reshape(h, w)
    return magic, data.reshape(h, w, 3)


class TestMacroAccuracy:
    def test_all_correct(self):
        labels = np.array([1, 2, 3, 4, 5] * 3)
        assert macro_accuracy(labels, labels, 5) == 100.0

    def test_constant_predictor_on_balanced_labels(self):
        labels = np.array([1, 2, 3, 4, 5] * 4)
        preds = np.ones_like(labels)
        assert macro_accuracy(preds, labels, 5) == pytest.approx(20.0)

    def test_hand_worked_recalls(self):
        labels = np.array([1, 1, 2, 2, 2])
        preds = np.array([1, 2, 2, 2, 1])
        # recalls: class1 = 1/2, class2 = 2/3
        expected = 100 * (0.5 + 2 / 3) / 2
        assert macro_accuracy(preds, labels, 2) == pytest.approx(expected)

    def test_absent_class_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            macro_accuracy(np.array([1, 2]), np.array([1, 2]), 3)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            macro_accuracy(np.array([0, 1]), np.array([1, 1]), 2)
        with pytest.raises(ValueError):
            macro_accuracy(np.array([1, 1]), np.array([1, 3]), 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            macro_accuracy(np.array([], dtype=int), np.array([], dtype=int), 2)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        labels = np.concatenate([np.arange(1, 6)] * 10)
        preds = rng.integers(1, 6, size=labels.size)
        base = macro_accuracy(preds, labels, 5)
        order = rng.permutation(labels.size)
        assert macro_accuracy(preds[order], labels[order], 5) == pytest.approx(base)

    def test_balanced_macro_equals_micro(self):
        rng = np.random.default_rng(1)
        labels = np.concatenate([np.full(30, c) for c in range(1, 6)])
        preds = rng.integers(1, 6, size=labels.size)
        macro = macro_accuracy(preds, labels, 5)
        micro = 100 * float((preds == labels).mean())
        assert macro == pytest.approx(micro)


class TestConfusion:
    def test_perfect_predictions_identity(self):
        labels = np.array([1, 2, 3, 1, 2, 3])
        cm = confusion(labels, labels, 3)
        assert np.array_equal(np.diag(cm.counts), [2, 2, 2])
        assert np.array_equal(cm.normalized(), np.eye(3))

    def test_single_predicted_class_single_column(self):
        labels = np.array([1, 2, 3])
        preds = np.array([2, 2, 2])
        cm = confusion(preds, labels, 3)
        assert cm.counts[:, 1].sum() == 3
        assert cm.counts.sum() == 3

    def test_row_sums_are_class_counts(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(1, 6, size=200)
        preds = rng.integers(1, 6, size=200)
        cm = confusion(preds, labels, 5)
        for c in range(1, 6):
            assert cm.counts[c - 1].sum() == int((labels == c).sum())

    def test_normalized_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        labels = np.concatenate([np.arange(1, 6)] * 8)
        preds = rng.integers(1, 6, size=labels.size)
        norm = confusion(preds, labels, 5).normalized()
        assert np.allclose(norm.sum(axis=1), 1.0)

    def test_diagonal_mean_matches_macro(self):
        rng = np.random.default_rng(4)
        labels = np.concatenate([np.arange(1, 6)] * 20)
        preds = rng.integers(1, 6, size=labels.size)
        cm = confusion(preds, labels, 5)
        macro = macro_accuracy(preds, labels, 5)
        assert cm.diagonal_mean() == pytest.approx(macro / 100)

    def test_empty_row_stays_zero(self):
        cm = ConfusionMatrix(np.array([[2, 0], [0, 0]]))
        norm = cm.normalized()
        assert norm[1].sum() == 0.0


class TestRandomBaseline:
    def test_uniform_binary_near_fifty(self):
        labels = np.array([1] * 30 + [2] * 30)
        est = random_baseline(np.array([10, 10]), labels, trials=10000, seed=0)
        assert est == pytest.approx(50.0, abs=1.0)

    def test_skewed_prior_analytic_is_still_mean(self):
        assert analytic_random_macro(np.array([90, 10])) == pytest.approx(50.0)
        assert analytic_random_macro(np.array([1, 1, 1, 1, 1])) == pytest.approx(20.0)
        assert analytic_prior_macro(np.array([0.9, 0.1])) == pytest.approx(50.0)

    def test_monte_carlo_within_three_stderr(self):
        labels = np.concatenate([np.full(40, 1), np.full(15, 2), np.full(5, 3)])
        hist = np.array([50, 30, 20])
        trials = random_baseline_trials(hist, labels, trials=4000, seed=5)
        se = trials.std(ddof=1) / np.sqrt(trials.size)
        analytic = analytic_random_macro(hist)
        assert abs(trials.mean() - analytic) <= 3 * se + 1e-9

    def test_deterministic_by_seed(self):
        labels = np.array([1, 1, 2, 2])
        a = random_baseline(np.array([3, 1]), labels, trials=100, seed=7)
        b = random_baseline(np.array([3, 1]), labels, trials=100, seed=7)
        assert a == b

    def test_zero_prior_class_never_predicted(self):
        labels = np.array([1] * 5 + [2] * 5)
        trials = random_baseline_trials(np.array([0, 10]), labels,
                                        trials=50, seed=0)
        # class 1 recall is always 0, class 2 always 1
        assert np.allclose(trials, 50.0)

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            random_baseline(np.array([1, 1]), np.array([1, 2]), trials=0)


class TestTaskReport:
    def test_increase_is_absolute_difference(self):
        r = TaskReport.from_scores("area_type", 97.40, 50.39)
        assert r.pct_increase == pytest.approx(47.01)

    def test_inconsistent_row_rejected(self):
        with pytest.raises(ValueError):
            TaskReport("x", 90.0, 50.0, 10.0)

    def test_task_report_wiring(self):
        labels = np.array([1, 2] * 10)
        r = task_report("demo", labels, labels, 2, np.array([10, 10]),
                        trials=200, seed=0)
        assert r.top1_macro == 100.0
        assert r.pct_increase == pytest.approx(r.top1_macro - r.random_macro)


NET_CFG = NetworkConfig(input_height=32, input_width=32, input_channels=3,
                        block_channels=(4, 8), mid_channels=16)


class TestHeatmap:
    def test_untrained_map_is_flat_and_sums_to_one(self):
        net = PanoramaNetwork([TaskSpec("star", 5)], NET_CFG, seed=0)
        grid = attention_heatmap(net, "star")
        assert grid.shape == NET_CFG.feature_shape
        assert grid.sum() == pytest.approx(1.0)
        assert np.allclose(grid, grid.flat[0])

    def test_unknown_task_rejected(self):
        net = PanoramaNetwork([TaskSpec("star", 5)], NET_CFG, seed=0)
        with pytest.raises(KeyError):
            attention_heatmap(net, "nope")

    def test_pgm_round_trip(self, tmp_path):
        net = PanoramaNetwork([TaskSpec("star", 5)], NET_CFG, seed=0)
        logits = net.heads["star"].attention
        logits.data = np.random.default_rng(0).standard_normal(logits.data.shape)
        path = str(tmp_path / "map.pgm")
        grid = attention_heatmap(net, "star", path=path)
        magic, pixels = read_pnm(path)
        assert magic == "P2"
        assert pixels.shape == grid.shape
        expected = np.rint(minmax_normalize(grid) * 255)
        assert np.array_equal(pixels, expected)

    def test_pgm_upsample(self, tmp_path):
        path = str(tmp_path / "up.pgm")
        write_pgm(np.array([[0.0, 1.0]]), path, upsample=3)
        _, pixels = read_pnm(path)
        assert pixels.shape == (3, 6)
        assert np.array_equal(pixels[:, :3], np.zeros((3, 3)))
        assert np.array_equal(pixels[:, 3:], np.full((3, 3), 255))

    def test_minmax_constant_goes_to_zero(self):
        out = minmax_normalize(np.full((2, 3), 0.4))
        assert np.array_equal(out, np.zeros((2, 3)))

    def test_upsample_identity(self):
        arr = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(upsample_nearest(arr, 1), arr)
        with pytest.raises(ValueError):
            upsample_nearest(arr, 0)

    def test_left_fraction_mass(self):
        grid = np.zeros((2, 6))
        grid[:, 0] = 1.0
        assert left_fraction_mass(grid) == pytest.approx(1.0)
        uniform = np.full((2, 6), 1 / 12)
        assert left_fraction_mass(uniform) == pytest.approx(1 / 3)

    def test_overlay_reddens_hot_region(self, tmp_path):
        image = np.full((8, 8, 3), 0.5, dtype=np.float64)
        heat = np.zeros((2, 2))
        heat[0, 0] = 1.0
        out = render_overlay(image, heat)
        assert out.dtype == np.uint8
        assert out.shape == (8, 8, 3)
        assert out[0, 0, 0] > out[0, 0, 1]
        assert out[7, 7, 0] == out[7, 7, 1]
        path = str(tmp_path / "overlay.ppm")
        write_ppm(out, path)
        magic, pixels = read_pnm(path)
        assert magic == "P3"
        assert np.array_equal(pixels, out)


class TestPredictLabels:
    def test_matches_manual_argmax_and_tie_rule(self):
        net = PanoramaNetwork([TaskSpec("star", 5)], NET_CFG, seed=3)
        rng = np.random.default_rng(0)
        images = rng.random((5, 32, 32, 3))
        preds = predict_labels(net, images, task="star")
        probs = net.predict_proba(images.astype(np.float64), task="star")
        assert np.array_equal(preds, np.argmax(probs, axis=1) + 1)
        assert preds.min() >= 1 and preds.max() <= 5

    def test_ties_pick_lowest_index(self):
        # fresh network with zero fc weights gives exactly uniform output
        net = PanoramaNetwork([TaskSpec("star", 5)], NET_CFG, seed=0)
        net.heads["star"].weight.data[:] = 0.0
        preds = predict_labels(net, np.random.default_rng(1).random((3, 32, 32, 3)))
        assert np.array_equal(preds, np.ones(3))
