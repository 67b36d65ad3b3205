"""Confusion matrix, IoU oracles, evaluation runs, and report formats."""

import json

import numpy as np
import pytest

from segforge import Tensor
from segforge.data import ClassScheme, compute_normalization_stats, synth_samples
from segforge.errors import DataError, ShapeError
from segforge.evaluation import (
    ConfusionMatrix,
    build_report,
    class_iou,
    cross_validate,
    emit_cross_validation,
    emit_learning_curves,
    emit_report,
    evaluate_model,
    format_fold_summary,
    mean_iou,
    per_class_iou,
)
from segforge.models import ModelConfig, build_segmentation_model
from segforge.training import EpochLog, TrainConfig

from oracles import set_based_iou


class TestConfusionMatrix:
    def test_identical_masks_fill_diagonal(self):
        cm = ConfusionMatrix(5)
        mask = np.full((2, 2), 1, dtype=np.int64)
        cm.update(mask, mask)
        assert cm.counts[1, 1] == 4
        assert cm.total == 4

    def test_enumerated_example(self):
        cm = ConfusionMatrix(2)
        cm.update(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]))
        assert cm.counts[0, 0] == 1
        assert cm.counts[0, 1] == 1
        assert cm.counts[1, 1] == 2

    def test_merge_equals_whole(self):
        rng = np.random.default_rng(0)
        t = rng.integers(0, 5, size=(10, 10))
        p = rng.integers(0, 5, size=(10, 10))
        whole = ConfusionMatrix(5).update(p, t)
        left = ConfusionMatrix(5).update(p[:5], t[:5])
        right = ConfusionMatrix(5).update(p[5:], t[5:])
        np.testing.assert_array_equal(left.merge(right).counts, whole.counts)

    def test_range_violation_rejected(self):
        cm = ConfusionMatrix(3)
        with pytest.raises(ShapeError):
            cm.update(np.array([3]), np.array([0]))


class TestIoU:
    def test_perfect_prediction(self):
        mask = np.random.default_rng(1).integers(0, 5, size=(8, 8))
        cm = ConfusionMatrix(5).update(mask, mask)
        assert mean_iou(cm) == 1.0
        for k in np.unique(mask):
            assert class_iou(cm, int(k)) == 1.0

    def test_one_intersection_three_union(self):
        cm = ConfusionMatrix(2).update(np.array([1, 1, 1]), np.array([1, 0, 0]))
        assert class_iou(cm, 1) == 1 / 3

    def test_set_oracle_equivalence_100_trials(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            t = rng.integers(0, 5, size=(8, 8))
            p = rng.integers(0, 5, size=(8, 8))
            cm = ConfusionMatrix(5).update(p, t)
            for k in range(5):
                expected = set_based_iou(t, p, k)
                got = class_iou(cm, k)
                if np.isnan(expected):
                    assert np.isnan(got)
                else:
                    assert got == expected  # exact, both are integer ratios

    def test_iou_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            cm = ConfusionMatrix(4).update(
                rng.integers(0, 4, size=(6, 6)), rng.integers(0, 4, size=(6, 6))
            )
            for v in per_class_iou(cm):
                assert np.isnan(v) or 0.0 <= v <= 1.0

    def test_swap_symmetry(self):
        rng = np.random.default_rng(4)
        t = rng.integers(0, 4, size=(9, 9))
        p = rng.integers(0, 4, size=(9, 9))
        a = per_class_iou(ConfusionMatrix(4).update(p, t))
        b = per_class_iou(ConfusionMatrix(4).update(t, p))
        np.testing.assert_allclose(a, b)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        t = rng.integers(0, 4, size=(9, 9))
        p = rng.integers(0, 4, size=(9, 9))
        perm = np.array([2, 0, 3, 1])
        base = per_class_iou(ConfusionMatrix(4).update(p, t))
        permuted = per_class_iou(ConfusionMatrix(4).update(perm[p], perm[t]))
        for k in range(4):
            a, b = base[k], permuted[perm[k]]
            assert (np.isnan(a) and np.isnan(b)) or a == b
        assert mean_iou(ConfusionMatrix(4).update(p, t)) == pytest.approx(
            mean_iou(ConfusionMatrix(4).update(perm[p], perm[t])))

    def test_absent_class_excluded_from_mean(self):
        cm = ConfusionMatrix(3).update(np.array([0, 0]), np.array([0, 0]))
        assert mean_iou(cm) == 1.0  # classes 1, 2 absent on both sides

    def test_all_absent_rejected(self):
        with pytest.raises(ShapeError):
            mean_iou(ConfusionMatrix(2))


class PerfectStub:
    """Model stand-in that returns one-hot logits matching the sample mask."""

    class _Cfg:
        num_classes = 5

    config = _Cfg()
    training = False

    def __init__(self, mask_by_call):
        self.masks = list(mask_by_call)
        self.calls = 0

    def eval(self):
        return self

    def __call__(self, x):
        mask = self.masks[self.calls % len(self.masks)]
        self.calls += 1
        logits = np.zeros((1, 5, *mask.shape), dtype=np.float32)
        for k in range(5):
            logits[0, k][mask == k] = 10.0
        return Tensor(logits)


class TestEvaluateModel:
    def test_perfect_stub_scores_100(self):
        scheme = ClassScheme()
        samples = synth_samples(3, (32, 32), seed=6)
        stats = compute_normalization_stats(samples)
        stub = PerfectStub([s.mask for s in samples])
        report = evaluate_model(stub, samples, stats, scheme)
        assert report.miou_percent == pytest.approx(100.0)
        assert report.num_images == 3

    def test_report_rows_follow_published_order(self):
        scheme = ClassScheme()
        samples = synth_samples(2, (32, 32), seed=7)
        stats = compute_normalization_stats(samples)
        report = evaluate_model(PerfectStub([s.mask for s in samples]), samples, stats, scheme)
        assert report.class_names == (
            "sea_surface", "oil_spill", "oil_spill_lookalike", "ship", "land")

    def test_argmax_tie_takes_lowest_class(self):
        logits = np.zeros((1, 5, 2, 2), dtype=np.float32)  # all-equal logits
        assert np.all(np.argmax(logits, axis=1) == 0)

    def test_threads_do_not_change_result(self):
        scheme = ClassScheme()
        samples = synth_samples(6, (32, 32), seed=8)
        stats = compute_normalization_stats(samples)
        cfg = ModelConfig(base_width=8, stage_blocks=(1, 1, 1, 1), aspp_channels=8,
                          low_level_channels=4, refine_channels=8, seed=1)
        model = build_segmentation_model(cfg)
        serial = evaluate_model(model, samples, stats, scheme, threads=1)
        parallel = evaluate_model(model, samples, stats, scheme, threads=4)
        assert serial.class_iou_percent == pytest.approx(parallel.class_iou_percent, nan_ok=True)
        assert serial.miou_percent == parallel.miou_percent

    def test_missing_stats_rejected(self):
        scheme = ClassScheme()
        samples = synth_samples(1, (32, 32), seed=9)
        with pytest.raises(DataError, match="stats"):
            evaluate_model(PerfectStub([samples[0].mask]), samples, None, scheme)

    def test_mask_emission(self, tmp_path):
        scheme = ClassScheme()
        samples = synth_samples(2, (32, 32), seed=10)
        stats = compute_normalization_stats(samples)
        evaluate_model(PerfectStub([s.mask for s in samples]), samples, stats, scheme,
                       masks_dir=tmp_path)
        assert sorted(p.name for p in tmp_path.glob("*.png")) == [
            "synth_0000.png", "synth_0001.png"]


class TestCrossValidate:
    def test_toy_three_folds(self):
        scheme = ClassScheme()
        samples = synth_samples(6, (32, 32), seed=11)
        mc = ModelConfig(base_width=8, stage_blocks=(1, 1, 1, 1), aspp_channels=8,
                         low_level_channels=4, refine_channels=8, seed=2)
        tc = TrainConfig(epochs=1, batch_size=2, seed=2)
        mious, summary = cross_validate(samples, mc, tc, scheme, k=3)
        assert len(mious) == 3
        assert all(np.isfinite(m) for m in mious)
        mean = np.mean(mious)
        std = np.std(mious)
        assert summary == f"{mean:.3f} ± {std:.3f}"

    def test_k2_on_four_images(self):
        scheme = ClassScheme()
        samples = synth_samples(4, (32, 32), seed=12)
        mc = ModelConfig(base_width=8, stage_blocks=(1, 1, 1, 1), aspp_channels=8,
                         low_level_channels=4, refine_channels=8, seed=3)
        tc = TrainConfig(epochs=1, batch_size=2, seed=3)
        mious, _ = cross_validate(samples, mc, tc, scheme, k=2)
        assert len(mious) == 2

    def test_summary_format_three_decimals(self):
        # mean 67.3483, population std sqrt(0.697673) = 0.8353
        assert format_fold_summary([67.0, 68.5, 66.545]) == "67.348 ± 0.835"
        text = format_fold_summary([50.0, 50.0])
        left, sep, right = text.partition(" ± ")
        assert sep and len(left.split(".")[1]) == 3 and len(right.split(".")[1]) == 3


class TestReports:
    def _report(self):
        mask = np.random.default_rng(13).integers(0, 5, size=(16, 16))
        cm = ConfusionMatrix(5).update(mask, mask)
        return build_report(cm, ClassScheme().names, num_images=1)

    def test_csv_header_and_mean_row(self, tmp_path):
        csv_path, _ = emit_report(self._report(), tmp_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "class,iou_percent"
        assert lines[1].startswith("sea_surface,")
        assert lines[-1].startswith("mean,")
        assert len(lines) == 7

    def test_json_roundtrip(self, tmp_path):
        report = self._report()
        _, json_path = emit_report(report, tmp_path)
        parsed = json.loads(json_path.read_text())
        assert parsed == report.to_dict()
        assert parsed["miou_percent"] == pytest.approx(100.0)

    def test_curve_csv_row_count(self, tmp_path):
        logs = [EpochLog(e, 1.0 / (e + 1), 1.1 / (e + 1), 0.5, 1e-2) for e in range(7)]
        path = emit_learning_curves(logs, tmp_path / "curves.csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_miou,lr"
        assert len(lines) == 8

    def test_crossval_emission(self, tmp_path):
        csv_path, json_path = emit_cross_validation([61.0, 62.0], "61.500 ± 0.500", tmp_path)
        assert "summary,61.500 ± 0.500" in csv_path.read_text()
        parsed = json.loads(json_path.read_text())
        assert parsed["fold_miou_percent"] == [61.0, 62.0]
