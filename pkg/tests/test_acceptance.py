"""Acceptance suite: the project's exit criteria, one test each.

The conftest summary hook prints one PASS/FAIL line per criterion after the
run. Numbered test names keep the mapping explicit.
"""

import math
import time

import numpy as np
import pytest

from segforge import Tensor, backward, no_grad
from segforge.data import (
    ClassScheme,
    SegmentationSample,
    compute_normalization_stats,
    kfold,
    pad_to_target,
    split_train_val,
    synth_samples,
)
from segforge.evaluation import (
    ConfusionMatrix,
    build_report,
    class_iou,
    emit_report,
    format_fold_summary,
    mean_iou,
)
from segforge.gradcheck import run_all
from segforge.models import ModelConfig, build_segmentation_model
from segforge.training import (
    TrainConfig,
    cross_entropy_loss,
    evaluate_loss_and_miou,
    fit,
    load_checkpoint,
    poly_lr,
    save_checkpoint,
)
from oracles import naive_conv2d, set_based_iou


def test_c01_gradient_suite():
    start = time.time()
    results = run_all(instances=20, include_model=True)
    elapsed = time.time() - start
    names = {r.name for r in results}
    assert "tiny_model_end_to_end" in names
    for r in results:
        assert r.max_rel_error < 1e-4, f"{r.name}: {r.max_rel_error:.3e}"
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"


def test_c02_convolution_oracle():
    from segforge import ops

    rng = np.random.default_rng(7)
    grid = [
        # (k, s, d, groups)
        (1, 1, 1, 1), (3, 1, 1, 1), (3, 2, 1, 1), (3, 1, 2, 2),
        (3, 1, 6, 1), (3, 1, 12, 1), (3, 1, 18, 1), (3, 2, 2, 4),
    ]
    for k, s, d, groups in grid:
        cin, cout = 4, 4
        size = max(2 * d + k, 9)
        x = rng.standard_normal((1, cin, size, size))
        w = rng.standard_normal((cout, cin // groups, k, k)) * 0.3
        p = d * (k - 1) // 2
        got = ops.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64),
                         stride=s, padding=p, dilation=d, groups=groups).data
        ref = naive_conv2d(x, w, stride=s, padding=p, dilation=d, groups=groups)
        scale = np.maximum(np.abs(ref), 1e-6)
        assert float((np.abs(got - ref) / scale).max()) < 1e-6, (k, s, d, groups)


def test_c03_iou_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        t = rng.integers(0, 5, size=(8, 8))
        p = rng.integers(0, 5, size=(8, 8))
        cm = ConfusionMatrix(5).update(p, t)
        for k in range(5):
            expected = set_based_iou(t, p, k)
            got = class_iou(cm, k)
            assert (np.isnan(expected) and np.isnan(got)) or got == expected
    ident = rng.integers(0, 5, size=(8, 8))
    assert mean_iou(ConfusionMatrix(5).update(ident, ident)) == 1.0
    cm = ConfusionMatrix(2).update(np.array([1, 1, 1]), np.array([1, 0, 0]))
    assert class_iou(cm, 1) == 1 / 3


def test_c04_poly_schedule():
    for e in (0, 1, 50, 99):
        expected = 1e-2 * (1.0 - e / 100) ** 0.9
        assert abs(poly_lr(e, 1e-2, 0.9, 100, 1e-6) - expected) < 1e-12
    assert abs(poly_lr(50, 1e-2, 0.9, 100, 1e-6) - 5.3589e-3) < 1e-7
    assert poly_lr(100, 1e-2, 0.9, 100, 1e-6) == 1e-6


def test_c05_cross_entropy_loss():
    logits = Tensor(np.zeros((2, 5, 4, 4), dtype=np.float64))
    loss = cross_entropy_loss(logits, np.zeros((2, 4, 4), dtype=np.int64))
    assert abs(loss.item() - math.log(5.0)) < 1e-9

    rng = np.random.default_rng(3)
    z = rng.standard_normal((1, 5, 3, 3))
    target = rng.integers(0, 5, size=(1, 3, 3))
    logits = Tensor(z, requires_grad=True, dtype=np.float64)
    backward(cross_entropy_loss(logits, target))
    ez = np.exp(z - z.max(axis=1, keepdims=True))
    softmax = ez / ez.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(softmax)
    np.put_along_axis(onehot, target[:, None], 1.0, axis=1)
    assert float(np.abs(logits.grad * 9.0 - (softmax - onehot)).max()) < 1e-6


def test_c06_padding():
    rng = np.random.default_rng(5)
    sample = SegmentationSample(
        image=rng.random((650, 1250, 1), dtype=np.float32),
        mask=rng.integers(1, 5, size=(650, 1250)).astype(np.uint8),
        id="padcase",
        original_hw=(650, 1250),
    )
    patch = np.full((16, 16, 1), 0.2, dtype=np.float32)
    padded = pad_to_target(sample, (672, 1280), patch)
    assert padded.image.shape[:2] == (672, 1280)
    top, left = padded.pad_offset
    assert (left, 1280 - 1250 - left, top, 672 - 650 - top) == (15, 15, 11, 11)
    np.testing.assert_array_equal(
        padded.image[top : top + 650, left : left + 1250], sample.image)
    border = np.ones((672, 1280), dtype=bool)
    border[top : top + 650, left : left + 1250] = False
    assert np.all(padded.mask[border] == 0)


def test_c07_splits():
    ids = [f"img{i:04d}" for i in range(1002)]
    plan = split_train_val(ids, 0.05, seed=3)
    assert (len(plan.train_ids), len(plan.val_ids)) == (951, 51)

    folds = kfold(ids, k=5, seed=3)
    sizes = sorted((len(folds.fold_ids(f)) for f in range(5)), reverse=True)
    assert sizes == [201, 201, 200, 200, 200]
    union = set()
    for f in range(5):
        union |= set(folds.fold_ids(f))
    assert union == set(ids)

    again = kfold(ids, k=5, seed=3)
    assert folds.fold_assignments == again.fold_assignments


@pytest.mark.slow
def test_c08_toy_overfit(tmp_path):
    import json

    from segforge.cli import main as cli_main
    from segforge.data import load_dataset, synth_generate
    from segforge.evaluation import predict_mask

    start = time.time()
    scheme = ClassScheme()
    data_dir = tmp_path / "data"
    synth_generate(16, (64, 64), 7, data_dir, scheme)
    samples = load_dataset(data_dir, scheme)
    stats = compute_normalization_stats(samples)
    config = ModelConfig(
        encoder="resnet18", decoder="deeplabv3plus",
        base_width=24, aspp_channels=48, low_level_channels=24,
        refine_channels=64, dropout_rate=0.1, seed=11,
    )
    model = build_segmentation_model(config)
    # 200 steps: full batch of 16 for 200 epochs; flips off to memorize the
    # fixed set.
    train_config = TrainConfig(
        epochs=200, batch_size=16, lr0=0.01, momentum=0.9, weight_decay=1e-4,
        power=0.9, min_lr=1e-6, seed=11, p_hflip=0.0, p_vflip=0.0,
    )
    out_dir = tmp_path / "run"
    preprocessing = {"stats": stats.to_dict(), "pad_hw": [64, 64]}
    logs, _ = fit(model, samples, samples[:2], train_config, stats,
                  out_dir=out_dir, preprocessing=preprocessing)
    final_loss, train_miou = evaluate_loss_and_miou(model, samples, stats, 16)
    elapsed = time.time() - start
    assert logs[-1].train_loss < 0.1, f"final train loss {logs[-1].train_loss:.4f}"
    assert final_loss < 0.1, f"eval-mode train loss {final_loss:.4f}"
    assert train_miou > 0.95, f"train m-IoU {train_miou:.4f}"
    assert elapsed < 600.0, f"overfit run took {elapsed:.1f}s"

    # Evaluating the just-trained checkpoint on its own training set through
    # the CLI reproduces the overfit quality.
    report_dir = tmp_path / "eval"
    rc = cli_main(["evaluate", "--checkpoint", str(out_dir / "checkpoints" / "last.ckpt"),
                   "--data-root", str(data_dir), "--out", str(report_dir)])
    assert rc == 0
    report = json.loads((report_dir / "report.json").read_text())
    assert report["miou_percent"] > 95.0

    # An all-sea input comes back dominated by the sea class.
    rng = np.random.default_rng(0)
    all_sea = SegmentationSample(
        image=np.clip(0.10 + rng.gamma(5.0, 0.03, size=(64, 64, 1)), 0, 1).astype(np.float32),
        mask=np.zeros((64, 64), dtype=np.uint8),
        id="allsea",
        original_hw=(64, 64),
    )
    predicted = predict_mask(model, all_sea, stats)
    assert float((predicted == 0).mean()) > 0.8


def test_c09_trajectory_reproducibility(tmp_path):
    def build():
        return build_segmentation_model(ModelConfig(
            encoder="resnet18", decoder="deeplabv3plus", base_width=8,
            stage_blocks=(1, 1, 1, 1), aspp_channels=8, low_level_channels=4,
            refine_channels=8, seed=21))

    samples = synth_samples(6, (32, 32), seed=13)
    stats = compute_normalization_stats(samples)
    config = TrainConfig(epochs=4, batch_size=3, seed=21)

    _, straight = fit(build(), samples[:4], samples[4:], config, stats)

    _, half = fit(build(), samples[:4], samples[4:], config, stats, end_epoch=2)
    path = tmp_path / "half.ckpt"
    save_checkpoint(half, path)
    _, resumed = fit(build(), samples[:4], samples[4:], config, stats,
                     resume=load_checkpoint(path))

    assert set(straight.params) == set(resumed.params)
    for name, arr in straight.params.items():
        np.testing.assert_array_equal(resumed.params[name], arr, err_msg=name)
    for name, arr in straight.buffers.items():
        np.testing.assert_array_equal(resumed.buffers[name], arr, err_msg=name)
    for name, arr in straight.velocities.items():
        np.testing.assert_array_equal(resumed.velocities[name], arr, err_msg=name)


@pytest.mark.slow
@pytest.mark.parametrize("encoder", ["resnet18", "resnet34", "resnet50", "resnet101"])
@pytest.mark.parametrize("decoder", ["deeplabv3", "deeplabv3plus"])
def test_c10_end_to_end_shapes(encoder, decoder):
    model = build_segmentation_model(ModelConfig(encoder=encoder, decoder=decoder, seed=0))
    model.eval()
    for h, w in ((64, 64), (672, 1280)):
        with no_grad():
            out = model(Tensor(np.zeros((1, 3, h, w), dtype=np.float32)))
        assert out.shape == (1, 5, h, w), (encoder, decoder, h, w)


def test_c11_report_formats(tmp_path):
    summary = format_fold_summary([67.345 - 1.407, 67.345 + 1.407])
    assert summary == "67.345 ± 1.407"

    mask = np.random.default_rng(17).integers(0, 5, size=(12, 12))
    report = build_report(ConfusionMatrix(5).update(mask, mask),
                          ClassScheme().names, num_images=1)
    csv_path, _ = emit_report(report, tmp_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "class,iou_percent"
    assert [l.split(",")[0] for l in lines[1:]] == [
        "sea_surface", "oil_spill", "oil_spill_lookalike", "ship", "land", "mean"]
