"""Central finite-difference checks for every differentiable op.

Runs in 64-bit with h = 1e-5. Relative error uses a small denominator
floor so near-zero gradients stay meaningful: |a - n| / max(|a|, |n|, 1e-2).
Kinked ops (relu, max pool) get inputs nudged away from their kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .models import ModelConfig, build_segmentation_model
from .tensor import Tensor, backward, default_dtype, no_grad, reset_tape
from .training.loss import cross_entropy_loss

H_DEFAULT = 1e-5
ERROR_FLOOR = 1e-2


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    instances: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-4


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def _fd_check(forward, tensors, rng, h=H_DEFAULT, coords_per_tensor=None) -> float:
    """Max relative error between tape gradients and central differences.

    `forward` rebuilds the graph from the tensors' current buffers; FD
    mutates those buffers in place.
    """
    with no_grad():
        probe = forward()
    if probe.size == 1:
        weights = np.ones_like(probe.data)
    else:
        weights = rng.standard_normal(probe.shape)

    def scalar() -> float:
        with no_grad():
            return float((forward().data * weights).sum())

    reset_tape()
    for t in tensors:
        t.grad = None
    out = forward()
    loss = out if out.size == 1 else ops.weighted_sum(out, weights)
    backward(loss)

    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        if coords_per_tensor is None or coords_per_tensor >= flat.size:
            coords = range(flat.size)
        else:
            coords = rng.choice(flat.size, size=coords_per_tensor, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = scalar()
            flat[i] = orig - h
            fm = scalar()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            worst = max(worst, _rel_err(float(aflat[i]), numeric))
    return worst


def _separated(rng, shape):
    """Values whose pairwise gaps stay well above h (safe for argmax ops)."""
    base = np.round(rng.standard_normal(shape), 2)
    ramp = (np.arange(base.size) * 1.2345e-3).reshape(shape)
    return base + ramp


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return x + np.where(x >= 0, margin, -margin)


def _check_conv2d(rng, instances):
    worst = 0.0
    grids = [
        dict(stride=1, padding=1, dilation=1, groups=1, k=3, cin=3, cout=4),
        dict(stride=2, padding=1, dilation=1, groups=1, k=3, cin=4, cout=4),
        dict(stride=1, padding=2, dilation=2, groups=2, k=3, cin=4, cout=6),
        dict(stride=1, padding=0, dilation=1, groups=1, k=1, cin=3, cout=5),
        dict(stride=1, padding=6, dilation=6, groups=1, k=3, cin=2, cout=3),
        dict(stride=1, padding=1, dilation=1, groups=4, k=3, cin=4, cout=4),
    ]
    for i in range(instances):
        g = grids[i % len(grids)]
        x = Tensor(rng.standard_normal((2, g["cin"], 7, 7)), requires_grad=True)
        w = Tensor(
            rng.standard_normal((g["cout"], g["cin"] // g["groups"], g["k"], g["k"])) * 0.5,
            requires_grad=True,
        )
        b = Tensor(rng.standard_normal(g["cout"]) * 0.1, requires_grad=True)

        def forward():
            return ops.conv2d(x, w, b, stride=g["stride"], padding=g["padding"],
                              dilation=g["dilation"], groups=g["groups"])

        worst = max(worst, _fd_check(forward, [x, w, b], rng))
    return worst


def _check_batch_norm(rng, instances):
    worst = 0.0
    for i in range(instances):
        training = i % 2 == 0
        c = 3
        x = Tensor(rng.standard_normal((2, c, 4, 4)), requires_grad=True)
        gamma = Tensor(1.0 + 0.2 * rng.standard_normal(c), requires_grad=True)
        beta = Tensor(0.2 * rng.standard_normal(c), requires_grad=True)
        rm = Tensor(0.1 * rng.standard_normal(c))
        rv = Tensor(1.0 + 0.1 * rng.random(c))

        def forward():
            return ops.batch_norm2d(x, gamma, beta, rm, rv,
                                    training=training, momentum=0.1, epsilon=1e-5)

        worst = max(worst, _fd_check(forward, [x, gamma, beta], rng))
    return worst


def _check_relu(rng, instances):
    worst = 0.0
    for _ in range(instances):
        x = Tensor(_away_from_zero(rng, (2, 3, 5, 5)), requires_grad=True)
        worst = max(worst, _fd_check(lambda: ops.relu(x), [x], rng))
    return worst


def _check_max_pool(rng, instances):
    worst = 0.0
    for i in range(instances):
        k, s, p = [(2, 2, 0), (3, 2, 1), (3, 1, 1)][i % 3]
        x = Tensor(_separated(rng, (2, 2, 6, 6)), requires_grad=True)
        worst = max(worst, _fd_check(lambda: ops.max_pool2d(x, k, s, p), [x], rng))
    return worst


def _check_global_avg_pool(rng, instances):
    worst = 0.0
    for _ in range(instances):
        x = Tensor(rng.standard_normal((2, 3, 5, 4)), requires_grad=True)
        worst = max(worst, _fd_check(lambda: ops.global_avg_pool2d(x), [x], rng))
    return worst


def _check_bilinear(rng, instances):
    worst = 0.0
    sizes = [(3, 5, 6, 10), (4, 4, 9, 9), (5, 7, 5, 7), (2, 2, 8, 8)]
    for i in range(instances):
        h, w, oh, ow = sizes[i % len(sizes)]
        x = Tensor(rng.standard_normal((1, 2, h, w)), requires_grad=True)
        worst = max(worst, _fd_check(lambda: ops.bilinear_upsample(x, oh, ow), [x], rng))
    return worst


def _check_softmax(rng, instances):
    worst = 0.0
    for _ in range(instances):
        x = Tensor(rng.standard_normal((1, 4, 3, 3)), requires_grad=True)
        worst = max(worst, _fd_check(lambda: ops.softmax_channelwise(x), [x], rng))
    return worst


def _check_dropout(rng, instances):
    worst = 0.0
    for i in range(instances):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
        seed = 1000 + i

        def forward():
            return ops.dropout(x, 0.3, True, np.random.default_rng(seed))

        worst = max(worst, _fd_check(forward, [x], rng))
    return worst


def _check_add_concat(rng, instances):
    worst = 0.0
    for _ in range(instances):
        a = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
        c = Tensor(rng.standard_normal((1, 3, 3, 3)), requires_grad=True)

        def forward():
            return ops.concat_channels([ops.add(a, b), c])

        worst = max(worst, _fd_check(forward, [a, b, c], rng))
    return worst


def _check_cross_entropy(rng, instances):
    worst = 0.0
    for _ in range(instances):
        logits = Tensor(rng.standard_normal((2, 5, 3, 3)), requires_grad=True)
        target = rng.integers(0, 5, size=(2, 3, 3))
        worst = max(worst, _fd_check(lambda: cross_entropy_loss(logits, target), [logits], rng))
    return worst


OP_CHECKS = {
    "conv2d": _check_conv2d,
    "batch_norm2d": _check_batch_norm,
    "relu": _check_relu,
    "max_pool2d": _check_max_pool,
    "global_avg_pool2d": _check_global_avg_pool,
    "bilinear_upsample": _check_bilinear,
    "softmax_channelwise": _check_softmax,
    "dropout": _check_dropout,
    "add_concat": _check_add_concat,
    "cross_entropy": _check_cross_entropy,
}


def tiny_model_config(seed: int = 7) -> ModelConfig:
    """Minimal full pipeline: one block per stage, thin widths, v3+ head."""
    return ModelConfig(
        encoder="resnet18",
        decoder="deeplabv3plus",
        num_classes=5,
        base_width=8,
        stage_blocks=(1, 1, 1, 1),
        aspp_channels=16,
        low_level_channels=8,
        refine_channels=16,
        dropout_rate=0.1,
        seed=seed,
    )


def check_tiny_model(seed: int = 7, h: float = H_DEFAULT, coords_per_param: int = 2) -> float:
    """End-to-end FD check of the tiny encoder+ASPP+v3+ model on 1x3x32x32."""
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        model = build_segmentation_model(tiny_model_config(seed))
        x = rng.standard_normal((1, 3, 32, 32))
        target = rng.integers(0, 5, size=(1, 32, 32))
        model.train()

        def forward():
            # Re-seed dropout so the loss is a deterministic function of params.
            model.bind_rng(np.random.default_rng(4242))
            return cross_entropy_loss(model(Tensor(x)), target)

        params = [p for _, p in model.named_parameters()]
        return _fd_check(forward, params, rng, h=h, coords_per_tensor=coords_per_param)


def run_all(instances: int = 20, seed: int = 1234, include_model: bool = True) -> list[CheckResult]:
    results = []
    with default_dtype(np.float64):
        for index, (name, check) in enumerate(OP_CHECKS.items()):
            rng = np.random.default_rng(seed + 97 * index)
            results.append(CheckResult(name, check(rng, instances), instances))
    if include_model:
        results.append(CheckResult("tiny_model_end_to_end", check_tiny_model(seed=7), 1))
    return results
