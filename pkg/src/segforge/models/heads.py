"""ASPP and the two segmentation heads."""

from __future__ import annotations

import numpy as np

from .. import ops
from ..errors import ShapeError
from ..nn import Conv2d, Dropout, Module, ModuleList
from .blocks import ConvBN

ASPP_RATES = (1, 6, 12, 18)


def _derived_rng(rng: np.random.Generator) -> np.random.Generator:
    return np.random.default_rng(int(rng.integers(0, 2**63)))


class Classifier(Module):
    """Final 1x1 conv to class logits; carries a bias (no BN follows)."""

    def __init__(self, in_channels, num_classes, rng):
        super().__init__()
        self.conv = Conv2d(in_channels, num_classes, 1, rng, bias=True)

    def forward(self, x):
        return self.conv(x)


class ASPP(Module):
    """Four atrous branches (rate 1 realized as 1x1) plus the pooling branch,
    concatenated and fused by a 1x1 conv, then dropout."""

    def __init__(self, in_channels, out_channels, rng, rates=ASPP_RATES, dropout_rate=0.1):
        super().__init__()
        rates = tuple(rates)
        if len(rates) != 4:
            raise ShapeError(f"ASPP expects exactly four atrous rates, got {rates}")
        self.branches = ModuleList()
        for rate in rates:
            if rate == 1:
                self.branches.append(ConvBN(in_channels, out_channels, 1, rng))
            else:
                self.branches.append(ConvBN(in_channels, out_channels, 3, rng, dilation=rate))
        self.pool_conv = ConvBN(in_channels, out_channels, 1, rng)
        self.fuse = ConvBN(5 * out_channels, out_channels, 1, rng)
        self.dropout = Dropout(dropout_rate, _derived_rng(rng))

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        outs = [branch(x) for branch in self.branches]
        pooled = self.pool_conv(ops.global_avg_pool2d(x))
        outs.append(ops.bilinear_upsample(pooled, h, w))
        fused = self.fuse(ops.concat_channels(outs))
        return self.dropout(fused)


class DeepLabV3Head(Module):
    """1x1 classifier on ASPP output, bilinear upsample straight to target."""

    def __init__(self, aspp_channels, num_classes, rng):
        super().__init__()
        self.classifier = Classifier(aspp_channels, num_classes, rng)

    def forward(self, aspp_out, low_level, target_hw):
        logits = self.classifier(aspp_out)
        return ops.bilinear_upsample(logits, *target_hw)


class DeepLabV3PlusHead(Module):
    """Upsample ASPP output to the stride-4 tap, concat with the reduced
    low-level features, refine with two 3x3 convs, classify, upsample."""

    def __init__(self, aspp_channels, low_level_in, num_classes, rng,
                 low_level_channels=48, refine_channels=256, dropout_rate=0.1):
        super().__init__()
        self.reduce = ConvBN(low_level_in, low_level_channels, 1, rng)
        self.refine1 = ConvBN(aspp_channels + low_level_channels, refine_channels, 3, rng)
        self.refine2 = ConvBN(refine_channels, refine_channels, 3, rng)
        self.dropout = Dropout(dropout_rate, _derived_rng(rng))
        self.classifier = Classifier(refine_channels, num_classes, rng)

    def forward(self, aspp_out, low_level, target_hw):
        if low_level is None:
            raise ShapeError("deeplabv3plus requires the stride-4 low-level tap")
        th, tw = low_level.shape[2], low_level.shape[3]
        ah, aw = aspp_out.shape[2], aspp_out.shape[3]
        if th % ah != 0 or tw % aw != 0 or (th // ah) != (tw // aw):
            raise ShapeError(
                f"low-level tap {(th, tw)} is not an integer upsample of ASPP output {(ah, aw)}"
            )
        up = ops.bilinear_upsample(aspp_out, th, tw)
        merged = ops.concat_channels([up, self.reduce(low_level)])
        refined = self.dropout(self.refine2(self.refine1(merged)))
        logits = self.classifier(refined)
        return ops.bilinear_upsample(logits, *target_hw)
