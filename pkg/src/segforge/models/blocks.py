"""Building blocks: residual (basic/bottleneck) and MBConv/FusedMBConv."""

from __future__ import annotations

from dataclasses import dataclass

from .. import ops
from ..errors import ShapeError
from ..nn import BatchNorm2d, Conv2d, Module, ReLU


@dataclass
class BlockSpec:
    kind: str  # basic_residual | bottleneck_residual | mbconv | fused_mbconv
    in_channels: int
    out_channels: int
    stride: int = 1
    dilation: int = 1
    expansion: int = 1

    def __post_init__(self):
        valid = {"basic_residual", "bottleneck_residual", "mbconv", "fused_mbconv"}
        if self.kind not in valid:
            raise ShapeError(f"unknown block kind {self.kind!r}")
        if self.expansion < 1:
            raise ShapeError(f"expansion ratio must be >= 1, got {self.expansion}")

    @property
    def needs_projection(self) -> bool:
        return self.in_channels != self.out_channels or self.stride != 1


class ConvBN(Module):
    def __init__(self, cin, cout, k, rng, stride=1, dilation=1, groups=1, act=True):
        super().__init__()
        self.conv = Conv2d(cin, cout, k, rng, stride=stride,
                           padding=dilation * (k - 1) // 2, dilation=dilation,
                           groups=groups, bias=False)
        self.bn = BatchNorm2d(cout)
        self.act = ReLU() if act else None

    def forward(self, x):
        x = self.bn(self.conv(x))
        return self.act(x) if self.act is not None else x


class BasicBlock(Module):
    """conv3x3-BN-relu-conv3x3-BN plus shortcut, final relu."""

    def __init__(self, spec: BlockSpec, rng):
        super().__init__()
        self.conv1 = ConvBN(spec.in_channels, spec.out_channels, 3, rng,
                            stride=spec.stride, dilation=spec.dilation)
        self.conv2 = ConvBN(spec.out_channels, spec.out_channels, 3, rng,
                            dilation=spec.dilation, act=False)
        if spec.needs_projection:
            self.shortcut = ConvBN(spec.in_channels, spec.out_channels, 1, rng,
                                   stride=spec.stride, act=False)
        else:
            self.shortcut = None

    def forward(self, x):
        residual = self.conv2(self.conv1(x))
        identity = self.shortcut(x) if self.shortcut is not None else x
        return ops.relu(ops.add(residual, identity))


class BottleneckBlock(Module):
    """conv1x1-BN-relu-conv3x3-BN-relu-conv1x1(4x)-BN plus shortcut, final relu."""

    EXPANSION = 4

    def __init__(self, spec: BlockSpec, rng):
        super().__init__()
        mid = spec.out_channels // self.EXPANSION
        if mid * self.EXPANSION != spec.out_channels:
            raise ShapeError(
                f"bottleneck out_channels {spec.out_channels} must be divisible by 4"
            )
        self.conv1 = ConvBN(spec.in_channels, mid, 1, rng)
        self.conv2 = ConvBN(mid, mid, 3, rng, stride=spec.stride, dilation=spec.dilation)
        self.conv3 = ConvBN(mid, spec.out_channels, 1, rng, act=False)
        if spec.needs_projection:
            self.shortcut = ConvBN(spec.in_channels, spec.out_channels, 1, rng,
                                   stride=spec.stride, act=False)
        else:
            self.shortcut = None

    def forward(self, x):
        residual = self.conv3(self.conv2(self.conv1(x)))
        identity = self.shortcut(x) if self.shortcut is not None else x
        return ops.relu(ops.add(residual, identity))


class MBConvBlock(Module):
    """1x1 expand -> 3x3 depthwise -> 1x1 project, residual when shapes allow."""

    def __init__(self, spec: BlockSpec, rng):
        super().__init__()
        expanded = spec.in_channels * spec.expansion
        self.expand = ConvBN(spec.in_channels, expanded, 1, rng)
        self.depthwise = ConvBN(expanded, expanded, 3, rng, stride=spec.stride,
                                dilation=spec.dilation, groups=expanded)
        self.project = ConvBN(expanded, spec.out_channels, 1, rng, act=False)
        self.use_residual = spec.stride == 1 and spec.in_channels == spec.out_channels

    def forward(self, x):
        out = self.project(self.depthwise(self.expand(x)))
        return ops.add(out, x) if self.use_residual else out


class FusedMBConvBlock(Module):
    """Single 3x3 conv at expanded width -> 1x1 project, residual when allowed."""

    def __init__(self, spec: BlockSpec, rng):
        super().__init__()
        expanded = spec.in_channels * spec.expansion
        self.fused = ConvBN(spec.in_channels, expanded, 3, rng, stride=spec.stride,
                            dilation=spec.dilation)
        self.project = ConvBN(expanded, spec.out_channels, 1, rng, act=False)
        self.use_residual = spec.stride == 1 and spec.in_channels == spec.out_channels

    def forward(self, x):
        out = self.project(self.fused(x))
        return ops.add(out, x) if self.use_residual else out


_BLOCK_TYPES = {
    "basic_residual": BasicBlock,
    "bottleneck_residual": BottleneckBlock,
    "mbconv": MBConvBlock,
    "fused_mbconv": FusedMBConvBlock,
}


def build_block(spec: BlockSpec, rng) -> Module:
    return _BLOCK_TYPES[spec.kind](spec, rng)
