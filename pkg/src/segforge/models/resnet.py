"""Residual encoders: 7x7/2 stem + maxpool + four stages, dilated tail.

At output stride 16 the final stage trades its stride for dilation 2; at
output stride 8 the last two stages do (dilations 2 and 4). The feature map
after stage 1 (overall stride 4) is exposed as the low-level tap.
"""

from __future__ import annotations

from ..errors import ShapeError
from ..nn import MaxPool2d, Module, ModuleList
from .blocks import BlockSpec, ConvBN, build_block

STAGE_BLOCKS = {18: (2, 2, 2, 2), 34: (3, 4, 6, 3), 50: (3, 4, 6, 3), 101: (3, 4, 23, 3)}
BOTTLENECK_DEPTHS = (50, 101)


class ResNetEncoder(Module):
    def __init__(self, depth: int, rng, output_stride: int = 16,
                 base_width: int = 64, stage_blocks=None):
        super().__init__()
        if depth not in STAGE_BLOCKS:
            raise ShapeError(f"unsupported encoder depth {depth}")
        if output_stride not in (8, 16):
            raise ShapeError(f"output stride must be 8 or 16, got {output_stride}")
        blocks_per_stage = tuple(stage_blocks) if stage_blocks else STAGE_BLOCKS[depth]
        if len(blocks_per_stage) != 4 or any(b < 1 for b in blocks_per_stage):
            raise ShapeError(f"stage blocks must be four positive counts, got {blocks_per_stage}")
        bottleneck = depth in BOTTLENECK_DEPTHS
        kind = "bottleneck_residual" if bottleneck else "basic_residual"
        expansion = 4 if bottleneck else 1

        self.stem = ConvBN(3, base_width, 7, rng, stride=2)
        self.pool = MaxPool2d(3, stride=2, padding=1)

        # Per-stage (stride, dilation): stage strides 1,2,2,2 at stride 32;
        # dilated stages replace their stride to hit the requested OS.
        if output_stride == 16:
            plan = [(1, 1), (2, 1), (2, 1), (1, 2)]
        else:
            plan = [(1, 1), (2, 1), (1, 2), (1, 4)]

        widths = [base_width * (2 ** i) * expansion for i in range(4)]
        self.stages = ModuleList()
        cin = base_width
        for stage_idx, (count, (stride, dilation)) in enumerate(zip(blocks_per_stage, plan)):
            stage = ModuleList()
            for b in range(count):
                spec = BlockSpec(kind, cin, widths[stage_idx],
                                 stride=stride if b == 0 else 1, dilation=dilation)
                stage.append(build_block(spec, rng))
                cin = widths[stage_idx]
            self.stages.append(stage)

        self.out_channels = widths[3]
        self.low_level_channels = widths[0]

    def forward(self, x):
        """Returns (final features, stride-4 low-level tap)."""
        x = self.pool(self.stem(x))
        low_level = None
        for i, stage in enumerate(self.stages):
            for block in stage:
                x = block(x)
            if i == 0:
                low_level = x
        return x, low_level
