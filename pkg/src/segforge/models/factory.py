"""Model configuration, assembly, parameter counting, and summaries."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..nn import Module
from ..tensor import Tensor
from .heads import ASPP, DeepLabV3Head, DeepLabV3PlusHead
from .resnet import ResNetEncoder

ENCODERS = ("resnet18", "resnet34", "resnet50", "resnet101")
DECODERS = ("deeplabv3", "deeplabv3plus")

# Reference parameter counts (millions) and batch sizes reported for the
# ResNet + DeepLabV3+ pairings; emitted for comparison, never asserted.
REFERENCE_PARAMS_M = {
    ("resnet18", "deeplabv3plus"): 12.34,
    ("resnet34", "deeplabv3plus"): 22.45,
    ("resnet50", "deeplabv3plus"): 25.07,
    ("resnet101", "deeplabv3plus"): 44.06,
}
REFERENCE_BATCH_SIZE = {
    ("resnet18", "deeplabv3plus"): 32,
    ("resnet34", "deeplabv3plus"): 24,
    ("resnet50", "deeplabv3plus"): 8,
    ("resnet101", "deeplabv3plus"): 8,
}


@dataclass
class ModelConfig:
    encoder: str = "resnet18"
    decoder: str = "deeplabv3plus"
    num_classes: int = 5
    output_stride: int = 16
    aspp_channels: int = 256
    dropout_rate: float = 0.10
    seed: int = 0
    # Width/depth scaling for desk-scale runs; defaults match the reference nets.
    base_width: int = 64
    stage_blocks: tuple | None = None
    low_level_channels: int = 48
    refine_channels: int = 256

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.output_stride not in (8, 16):
            raise ConfigError(f"output_stride must be 8 or 16, got {self.output_stride}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.base_width < 1 or self.aspp_channels < 1:
            raise ConfigError("channel widths must be positive")
        if self.stage_blocks is not None:
            self.stage_blocks = tuple(int(b) for b in self.stage_blocks)
            if len(self.stage_blocks) != 4 or any(b < 1 for b in self.stage_blocks):
                raise ConfigError(f"stage_blocks must be 4 positive ints, got {self.stage_blocks}")

    @property
    def depth(self) -> int:
        return int(self.encoder.removeprefix("resnet"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_blocks"] = list(self.stage_blocks) if self.stage_blocks else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("stage_blocks"):
            d["stage_blocks"] = tuple(d["stage_blocks"])
        return cls(**d)


class SegmentationModel(Module):
    """Encoder -> ASPP -> decoder producing N x num_classes x H x W logits."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder = ResNetEncoder(
            config.depth, rng, output_stride=config.output_stride,
            base_width=config.base_width, stage_blocks=config.stage_blocks,
        )
        self.aspp = ASPP(self.encoder.out_channels, config.aspp_channels, rng,
                         dropout_rate=config.dropout_rate)
        if config.decoder == "deeplabv3plus":
            self.head = DeepLabV3PlusHead(
                config.aspp_channels, self.encoder.low_level_channels,
                config.num_classes, rng,
                low_level_channels=config.low_level_channels,
                refine_channels=config.refine_channels,
                dropout_rate=config.dropout_rate,
            )
        else:
            self.head = DeepLabV3Head(config.aspp_channels, config.num_classes, rng)
        self.finalize_names()

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"model input must be Nx3xHxW, got {tuple(x.shape)}")
        h, w = x.shape[2], x.shape[3]
        if h % self.config.output_stride or w % self.config.output_stride:
            raise ShapeError(
                f"input {h}x{w} must be divisible by output stride "
                f"{self.config.output_stride}"
            )
        features, low_level = self.encoder(x)
        aspp_out = self.aspp(features)
        return self.head(aspp_out, low_level, (h, w))


def build_segmentation_model(config: ModelConfig) -> SegmentationModel:
    return SegmentationModel(config)


def count_parameters(model: Module) -> int:
    return sum(p.size for p in model.parameters())


def model_summary(model: SegmentationModel, probe_hw=(64, 64)) -> dict:
    """Config echo, per-parameter shapes/counts, per-layer output shapes from
    a probe forward, and the reference count from the published batch-size
    table when the pairing has one."""
    from ..nn import collect_probe_shapes
    from ..tensor import no_grad

    config = model.config
    per_param = [
        {"name": name, "shape": list(p.shape), "count": int(p.size)}
        for name, p in model.named_parameters()
    ]
    blocks = {}
    for entry in per_param:
        top = entry["name"].split(".", 1)[0]
        blocks[top] = blocks.get(top, 0) + entry["count"]
    total = count_parameters(model)

    layer_shapes = None
    if probe_hw is not None:
        was_training = model.training
        model.eval()

        def run():
            with no_grad():
                model(Tensor(np.zeros((1, 3, *probe_hw), dtype=np.float32)))

        layer_shapes = collect_probe_shapes(model, run)
        if was_training:
            model.train()

    summary = {
        "config": config.to_dict(),
        "total_parameters": int(total),
        "total_parameters_millions": round(total / 1e6, 4),
        "parameters_by_block": blocks,
        "parameters": per_param,
    }
    if layer_shapes is not None:
        summary["probe_input_hw"] = list(probe_hw)
        summary["layer_output_shapes"] = layer_shapes
    ref = REFERENCE_PARAMS_M.get((config.encoder, config.decoder))
    if ref is not None:
        summary["reference_parameters_millions"] = ref
    return summary


def format_summary(summary: dict) -> str:
    lines = []
    cfg = summary["config"]
    lines.append(f"model: {cfg['encoder']} + {cfg['decoder']} "
                 f"(classes={cfg['num_classes']}, output_stride={cfg['output_stride']})")
    for block, count in summary["parameters_by_block"].items():
        lines.append(f"  {block:<10s} {count:>12,d} params")
    lines.append(f"  {'total':<10s} {summary['total_parameters']:>12,d} params "
                 f"({summary['total_parameters_millions']:.2f} M)")
    if "reference_parameters_millions" in summary:
        lines.append(
            f"  reference count for this pairing: "
            f"{summary['reference_parameters_millions']:.2f} M (reported, not asserted)"
        )
    return "\n".join(lines)


def write_summary(model: SegmentationModel, json_path, text_path=None) -> dict:
    summary = model_summary(model)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if text_path is not None:
        with open(text_path, "w", encoding="utf-8") as fh:
            fh.write(format_summary(summary) + "\n")
    return summary


def default_batch_size(config: ModelConfig) -> int:
    return REFERENCE_BATCH_SIZE.get((config.encoder, config.decoder), 8)
