from .blocks import BasicBlock, BlockSpec, BottleneckBlock, FusedMBConvBlock, MBConvBlock, build_block
from .factory import (
    DECODERS,
    ENCODERS,
    REFERENCE_BATCH_SIZE,
    REFERENCE_PARAMS_M,
    ModelConfig,
    SegmentationModel,
    build_segmentation_model,
    count_parameters,
    default_batch_size,
    format_summary,
    model_summary,
    write_summary,
)
from .heads import ASPP, ASPP_RATES, DeepLabV3Head, DeepLabV3PlusHead
from .resnet import ResNetEncoder, STAGE_BLOCKS

__all__ = [
    "ASPP",
    "ASPP_RATES",
    "BasicBlock",
    "BlockSpec",
    "BottleneckBlock",
    "DECODERS",
    "DeepLabV3Head",
    "DeepLabV3PlusHead",
    "ENCODERS",
    "FusedMBConvBlock",
    "MBConvBlock",
    "ModelConfig",
    "REFERENCE_BATCH_SIZE",
    "REFERENCE_PARAMS_M",
    "ResNetEncoder",
    "STAGE_BLOCKS",
    "SegmentationModel",
    "build_block",
    "build_segmentation_model",
    "count_parameters",
    "default_batch_size",
    "format_summary",
    "model_summary",
    "write_summary",
]
