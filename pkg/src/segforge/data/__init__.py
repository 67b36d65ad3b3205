from .samples import (
    SegmentationSample,
    class_distribution,
    load_dataset,
    load_image,
    ordered_parallel_map,
    write_manifest,
)
from .scheme import CLASS_NAMES, DEFAULT_PALETTE, REPORT_NAMES, ClassScheme, load_palette_file, write_palette_file
from .splits import SplitPlan, kfold, split_train_val
from .synth import synth_generate, synth_samples
from .transforms import (
    NormalizationStats,
    PatchSpec,
    augment_flips,
    compute_normalization_stats,
    crop_to_original,
    denormalize,
    extract_patch,
    normalize,
    pad_to_target,
    to_model_input,
)

__all__ = [
    "CLASS_NAMES",
    "ClassScheme",
    "DEFAULT_PALETTE",
    "NormalizationStats",
    "PatchSpec",
    "REPORT_NAMES",
    "SegmentationSample",
    "SplitPlan",
    "augment_flips",
    "class_distribution",
    "compute_normalization_stats",
    "crop_to_original",
    "denormalize",
    "extract_patch",
    "kfold",
    "load_dataset",
    "load_image",
    "load_palette_file",
    "normalize",
    "ordered_parallel_map",
    "pad_to_target",
    "split_train_val",
    "synth_generate",
    "synth_samples",
    "to_model_input",
    "write_manifest",
    "write_palette_file",
]
