"""One executable for the whole pipeline.

Subcommands: synth, stats, train, evaluate, predict, cross-validate,
gradcheck. A plain-text config file (key = value lines) seeds the run
configuration; command-line flags override it; SEGFORGE_OUT overrides
--out. The resolved configuration is echoed into the output directory and
reproduces the run when fed back in.

Exit codes: 0 success, 2 config error, 3 data/checkpoint error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import gradcheck as gradcheck_mod
from .data import (
    ClassScheme,
    NormalizationStats,
    PatchSpec,
    SegmentationSample,
    class_distribution,
    compute_normalization_stats,
    crop_to_original,
    extract_patch,
    load_dataset,
    load_image,
    load_palette_file,
    pad_to_target,
    split_train_val,
    synth_generate,
    write_manifest,
    write_palette_file,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GraphError,
    NumericalError,
    SegforgeError,
    ShapeError,
)
from .evaluation import (
    cross_validate,
    emit_cross_validation,
    emit_report,
    evaluate_model,
    predict_mask,
)
from .models import ModelConfig, build_segmentation_model, default_batch_size, write_summary
from .training import TrainConfig, fit, load_checkpoint, restore_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

GRADCHECK_THRESHOLD = 1e-4


@dataclass
class RunConfig:
    """Merged model + training + pipeline configuration."""

    data_root: str = ""
    out_dir: str = ""
    palette: str = ""
    # model
    encoder: str = "resnet18"
    decoder: str = "deeplabv3plus"
    num_classes: int = 5
    output_stride: int = 16
    aspp_channels: int = 256
    base_width: int = 64
    stage_blocks: str = ""  # comma list overriding the per-depth defaults
    low_level_channels: int = 48
    refine_channels: int = 256
    dropout_rate: float = 0.10
    # training
    epochs: int = 100
    batch_size: int = 0  # 0 = the published pairing for this encoder/decoder
    lr0: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    power: float = 0.9
    min_lr: float = 1e-6
    seed: int = 0
    val_fraction: float = 0.05
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    decay_conv_only: bool = True
    # preprocessing: 0 x 0 means round the dataset maximum up to the stride
    pad_height: int = 672
    pad_width: int = 1280
    patch_image: str = ""
    patch_x: int = 0
    patch_y: int = 0
    patch_w: int = 64
    patch_h: int = 64
    # execution
    threads: int = 1
    deterministic: bool = False
    crop_back: bool = False

    def model_config(self) -> ModelConfig:
        blocks = None
        if self.stage_blocks:
            try:
                blocks = tuple(int(b) for b in self.stage_blocks.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad stage_blocks {self.stage_blocks!r}") from exc
        return ModelConfig(
            encoder=self.encoder,
            decoder=self.decoder,
            num_classes=self.num_classes,
            output_stride=self.output_stride,
            aspp_channels=self.aspp_channels,
            dropout_rate=self.dropout_rate,
            seed=self.seed,
            base_width=self.base_width,
            stage_blocks=blocks,
            low_level_channels=self.low_level_channels,
            refine_channels=self.refine_channels,
        )

    def train_config(self, batch_size: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr0=self.lr0,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            power=self.power,
            min_lr=self.min_lr,
            batch_size=batch_size,
            seed=self.seed,
            dropout_rate=self.dropout_rate,
            p_hflip=self.p_hflip,
            p_vflip=self.p_vflip,
            decay_conv_only=self.decay_conv_only,
        )

    @property
    def effective_threads(self) -> int:
        return 1 if self.deterministic else max(1, self.threads)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def load_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {raw!r}") from exc
    return values


def write_config_echo(config: RunConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(RunConfig):
            value = getattr(config, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{f.name} = {value}\n")


def resolve_config(args) -> RunConfig:
    config = RunConfig()
    if args.config:
        for key, value in load_config_file(args.config).items():
            setattr(config, key, value)
    overrides = {
        "data_root": args.data_root,
        "out_dir": args.out,
        "palette": args.palette,
        "encoder": args.encoder,
        "decoder": args.decoder,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr0": args.lr0,
        "power": args.power,
        "min_lr": args.min_lr,
        "momentum": args.momentum,
        "weight_decay": args.weight_decay,
        "seed": args.seed,
        "threads": args.threads,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if args.deterministic:
        config.deterministic = True
    if args.crop_back:
        config.crop_back = True
    env_out = os.environ.get("SEGFORGE_OUT")
    if env_out:
        config.out_dir = env_out
    return config


def _require_out(config: RunConfig) -> Path:
    if not config.out_dir:
        raise ConfigError("an output directory is required (--out or SEGFORGE_OUT)")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_data_root(config: RunConfig) -> Path:
    if not config.data_root:
        raise ConfigError("a dataset path is required (--data-root)")
    root = Path(config.data_root)
    if not root.is_dir():
        raise DataError(f"dataset directory {root} does not exist")
    return root


def _scheme(config: RunConfig) -> ClassScheme:
    if config.palette:
        return load_palette_file(config.palette)
    return ClassScheme()


def _resolve_pad_hw(config: RunConfig, samples) -> tuple:
    if config.pad_height > 0 and config.pad_width > 0:
        return (config.pad_height, config.pad_width)
    stride = config.output_stride
    max_h = max(s.hw[0] for s in samples)
    max_w = max(s.hw[1] for s in samples)
    return (math.ceil(max_h / stride) * stride, math.ceil(max_w / stride) * stride)


def _patch_spec(config: RunConfig) -> PatchSpec:
    return PatchSpec(image_id=config.patch_image, x=config.patch_x, y=config.patch_y,
                     w=config.patch_w, h=config.patch_h)


def _prepare_training_data(config: RunConfig, scheme: ClassScheme):
    """Load, split, pad, and compute normalization stats from the train split."""
    root = _require_data_root(config)
    samples = load_dataset(root, scheme, threads=config.effective_threads)
    plan = split_train_val([s.id for s in samples], config.val_fraction, config.seed)
    by_id = {s.id: s for s in samples}
    train = [by_id[i] for i in plan.train_ids]
    val = [by_id[i] for i in plan.val_ids]
    pad_hw = _resolve_pad_hw(config, samples)
    spec = _patch_spec(config)
    patch = extract_patch(train, spec)
    train = [pad_to_target(s, pad_hw, patch) for s in train]
    val = [pad_to_target(s, pad_hw, patch) for s in val]
    stats = compute_normalization_stats(train)
    return train, val, stats, pad_hw, spec, patch


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, config: RunConfig) -> int:
    out = _require_out(config)
    scheme = _scheme(config)
    try:
        h, w = (int(v) for v in args.hw.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--hw must look like 64x64, got {args.hw!r}") from exc
    ids = synth_generate(args.n, (h, w), config.seed, out, scheme)
    write_palette_file(scheme, out / "palette.txt")
    print(f"wrote {len(ids)} synthetic samples ({h}x{w}, seed {config.seed}) to {out}")
    return EXIT_OK


def cmd_stats(args, config: RunConfig) -> int:
    scheme = _scheme(config)
    train, val, stats, pad_hw, _, _ = _prepare_training_data(config, scheme)
    dist = class_distribution(train + val, scheme.num_classes)
    print(f"images: {dist['num_images']} (train {len(train)} / val {len(val)}), "
          f"padded to {pad_hw[0]}x{pad_hw[1]}")
    print(f"{'class':<22s}{'pixels':>14s}{'fraction':>12s}")
    for name, count, frac in zip(scheme.names, dist["pixel_counts"], dist["fractions"]):
        print(f"{name:<22s}{count:>14,d}{frac:>12.6f}")
    print(f"{'total':<22s}{dist['total_pixels']:>14,d}{sum(dist['fractions']):>12.6f}")
    mean = ", ".join(f"{v:.6f}" for v in stats.mean)
    std = ", ".join(f"{v:.6f}" for v in stats.std)
    print(f"normalization mean (train split): [{mean}]")
    print(f"normalization std  (train split): [{std}]")
    if config.out_dir:
        out = _require_out(config)
        write_manifest(out / "manifest.json", train + val, scheme, stats)
        print(f"manifest written to {out / 'manifest.json'}")
    return EXIT_OK


def cmd_train(args, config: RunConfig) -> int:
    out = _require_out(config)
    scheme = _scheme(config)
    if scheme.num_classes != config.num_classes:
        raise ConfigError(
            f"palette defines {scheme.num_classes} classes but num_classes = {config.num_classes}"
        )
    train, val, stats, pad_hw, spec, patch = _prepare_training_data(config, scheme)
    model_config = config.model_config()
    model = build_segmentation_model(model_config)
    batch = config.batch_size or default_batch_size(model_config)
    if batch > len(train):
        batch = len(train)
    train_config = config.train_config(batch)
    write_config_echo(config, out / "config.echo")
    write_summary(model, out / "model_summary.json", out / "model_summary.txt")
    preprocessing = {
        "stats": stats.to_dict(),
        "pad_hw": list(pad_hw),
        "patch_spec": spec.to_dict(),
    }
    logs, _ = fit(
        model, train, val, train_config, stats,
        out_dir=out, preprocessing=preprocessing,
        patch=patch.astype(np.float32),
    )
    if logs:
        last = logs[-1]
        print(f"trained {len(logs)} epochs; final train loss {last.train_loss:.4f}, "
              f"val loss {last.val_loss:.4f}, val m-IoU {100 * last.val_miou:.3f}%")
    else:
        print("trained 0 epochs; initial checkpoint written")
    print(f"artifacts in {out}")
    return EXIT_OK


def _load_model_from_checkpoint(path):
    record = load_checkpoint(path)
    model = build_segmentation_model(ModelConfig.from_dict(record.model_config))
    restore_model(model, record)
    if record.preprocessing is None or "stats" not in record.preprocessing:
        raise CheckpointError(f"{path}: checkpoint carries no normalization stats")
    stats = NormalizationStats.from_dict(record.preprocessing["stats"])
    pad_hw = tuple(record.preprocessing.get("pad_hw") or ())
    return record, model, stats, pad_hw


def cmd_evaluate(args, config: RunConfig) -> int:
    scheme = _scheme(config)
    record, model, stats, pad_hw = _load_model_from_checkpoint(args.checkpoint)
    root = _require_data_root(config)
    samples = load_dataset(root, scheme, threads=config.effective_threads)
    masks_dir = None
    if config.out_dir and args.dump_masks:
        masks_dir = _require_out(config) / "masks"
    report = evaluate_model(
        model, samples, stats, scheme,
        pad_hw=pad_hw or None, patch=record.patch,
        threads=config.effective_threads, crop_back=config.crop_back,
        masks_dir=masks_dir,
    )
    print(f"evaluated {report.num_images} images")
    print(f"{'class':<22s}{'IoU %':>10s}")
    for name, iou in zip(report.class_names, report.class_iou_percent):
        text = "absent" if np.isnan(iou) else f"{iou:.3f}"
        print(f"{name:<22s}{text:>10s}")
    print(f"{'mean':<22s}{report.miou_percent:>10.3f}")
    if config.out_dir:
        out = _require_out(config)
        csv_path, json_path = emit_report(report, out)
        print(f"report written to {csv_path} and {json_path}")
    return EXIT_OK


def cmd_predict(args, config: RunConfig) -> int:
    record, model, stats, pad_hw = _load_model_from_checkpoint(args.checkpoint)
    image_path = Path(args.image)
    if not image_path.exists():
        raise DataError(f"image {image_path} does not exist")
    image = load_image(image_path)
    sample = SegmentationSample(
        image=image,
        mask=np.zeros(image.shape[:2], dtype=np.uint8),
        id=image_path.stem,
        original_hw=image.shape[:2],
    )
    stride = model.config.output_stride
    h, w = sample.hw
    if pad_hw and h <= pad_hw[0] and w <= pad_hw[1]:
        target = pad_hw
    else:
        target = (math.ceil(h / stride) * stride, math.ceil(w / stride) * stride)
    if target != (h, w):
        patch = record.patch
        if patch is None:
            # Self-padding: borrow a corner of the input as the sea patch.
            patch = image[: min(64, h), : min(64, w)].copy()
        if patch.shape[2] != image.shape[2]:
            patch = (
                np.repeat(patch, image.shape[2], axis=2)
                if patch.shape[2] == 1
                else patch[:, :, :1]
            )
        sample = pad_to_target(sample, target, patch.astype(image.dtype))
    mask = predict_mask(model, sample, stats)
    if config.crop_back:
        mask = crop_to_original(mask, sample)
    scheme = _scheme(config)
    rgb = scheme.encode_mask(mask)
    out = _require_out(config)
    out_path = out / f"{image_path.stem}_mask.png"
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(out_path)
    print(f"predicted mask written to {out_path}")
    return EXIT_OK


def cmd_cross_validate(args, config: RunConfig) -> int:
    scheme = _scheme(config)
    root = _require_data_root(config)
    samples = load_dataset(root, scheme, threads=config.effective_threads)
    pad_hw = _resolve_pad_hw(config, samples)
    patch = extract_patch(samples, _patch_spec(config))
    samples = [pad_to_target(s, pad_hw, patch) for s in samples]
    model_config = config.model_config()
    batch = config.batch_size or default_batch_size(model_config)
    fold_size = len(samples) - len(samples) // args.k
    batch = min(batch, max(1, fold_size))
    train_config = config.train_config(batch)
    fold_mious, summary = cross_validate(samples, model_config, train_config, scheme, k=args.k)
    for fold, miou in enumerate(fold_mious):
        print(f"fold {fold}: m-IoU {miou:.3f}%")
    print(f"cross-validation m-IoU: {summary}")
    if config.out_dir:
        out = _require_out(config)
        emit_cross_validation(fold_mious, summary, out)
        print(f"report written to {out / 'crossval.csv'}")
    return EXIT_OK


def cmd_gradcheck(args, config: RunConfig) -> int:
    results = gradcheck_mod.run_all(instances=args.instances)
    failed = False
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<28s} max_rel_error={r.max_rel_error:.3e}  [{status}]")
        failed = failed or not r.passed
    if failed:
        print(f"gradient check FAILED (threshold {GRADCHECK_THRESHOLD:g})")
        return EXIT_NUMERIC
    print(f"all gradient checks below {GRADCHECK_THRESHOLD:g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plain-text config file (key = value lines)")
    common.add_argument("--data-root", help="dataset root with images/ and masks/")
    common.add_argument("--encoder", choices=["resnet18", "resnet34", "resnet50", "resnet101"])
    common.add_argument("--decoder", choices=["deeplabv3", "deeplabv3plus"])
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--lr0", type=float)
    common.add_argument("--power", type=float)
    common.add_argument("--min-lr", type=float)
    common.add_argument("--momentum", type=float)
    common.add_argument("--weight-decay", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--deterministic", action="store_true")
    common.add_argument("--out", help="output directory (SEGFORGE_OUT overrides)")
    common.add_argument("--palette", help="palette file (class_name index R G B per line)")
    common.add_argument("--crop-back", action="store_true")

    parser = argparse.ArgumentParser(prog="segforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--hw", default="64x64")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("stats", parents=[common], help="class distribution and normalization stats")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dump-masks", action="store_true")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="predict a palette mask for one image")
    p.add_argument("image")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("cross-validate", parents=[common], help="k-fold cross-validation")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(handler=cmd_cross_validate)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(handler=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return args.handler(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ShapeError, GraphError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SegforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
