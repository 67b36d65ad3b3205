"""Epoch loop: shuffle, augment, normalize, step, validate, checkpoint."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..data.transforms import NormalizationStats, augment_flips, normalize, to_model_input
from ..errors import ConfigError, NumericalError
from ..evaluation.metrics import ConfusionMatrix, mean_iou
from ..tensor import Tensor, backward, no_grad, reset_tape
from .checkpoint import CheckpointRecord, restore_model, save_checkpoint, snapshot_model
from .loss import cross_entropy_loss
from .sgd import SGD, poly_lr


@dataclass
class TrainConfig:
    epochs: int = 100
    lr0: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    power: float = 0.9
    min_lr: float = 1e-6
    batch_size: int = 8
    seed: int = 0
    dropout_rate: float = 0.10
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    decay_conv_only: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr0 <= 0 or self.power <= 0 or self.min_lr <= 0:
            raise ConfigError("lr0, power, and min_lr must be positive")
        if self.min_lr >= self.lr0:
            raise ConfigError(f"min_lr {self.min_lr} must be below lr0 {self.lr0}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_miou: float
    lr: float


def write_epoch_log_csv(logs, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,val_miou,lr\n")
        for log in logs:
            fh.write(
                f"{log.epoch},{log.train_loss:.8f},{log.val_loss:.8f},"
                f"{log.val_miou:.8f},{log.lr:.10f}\n"
            )


def batch_arrays(samples, stats: NormalizationStats):
    """Stack samples into (B, 3, H, W) float inputs and (B, H, W) int64 masks."""
    images = np.stack([to_model_input(normalize(s.image, stats)) for s in samples])
    masks = np.stack([s.mask.astype(np.int64) for s in samples])
    return images, masks


def evaluate_loss_and_miou(model, samples, stats, batch_size: int):
    """Mean cross-entropy and mean IoU on a sample list, no augmentation."""
    if not samples:
        return float("nan"), float("nan")
    was_training = model.training
    model.eval()
    cm = ConfusionMatrix(model.config.num_classes)
    total_loss = 0.0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            images, masks = batch_arrays(chunk, stats)
            logits = model(Tensor(images))
            loss = cross_entropy_loss(logits, masks)
            total_loss += loss.item() * len(chunk)
            cm.update(np.argmax(logits.data, axis=1), masks)
    if was_training:
        model.train()
    return total_loss / len(samples), mean_iou(cm)


def make_record(model, config: TrainConfig, optimizer: SGD, gen, epoch: int,
                best: float, preprocessing=None, patch=None) -> CheckpointRecord:
    params, buffers = snapshot_model(model)
    return CheckpointRecord(
        model_config=model.config.to_dict(),
        train_config=asdict(config),
        epoch=epoch,
        best_val_miou=best,
        params=params,
        buffers=buffers,
        velocities={k: v.copy() for k, v in optimizer.state().items()},
        rng_state=gen.bit_generator.state,
        preprocessing=preprocessing,
        patch=patch,
    )


def fit(model, train_samples, val_samples, config: TrainConfig,
        stats: NormalizationStats, out_dir=None, resume: CheckpointRecord | None = None,
        end_epoch: int | None = None, preprocessing=None, patch=None):
    """Train per the schedule; returns (epoch logs, final checkpoint record).

    `resume` restores parameters, velocities, and the rng stream so that a
    split run reproduces the straight run bit for bit. `end_epoch` stops
    early while keeping the decay schedule anchored at config.epochs.
    """
    if not train_samples:
        raise ConfigError("training set is empty")
    if config.batch_size > len(train_samples):
        raise ConfigError(
            f"batch_size {config.batch_size} exceeds dataset size {len(train_samples)}"
        )
    total_epochs = config.epochs
    stop = total_epochs if end_epoch is None else min(end_epoch, total_epochs)

    gen = np.random.default_rng(config.seed)
    optimizer = SGD(
        list(model.named_parameters()),
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        decay_conv_only=config.decay_conv_only,
    )
    start_epoch = 0
    best = float("-inf")
    if resume is not None:
        restore_model(model, resume)
        optimizer.load_state(resume.velocities)
        if resume.rng_state is not None:
            gen.bit_generator.state = resume.rng_state
        start_epoch = resume.epoch
        best = resume.best_val_miou
    model.bind_rng(gen)
    model.train()

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    logs: list[EpochLog] = []
    record = make_record(model, config, optimizer, gen, start_epoch, best,
                         preprocessing, patch)
    if out_dir is not None:
        save_checkpoint(record, out_dir / "checkpoints" / "last.ckpt")

    for epoch in range(start_epoch, stop):
        lr = poly_lr(epoch, config.lr0, config.power, max(total_epochs, 1), config.min_lr)
        order = gen.permutation(len(train_samples))
        running = 0.0
        model.train()
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            chunk = [train_samples[i] for i in order[start : start + config.batch_size]]
            chunk = [augment_flips(s, config.p_hflip, config.p_vflip, gen) for s in chunk]
            images, masks = batch_arrays(chunk, stats)
            reset_tape()
            logits = model(Tensor(images))
            loss = cross_entropy_loss(logits, masks)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NumericalError(
                    f"non-finite loss {loss_value} at epoch {epoch}, batch {batch_index}"
                )
            backward(loss)
            optimizer.step(lr)
            running += loss_value * len(chunk)
        train_loss = running / len(train_samples)
        val_loss, val_miou = evaluate_loss_and_miou(
            model, val_samples, stats, config.batch_size
        )

        logs.append(EpochLog(epoch, train_loss, val_loss, val_miou, lr))
        improved = np.isfinite(val_miou) and val_miou > best
        if improved:
            best = val_miou
        record = make_record(model, config, optimizer, gen, epoch + 1, best,
                             preprocessing, patch)
        if out_dir is not None:
            save_checkpoint(record, out_dir / "checkpoints" / "last.ckpt")
            if improved:
                save_checkpoint(record, out_dir / "checkpoints" / "best.ckpt")

    if out_dir is not None:
        write_epoch_log_csv(logs, out_dir / "logs.csv")
    return logs, record
