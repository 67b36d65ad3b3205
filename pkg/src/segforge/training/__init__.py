from .checkpoint import (
    CheckpointRecord,
    FORMAT_VERSION,
    load_checkpoint,
    restore_model,
    save_checkpoint,
    snapshot_model,
)
from .loop import (
    EpochLog,
    TrainConfig,
    batch_arrays,
    evaluate_loss_and_miou,
    fit,
    make_record,
    write_epoch_log_csv,
)
from .loss import cross_entropy_loss
from .sgd import SGD, poly_lr

__all__ = [
    "CheckpointRecord",
    "EpochLog",
    "FORMAT_VERSION",
    "SGD",
    "TrainConfig",
    "batch_arrays",
    "cross_entropy_loss",
    "evaluate_loss_and_miou",
    "fit",
    "load_checkpoint",
    "make_record",
    "poly_lr",
    "restore_model",
    "save_checkpoint",
    "snapshot_model",
    "write_epoch_log_csv",
]
