"""Train/validation split and k-fold plans, deterministic per seed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class SplitPlan:
    train_ids: list
    val_ids: list
    seed: int
    fold_assignments: dict = field(default_factory=dict)  # id -> fold index

    def __post_init__(self):
        if set(self.train_ids) & set(self.val_ids):
            raise DataError("train and validation ids overlap")

    @property
    def num_folds(self) -> int:
        return len({f for f in self.fold_assignments.values()}) if self.fold_assignments else 0

    def fold_ids(self, fold: int) -> list:
        return [i for i, f in self.fold_assignments.items() if f == fold]


def split_train_val(ids, val_fraction: float = 0.05, seed: int = 0) -> SplitPlan:
    """Random split; the validation share rounds up so a 5% split of 1002
    ids yields 951 train / 51 val."""
    ids = list(ids)
    if not 0.0 < val_fraction < 1.0:
        raise DataError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if len(ids) < 2:
        raise DataError("need at least two ids to split")
    n_val = math.ceil(val_fraction * len(ids))
    if n_val >= len(ids):
        raise DataError(f"validation fraction {val_fraction} leaves no training ids")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    val_ids = [ids[i] for i in order[:n_val]]
    train_ids = [ids[i] for i in order[n_val:]]
    return SplitPlan(train_ids=train_ids, val_ids=val_ids, seed=seed)


def kfold(ids, k: int = 5, seed: int = 0) -> SplitPlan:
    """Partition ids into k near-equal folds (sizes differ by at most one)."""
    ids = list(ids)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise DataError(f"cannot build {k} folds from {len(ids)} ids")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    base = len(ids) // k
    remainder = len(ids) % k
    assignments = {}
    cursor = 0
    for fold in range(k):
        size = base + (1 if fold < remainder else 0)
        for i in order[cursor : cursor + size]:
            assignments[ids[i]] = fold
        cursor += size
    return SplitPlan(train_ids=ids, val_ids=[], seed=seed, fold_assignments=assignments)
