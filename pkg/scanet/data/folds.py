"""
Stratified fold planning.
"""

from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ArgumentError, StratificationError


def _check_labels(labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ArgumentError(f"expected a non-empty label list, got shape {labels.shape}")
    if not np.all(np.isin(labels, (0, 1))):
        raise ArgumentError("labels must be 0 or 1")
    return labels.astype(int)


def stratified_kfold(labels: Sequence[int], k: int, seed: int) -> List[np.ndarray]:
    """Partition indices into ``k`` folds preserving class proportions.

    Each class is shuffled with the seed and dealt round-robin; the dealing
    position carries over from class 0 to class 1 so fold sizes stay within one.
    """
    labels = _check_labels(labels)
    if k < 2:
        raise ArgumentError(f"k must be >= 2, got {k}")
    for cls in (0, 1):
        count = int(np.sum(labels == cls))
        if count < k:
            raise StratificationError(f"class {cls} has {count} members, fewer than k={k} folds")
    rng = np.random.default_rng(seed)
    folds: List[List[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in (0, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for position, index in enumerate(members):
            folds[(offset + position) % k].append(int(index))
        offset = (offset + len(members)) % k
    return [np.sort(np.array(fold, dtype=int)) for fold in folds]


def stratified_train_val_split(labels: Sequence[int], fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Hold out ``fraction`` of each class (at least one member when the class has two or more)."""
    labels = _check_labels(labels)
    if not 0.0 < fraction < 1.0:
        raise ArgumentError(f"validation fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in (0, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        n_val = max(1, int(round(fraction * len(members)))) if len(members) >= 2 else 0
        val.extend(members[:n_val].tolist())
        train.extend(members[n_val:].tolist())
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))


def permute_labels(labels: Sequence[int], seed: int) -> np.ndarray:
    """Seeded shuffle of the labels (class counts preserved); the null-signal control."""
    return np.random.default_rng(seed).permutation(_check_labels(labels))
