"""Class weighting and stratified k-fold splitting."""
from __future__ import annotations

import numpy as np

from ..nnkernel.rng import make_rng


def class_weights(labels) -> tuple[float, float]:
    """Balanced weights ``N / (2 * N_c)`` for classes 0 and 1."""
    labels = np.asarray(labels)
    n = labels.size
    n1 = int(np.count_nonzero(labels))
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("class weights need both classes present")
    return n / (2 * n0), n / (2 * n1)


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Split indices into ``k`` disjoint validation folds preserving class balance.

    Each class is shuffled and dealt into folds of size ``N_c // k`` or one
    more.  The folds receiving a class's remainder continue where the previous
    class's remainder stopped, which also keeps the fold sizes within one.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("need k >= 2")
    rng = make_rng(seed)
    folds: list[list[np.ndarray]] = [[] for _ in range(k)]
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls) if cls == 0 else np.flatnonzero(labels != 0)
        if idx.size < k:
            raise ValueError(f"class {cls} has {idx.size} members, fewer than k={k}")
        idx = rng.permutation(idx)
        base, rem = divmod(idx.size, k)
        sizes = np.full(k, base)
        sizes[(offset + np.arange(rem)) % k] += 1
        offset = (offset + rem) % k
        start = 0
        for f in range(k):
            folds[f].append(idx[start:start + sizes[f]])
            start += sizes[f]
    return [np.sort(np.concatenate(parts)) for parts in folds]
