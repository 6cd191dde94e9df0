"""Deterministic random streams.

All randomness in the package flows through :func:`make_rng`, which wraps the
counter-based Philox bit generator.  Philox output for a given key is fixed by
its algorithm, so identical seeds give identical draws on every platform.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a generator for ``seed``, optionally forked onto a sub-stream.

    ``make_rng(seed, row, fold)`` gives an independent stream per (row, fold)
    pair that does not depend on how many other streams were created.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
