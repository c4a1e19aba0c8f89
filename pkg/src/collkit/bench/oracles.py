"""Brute-force reference results used by harness verification."""
from __future__ import annotations

import numpy as np


def expected_all_gather(inputs: list[np.ndarray]) -> np.ndarray:
    """Rank-ordered concatenation of every rank's contribution."""
    return np.concatenate([np.asarray(b, dtype=np.float32).reshape(-1) for b in inputs])


def expected_reduce_scatter(inputs: list[np.ndarray]) -> list[np.ndarray]:
    """Element-wise sum over ranks, sliced into one chunk per rank."""
    p = len(inputs)
    total = np.zeros_like(np.asarray(inputs[0], dtype=np.float32).reshape(-1))
    for buf in inputs:
        total = total + np.asarray(buf, dtype=np.float32).reshape(-1)
    n = total.size // p
    return [total[r * n : (r + 1) * n].copy() for r in range(p)]
