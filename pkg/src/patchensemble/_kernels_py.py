"""Numpy fallback for the compiled kernels (same signatures, same bits)."""

import numpy as np

MODE_PROPOSED = 0
MODE_KTHRESHOLD = 1
MODE_MEAN = 2
MODE_MEDIAN = 3


def aggregate_rows(scores, mode, k=1):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("expected a 2-D score matrix")
    if scores.shape[1] == 0:
        raise ValueError("rows must be non-empty")
    if mode == MODE_PROPOSED:
        mode, k = MODE_KTHRESHOLD, 1
    if mode == MODE_KTHRESHOLD:
        nonneg = np.count_nonzero(scores >= 0.0, axis=1)
        return np.where(nonneg >= k, scores.max(axis=1), scores.min(axis=1))
    if mode == MODE_MEAN:
        # left-to-right accumulation, matching the compiled loop
        return np.cumsum(scores, axis=1)[:, -1] / scores.shape[1]
    if mode == MODE_MEDIAN:
        p = scores.shape[1]
        ordered = np.sort(scores, axis=1)
        if p % 2 == 1:
            return ordered[:, p // 2].copy()
        return (ordered[:, p // 2 - 1] + ordered[:, p // 2]) / 2.0
    raise ValueError(f"unknown aggregation mode {mode}")


def mann_whitney_counts(pos, neg):
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    return int(below.sum()), int((upto - below).sum())
