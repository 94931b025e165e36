"""Uncompressed run-length codec for binary masks.

Convention: row-major pixel order; counts alternate runs of 0s and 1s
and always start with the run of 0s (which may be empty). Canonical
form has no zero-length interior runs.
"""
from __future__ import annotations

import numpy as np

from .errors import FormatError


def decode_rle(counts, width: int, height: int) -> np.ndarray:
    """Expand counts into a (height, width) boolean mask."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size and counts.min() < 0:
        raise FormatError("RLE counts must be non-negative")
    total = int(counts.sum())
    if total != width * height:
        raise FormatError(
            f"RLE counts sum to {total}, expected {width}x{height}={width * height}"
        )
    values = np.zeros(counts.size, dtype=bool)
    values[1::2] = True
    return np.repeat(values, counts).reshape(height, width)


def encode_rle(mask: np.ndarray) -> list[int]:
    """Encode a boolean mask into canonical counts."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    runs = np.diff(np.concatenate(([0], changes, [flat.size])))
    counts = runs.tolist()
    if flat[0]:
        counts.insert(0, 0)
    return counts
