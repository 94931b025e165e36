"""Kernel backend selection.

The hot per-pixel kernels have two interchangeable implementations:
numba-compiled loops and vectorized numpy. Numba is used when it is
importable, unless ``FUSELABEL_NO_NUMBA=1`` forces the numpy path.
"""
from __future__ import annotations

import os

import numpy as np

from . import numpy_kernels

_disabled = os.environ.get("FUSELABEL_NO_NUMBA", "").lower() in ("1", "true", "yes")

if not _disabled:
    try:
        from . import numba_kernels as _impl

        BACKEND = "numba"
    except ImportError:
        _impl = numpy_kernels
        BACKEND = "numpy"
else:
    _impl = numpy_kernels
    BACKEND = "numpy"

unproject_valid = _impl.unproject_valid
project_and_gate = _impl.project_and_gate
label_components_4 = _impl.label_components_4
class_counts_by_region = _impl.class_counts_by_region
top_voxel_majority = _impl.top_voxel_majority
accumulate_vectors = _impl.accumulate_vectors


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs.

    A no-op on the numpy backend; call once before timing anything.
    """
    depth = np.array([[1.0, 0.0], [2.0, 1.5]])
    rot = np.eye(3)
    trans = np.zeros(3)
    pts, _ = unproject_valid(depth, 1.0, 1.0, 0.5, 0.5, rot, trans)
    project_and_gate(pts, rot, trans, 1.0, 1.0, 0.5, 0.5, 2, 2, depth, 0.1)
    label_components_4(np.array([[1, 2], [1, 1]], dtype=np.int64))
    class_counts_by_region(
        np.zeros(2, dtype=np.int64), np.zeros(2, dtype=np.int64), 1, 2
    )
    top_voxel_majority(
        np.zeros(2, dtype=np.int64),
        np.arange(2, dtype=np.int64),
        np.zeros(2, dtype=np.int64),
        1,
        2,
    )
    accumulate_vectors(np.zeros(2, dtype=np.int64), np.ones((2, 3)), 1)
