"""Vectorized numpy implementations of the hot per-pixel kernels.

These are the reference semantics; the numba twins in ``numba_kernels``
must produce identical outputs on identical inputs.
"""
from __future__ import annotations

import numpy as np


def unproject_valid(depth, fx, fy, cx, cy, rot, trans):
    """Lift every pixel with depth > 0 to a world-frame 3D point.

    Returns (points (N,3) float64, flat_idx (N,) int64) where flat_idx
    indexes the source pixel in row-major order.
    """
    h, w = depth.shape
    vv, uu = np.nonzero(depth > 0.0)
    d = depth[vv, uu]
    x = d * (uu - cx) / fx
    y = d * (vv - cy) / fy
    cam = np.stack([x, y, d], axis=1)
    points = cam @ rot.T + trans
    return points, (vv * w + uu).astype(np.int64)


def project_and_gate(points, rot_wc, t_wc, fx, fy, cx, cy, width, height, depth, tol):
    """Project world points into a camera and keep depth-consistent hits.

    rot_wc/t_wc map world to camera. A point survives when it lands in
    front of the camera, inside the image, on a pixel with valid depth,
    and |z - depth[pixel]| <= tol. Returns (flat_pix (M,), kept_idx (M,)).
    """
    cam = points @ rot_wc.T + t_wc
    z = cam[:, 2]
    ok = z > 0.0
    u = np.full(z.shape, -1.0)
    v = np.full(z.shape, -1.0)
    np.divide(fx * cam[:, 0], z, out=u, where=ok)
    np.divide(fy * cam[:, 1], z, out=v, where=ok)
    iu = np.rint(u + cx).astype(np.int64)
    iv = np.rint(v + cy).astype(np.int64)
    ok &= (iu >= 0) & (iu < width) & (iv >= 0) & (iv < height)
    iu_c = np.where(ok, iu, 0)
    iv_c = np.where(ok, iv, 0)
    d = depth[iv_c, iu_c]
    ok &= (d > 0.0) & (np.abs(z - d) <= tol)
    kept = np.nonzero(ok)[0].astype(np.int64)
    return (iv[kept] * width + iu[kept]).astype(np.int64), kept


def label_components_4(labels):
    """4-connected components of equal-valued pixels.

    Region ids are assigned in raster-scan order of each region's first
    pixel, starting at 0. Returns an int64 raster of the same shape.
    """
    h, w = labels.shape
    ids = np.arange(h * w, dtype=np.int64).reshape(h, w)
    lab = labels
    while True:
        prev = ids.copy()
        # pull the min id across each same-label edge, one direction at a
        # time; every RHS reads the current ids so updates never regress
        m = lab[1:, :] == lab[:-1, :]
        ids[1:, :] = np.where(m, np.minimum(ids[1:, :], ids[:-1, :]), ids[1:, :])
        ids[:-1, :] = np.where(m, np.minimum(ids[:-1, :], ids[1:, :]), ids[:-1, :])
        m = lab[:, 1:] == lab[:, :-1]
        ids[:, 1:] = np.where(m, np.minimum(ids[:, 1:], ids[:, :-1]), ids[:, 1:])
        ids[:, :-1] = np.where(m, np.minimum(ids[:, :-1], ids[:, 1:]), ids[:, :-1])
        # pointer jumping: chase each pixel's id to its current root
        flat = ids.ravel()
        for _ in range(2):
            flat = flat[flat]
        ids = flat.reshape(h, w)
        if np.array_equal(ids, prev):
            break
    # renumber roots to sequential ids by raster-scan first occurrence
    _, first, inverse = np.unique(ids.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse].reshape(h, w).astype(np.int64)


def class_counts_by_region(region_ids, classes, n_regions, n_classes):
    """Count, per region, how many entries carry each class id."""
    combined = region_ids.astype(np.int64) * n_classes + classes.astype(np.int64)
    counts = np.bincount(combined, minlength=n_regions * n_classes)
    return counts.reshape(n_regions, n_classes).astype(np.int64)


def top_voxel_majority(cells, zvox, classes, n_cells, n_classes):
    """Majority class among points in each cell's topmost occupied voxel.

    Ties go to the lowest class id. Empty cells get class 0 and top
    voxel -1. Returns (cell_class (n_cells,), cell_top (n_cells,)).
    """
    top = np.full(n_cells, -1, dtype=np.int64)
    np.maximum.at(top, cells, zvox)
    sel = zvox == top[cells]
    counts = np.bincount(
        cells[sel] * n_classes + classes[sel], minlength=n_cells * n_classes
    ).reshape(n_cells, n_classes)
    cell_class = np.argmax(counts, axis=1).astype(np.int64)
    cell_class[top < 0] = 0
    return cell_class, top


def accumulate_vectors(cells, vectors, n_cells):
    """Sum D-dimensional vectors into their cells; also count per cell."""
    d = vectors.shape[1]
    sums = np.zeros((n_cells, d), dtype=np.float64)
    np.add.at(sums, cells, vectors.astype(np.float64))
    counts = np.bincount(cells, minlength=n_cells).astype(np.int64)
    return sums, counts
