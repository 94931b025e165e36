"""Numba twins of the numpy kernels. Same signatures, same outputs.

Import of this module requires numba; the accel package falls back to
the numpy implementations when numba is missing or disabled.
"""
from __future__ import annotations

import numba
import numpy as np

_JIT = {"cache": True, "nogil": True}


@numba.njit(**_JIT)
def unproject_valid(depth, fx, fy, cx, cy, rot, trans):
    h, w = depth.shape
    n = 0
    for v in range(h):
        for u in range(w):
            if depth[v, u] > 0.0:
                n += 1
    points = np.empty((n, 3), dtype=np.float64)
    flat_idx = np.empty(n, dtype=np.int64)
    i = 0
    for v in range(h):
        for u in range(w):
            d = depth[v, u]
            if d <= 0.0:
                continue
            x = d * (u - cx) / fx
            y = d * (v - cy) / fy
            points[i, 0] = rot[0, 0] * x + rot[0, 1] * y + rot[0, 2] * d + trans[0]
            points[i, 1] = rot[1, 0] * x + rot[1, 1] * y + rot[1, 2] * d + trans[1]
            points[i, 2] = rot[2, 0] * x + rot[2, 1] * y + rot[2, 2] * d + trans[2]
            flat_idx[i] = v * w + u
            i += 1
    return points, flat_idx


@numba.njit(**_JIT)
def project_and_gate(points, rot_wc, t_wc, fx, fy, cx, cy, width, height, depth, tol):
    n = points.shape[0]
    flat_pix = np.empty(n, dtype=np.int64)
    kept_idx = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        x = rot_wc[0, 0] * px + rot_wc[0, 1] * py + rot_wc[0, 2] * pz + t_wc[0]
        y = rot_wc[1, 0] * px + rot_wc[1, 1] * py + rot_wc[1, 2] * pz + t_wc[1]
        z = rot_wc[2, 0] * px + rot_wc[2, 1] * py + rot_wc[2, 2] * pz + t_wc[2]
        if z <= 0.0:
            continue
        iu = np.int64(np.rint(fx * x / z + cx))
        iv = np.int64(np.rint(fy * y / z + cy))
        if iu < 0 or iu >= width or iv < 0 or iv >= height:
            continue
        d = depth[iv, iu]
        if d <= 0.0 or abs(z - d) > tol:
            continue
        flat_pix[m] = iv * width + iu
        kept_idx[m] = i
        m += 1
    return flat_pix[:m], kept_idx[:m]


@numba.njit(**_JIT)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


@numba.njit(**_JIT)
def label_components_4(labels):
    h, w = labels.shape
    parent = np.arange(h * w, dtype=np.int64)
    for v in range(h):
        for u in range(w):
            i = v * w + u
            if u > 0 and labels[v, u - 1] == labels[v, u]:
                a, b = _find(parent, i), _find(parent, i - 1)
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
            if v > 0 and labels[v - 1, u] == labels[v, u]:
                a, b = _find(parent, i), _find(parent, i - w)
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    out = np.empty((h, w), dtype=np.int64)
    region_of_root = np.full(h * w, -1, dtype=np.int64)
    next_id = 0
    for v in range(h):
        for u in range(w):
            root = _find(parent, v * w + u)
            if region_of_root[root] < 0:
                region_of_root[root] = next_id
                next_id += 1
            out[v, u] = region_of_root[root]
    return out


@numba.njit(**_JIT)
def class_counts_by_region(region_ids, classes, n_regions, n_classes):
    counts = np.zeros((n_regions, n_classes), dtype=np.int64)
    for i in range(region_ids.shape[0]):
        counts[region_ids[i], classes[i]] += 1
    return counts


@numba.njit(**_JIT)
def top_voxel_majority(cells, zvox, classes, n_cells, n_classes):
    top = np.full(n_cells, -1, dtype=np.int64)
    for i in range(cells.shape[0]):
        c = cells[i]
        if zvox[i] > top[c]:
            top[c] = zvox[i]
    counts = np.zeros((n_cells, n_classes), dtype=np.int64)
    for i in range(cells.shape[0]):
        c = cells[i]
        if zvox[i] == top[c]:
            counts[c, classes[i]] += 1
    cell_class = np.zeros(n_cells, dtype=np.int64)
    for c in range(n_cells):
        if top[c] < 0:
            continue
        best, best_n = 0, counts[c, 0]
        for k in range(1, n_classes):
            if counts[c, k] > best_n:
                best, best_n = k, counts[c, k]
        cell_class[c] = best
    return cell_class, top


@numba.njit(**_JIT)
def accumulate_vectors(cells, vectors, n_cells):
    d = vectors.shape[1]
    sums = np.zeros((n_cells, d), dtype=np.float64)
    counts = np.zeros(n_cells, dtype=np.int64)
    for i in range(cells.shape[0]):
        c = cells[i]
        counts[c] += 1
        for j in range(d):
            sums[c, j] += vectors[i, j]
    return sums, counts
