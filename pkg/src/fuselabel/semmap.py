"""Top-down semantic and embedding grids.

Labeled RGB-D frames are lifted to world points, filtered to a height
band, and binned into square cells. A cell's class is the majority class
of the points in its topmost occupied 5 cm voxel; an embedding cell is
the mean of every embedding landing in it (all heights in band).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import accel
from .errors import DimensionMismatchError, EmptyGridError
from .geometry import Intrinsics, Pose, unproject
from .ingest import atomic_write_json, save_label_image, load_label_image, write_fseg, read_fseg

VOID = 0


@dataclass
class GridConfig:
    resolution: float = 0.05
    height_band: tuple[float, float] = (0.05, 1.8)  # inclusive, meters
    origin: tuple[float, float] | None = None        # world x, y of cell (0, 0)
    size: int | None = None                          # cells per side; None = auto-fit
    padding: float = 0.5                             # auto-fit margin, meters
    ceiling_ids: frozenset = frozenset()             # classes excluded outright


@dataclass
class MapFrame:
    """One input view for map building."""

    depth: np.ndarray
    pose: Pose
    intrinsics: Intrinsics
    labels: np.ndarray | None = None
    embeddings: np.ndarray | None = None  # (H*W, D) float32, row-major pixels


@dataclass
class SemanticGrid:
    classes: np.ndarray      # (m, m) uint16, 0 = undetected
    top_z: np.ndarray        # (m, m) float32 top-voxel base height, NaN = empty
    origin: tuple[float, float]
    resolution: float
    n_classes: int

    @property
    def size(self) -> int:
        return self.classes.shape[0]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(np.floor((x - self.origin[0]) / self.resolution)),
            int(np.floor((y - self.origin[1]) / self.resolution)),
        )

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        return (
            self.origin[0] + (cell[0] + 0.5) * self.resolution,
            self.origin[1] + (cell[1] + 0.5) * self.resolution,
        )


@dataclass
class EmbeddingGrid:
    vectors: np.ndarray  # (m, m, D) float32 per-cell means
    counts: np.ndarray   # (m, m) int64 contributions
    origin: tuple[float, float]
    resolution: float


def _collect_points(frames, config: GridConfig):
    """Unproject, band-filter, and tag all frames' points.

    Returns (xy (N,2), z (N,), classes (N,), row_payload) where
    row_payload maps each kept point back to its frame and flat pixel.
    """
    lo, hi = config.height_band
    per_frame = []
    for fi, frame in enumerate(frames):
        cloud = unproject(frame.depth, frame.intrinsics, frame.pose, frame.labels)
        z = cloud.positions[:, 2]
        keep = (z >= lo) & (z <= hi)
        if config.ceiling_ids and frame.labels is not None:
            keep &= ~np.isin(cloud.class_ids, list(config.ceiling_ids))
        per_frame.append(
            (cloud.positions[keep], cloud.class_ids[keep], cloud.pixel_indices[keep], fi)
        )
    return per_frame


def _fit_grid(per_frame, config: GridConfig):
    if config.origin is not None and config.size is not None:
        return tuple(config.origin), int(config.size)
    all_xy = [pts[:, :2] for pts, _, _, _ in per_frame if len(pts)]
    if not all_xy:
        raise EmptyGridError("no points fall inside the height band")
    xy = np.concatenate(all_xy)
    lo = xy.min(axis=0) - config.padding
    hi = xy.max(axis=0) + config.padding
    origin = (float(lo[0]), float(lo[1])) if config.origin is None else tuple(config.origin)
    extent = max(hi[0] - origin[0], hi[1] - origin[1])
    size = config.size or int(np.ceil(extent / config.resolution)) + 1
    return origin, size


def _bin_cells(points: np.ndarray, origin, resolution: float, size: int):
    ix = np.floor((points[:, 0] - origin[0]) / resolution).astype(np.int64)
    iy = np.floor((points[:, 1] - origin[1]) / resolution).astype(np.int64)
    ok = (ix >= 0) & (ix < size) & (iy >= 0) & (iy < size)
    return ix, iy, ok


def build_semantic_grid(frames, config: GridConfig | None = None, n_classes: int | None = None) -> SemanticGrid:
    """Build the top-down class grid from labeled RGB-D frames.

    Majority is taken per cell over the points of its topmost occupied
    voxel; ties go to the lowest class id; unobserved cells stay 0.
    """
    config = config or GridConfig()
    frames = list(frames)
    for frame in frames:
        if frame.labels is None:
            raise ValueError("build_semantic_grid requires labels on every frame")
    per_frame = _collect_points(frames, config)
    origin, size = _fit_grid(per_frame, config)

    cells_all, zvox_all, cls_all = [], [], []
    for pts, cls, _, _ in per_frame:
        if not len(pts):
            continue
        ix, iy, ok = _bin_cells(pts, origin, config.resolution, size)
        zv = np.floor(pts[:, 2] / config.resolution).astype(np.int64)
        cells_all.append((iy[ok] * size + ix[ok]))
        zvox_all.append(zv[ok])
        cls_all.append(cls[ok])

    classes_present = max((int(c.max()) for c in cls_all if len(c)), default=0)
    n_cls = max(n_classes or 0, classes_present + 1)

    grid_classes = np.zeros((size, size), dtype=np.uint16)
    top_z = np.full((size, size), np.nan, dtype=np.float32)
    if cells_all:
        cells = np.concatenate(cells_all)
        zvox = np.concatenate(zvox_all)
        cls = np.concatenate(cls_all)
        # shift voxel indices to be non-negative for the kernel's -1 marker
        shift = int(zvox.min(initial=0))
        cell_class, cell_top = accel.top_voxel_majority(
            cells, zvox - shift, cls.astype(np.int64), size * size, n_cls
        )
        grid_classes = cell_class.astype(np.uint16).reshape(size, size)
        occupied = cell_top >= 0
        tz = np.full(size * size, np.nan, dtype=np.float32)
        tz[occupied] = (cell_top[occupied] + shift) * config.resolution
        top_z = tz.reshape(size, size)

    return SemanticGrid(grid_classes, top_z, tuple(origin), config.resolution, n_cls - 1)


def localize_class(grid: SemanticGrid, class_id: int) -> np.ndarray:
    """All cells holding ``class_id`` as (ix, iy) rows in raster-scan order."""
    iy, ix = np.nonzero(grid.classes == class_id)
    return np.stack([ix, iy], axis=1).astype(np.int64)


def build_embedding_grid(frames, config: GridConfig | None = None) -> EmbeddingGrid:
    """Mean per-cell embedding over all in-band points (not top-voxel only)."""
    config = config or GridConfig()
    frames = list(frames)
    dim = None
    for frame in frames:
        if frame.embeddings is None:
            raise ValueError("build_embedding_grid requires embeddings on every frame")
        d = frame.embeddings.shape[1]
        if dim is None:
            dim = d
        elif d != dim:
            raise DimensionMismatchError("embeddings", (dim,), (d,))
    per_frame = _collect_points(frames, config)
    origin, size = _fit_grid(per_frame, config)

    sums = np.zeros((size * size, dim), dtype=np.float64)
    counts = np.zeros(size * size, dtype=np.int64)
    for pts, _, pix_idx, fi in per_frame:
        if not len(pts):
            continue
        ix, iy, ok = _bin_cells(pts, origin, config.resolution, size)
        cells = iy[ok] * size + ix[ok]
        vecs = frames[fi].embeddings[pix_idx[ok]]
        s, c = accel.accumulate_vectors(cells, np.asarray(vecs, dtype=np.float64), size * size)
        sums += s
        counts += c

    vectors = np.zeros((size * size, dim), dtype=np.float32)
    nz = counts > 0
    vectors[nz] = (sums[nz] / counts[nz, None]).astype(np.float32)
    return EmbeddingGrid(
        vectors.reshape(size, size, dim), counts.reshape(size, size),
        tuple(origin), config.resolution,
    )


def query_embedding_grid(grid: EmbeddingGrid, text_embedding: np.ndarray) -> tuple[int, int]:
    """Cell with the maximum inner product against the query vector.

    Only populated cells participate; ties resolve to the raster-scan
    first cell. Raises EmptyGridError when no cell is populated.
    """
    q = np.asarray(text_embedding, dtype=np.float64).ravel()
    if q.size != grid.vectors.shape[2]:
        raise DimensionMismatchError("query", (grid.vectors.shape[2],), (q.size,))
    counts = grid.counts.ravel()
    if not (counts > 0).any():
        raise EmptyGridError("embedding grid has no populated cells")
    scores = grid.vectors.reshape(-1, q.size).astype(np.float64) @ q
    scores[counts == 0] = -np.inf
    best = int(np.argmax(scores))
    size = grid.counts.shape[1]
    return (best % size, best // size)


# ---------------------------------------------------------------------------
# persistence

def save_semantic_grid(grid: SemanticGrid, png_path: Path, sidecar_path: Path):
    save_label_image(grid.classes, png_path)
    atomic_write_json(
        sidecar_path,
        {"origin": [grid.origin[0], grid.origin[1]], "resolution": grid.resolution,
         "n_classes": grid.n_classes, "size": grid.size},
    )


def load_semantic_grid(png_path: Path, sidecar_path: Path) -> SemanticGrid:
    import json

    classes = load_label_image(png_path)
    with open(sidecar_path, encoding="utf-8") as fh:
        side = json.load(fh)
    top_z = np.full(classes.shape, np.nan, dtype=np.float32)
    return SemanticGrid(
        classes, top_z, (float(side["origin"][0]), float(side["origin"][1])),
        float(side["resolution"]), int(side["n_classes"]),
    )


def save_embedding_grid(grid: EmbeddingGrid, fseg_path: Path, sidecar_path: Path):
    m = grid.counts.shape[0]
    write_fseg(grid.vectors.reshape(m * m, -1), fseg_path)
    atomic_write_json(
        sidecar_path,
        {"origin": [grid.origin[0], grid.origin[1]], "resolution": grid.resolution,
         "size": m, "counts": grid.counts.ravel().tolist()},
    )


def load_embedding_grid(fseg_path: Path, sidecar_path: Path) -> EmbeddingGrid:
    import json

    flat = read_fseg(fseg_path)
    with open(sidecar_path, encoding="utf-8") as fh:
        side = json.load(fh)
    m = int(side["size"])
    counts = np.asarray(side["counts"], dtype=np.int64).reshape(m, m)
    return EmbeddingGrid(
        flat.reshape(m, m, -1), counts,
        (float(side["origin"][0]), float(side["origin"][1])), float(side["resolution"]),
    )
