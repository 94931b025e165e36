"""Multi-view verification: repaint 4-connected same-label regions using
averaged per-class scores voted by reprojected reference views.

Each reference frame's annotation is lifted to a labeled point cloud,
projected into the target view, and depth cross-checked. A region of the
target annotation scores class c as the mean of (a) each reference's
fraction of region pixels hit by class-c projections and (b) the target's
own indicator (1 for the region's current class, 0 otherwise). The region
is repainted with the argmax.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import DimensionMismatchError
from .geometry import Intrinsics, LabeledPointCloud, Pose, pose_distance

VOID = 0


@dataclass
class VerifyConfig:
    num_references: int = 2
    depth_tolerance: float = 0.1   # meters; |projected z - target depth| gate
    rotation_weight: float = 0.5   # meters per radian in pose_distance


@dataclass
class RegionSet:
    """Partition of an image into maximal 4-connected same-label regions."""

    region_ids: np.ndarray  # (H, W) int64, ids in raster-scan order of first pixel
    classes: np.ndarray     # (R,) int64 label of each region
    sizes: np.ndarray       # (R,) int64 pixel count of each region

    @property
    def n_regions(self) -> int:
        return len(self.classes)


@dataclass
class VoteTable:
    """Averaged per-class scores for one region."""

    scores: np.ndarray  # (n_classes,) float64 in [0, 1]
    own_class: int
    n_references: int

    def winner(self) -> int:
        """Argmax class; ties keep the own class, otherwise lowest id."""
        mx = self.scores.max()
        if self.scores[self.own_class] == mx:
            return self.own_class
        return int(np.argmax(self.scores))


def connected_components_4(labels: np.ndarray) -> RegionSet:
    """Maximal 4-connected same-label regions of a raster."""
    labels = np.asarray(labels)
    region_ids = accel.label_components_4(labels.astype(np.int64))
    flat_regions = region_ids.ravel()
    n = int(flat_regions.max()) + 1 if flat_regions.size else 0
    sizes = np.bincount(flat_regions, minlength=n).astype(np.int64)
    # ids are raster-scan ordered, so the first occurrence of id r is the
    # first pixel of region r
    first = np.unique(flat_regions, return_index=True)[1]
    classes = labels.ravel()[first].astype(np.int64)
    return RegionSet(region_ids, classes, sizes)


def select_reference_frames(
    target_id: str,
    poses: dict[str, Pose],
    k: int,
    rotation_weight: float = 0.5,
) -> list[str]:
    """Pick the k frames closest in pose to the target (ties by frame id)."""
    target = poses[target_id]
    ranked = sorted(
        (
            (pose_distance(target, pose, rotation_weight), fid)
            for fid, pose in poses.items()
            if fid != target_id
        ),
    )
    return [fid for _, fid in ranked[:k]]


def project_reference(
    cloud: LabeledPointCloud,
    intr: Intrinsics,
    pose: Pose,
    depth: np.ndarray,
    tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Project a labeled cloud into the target view with the depth gate.

    Returns (pixels (M, 2) int64 as (u, v), class_ids (M,)): points that
    land in view, on valid target depth, within ``tol`` meters of it.
    """
    if tol <= 0:
        raise ValueError(f"depth tolerance must be positive, got {tol}")
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != intr.shape:
        raise DimensionMismatchError("depth", intr.shape, depth.shape)
    inv = pose.inverse()
    flat_pix, kept = accel.project_and_gate(
        cloud.positions, inv.rotation, inv.translation,
        intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height,
        depth, tol,
    )
    pixels = np.stack([flat_pix % intr.width, flat_pix // intr.width], axis=1)
    return pixels, cloud.class_ids[kept]


def region_votes(
    region_pixels: np.ndarray,
    projections: list[tuple[np.ndarray, np.ndarray]],
    own_class: int,
    n_classes: int,
    width: int,
) -> VoteTable:
    """Score every class for one region from per-reference projections.

    ``region_pixels`` are row-major flat indices of the region;
    ``projections`` holds one (pixels (M,2), class_ids) pair per
    reference. Void projections do not vote.
    """
    region_pixels = np.asarray(region_pixels, dtype=np.int64)
    size = region_pixels.size
    if size == 0:
        raise ValueError("region is empty")
    member = set(region_pixels.tolist())
    scores = np.zeros(n_classes, dtype=np.float64)
    for pixels, class_ids in projections:
        counts = np.zeros(n_classes, dtype=np.float64)
        flat = pixels[:, 1].astype(np.int64) * width + pixels[:, 0]
        for f, c in zip(flat.tolist(), np.asarray(class_ids).tolist()):
            if c != VOID and f in member:
                counts[c] += 1.0
        scores += counts / size
    scores[own_class] += 1.0
    scores /= len(projections) + 1
    return VoteTable(scores, own_class, len(projections))


def verify_frame(
    semantic: np.ndarray,
    depth: np.ndarray,
    intr: Intrinsics,
    pose: Pose,
    references: list[LabeledPointCloud],
    config: VerifyConfig | None = None,
) -> np.ndarray:
    """Repaint each region of ``semantic`` with its vote-table argmax.

    Single pass, non-iterative; regions with no projected voters keep
    their label. Returns a new raster of the same dtype.
    """
    config = config or VerifyConfig()
    semantic = np.asarray(semantic)
    regions = connected_components_4(semantic)
    n_regions = regions.n_regions
    n_classes = int(semantic.max()) + 1
    for ref in references:
        if len(ref):
            n_classes = max(n_classes, int(ref.class_ids.max()) + 1)

    accum = np.zeros((n_regions, n_classes), dtype=np.float64)
    flat_region = regions.region_ids.ravel()
    inv = pose.inverse()
    for ref in references:
        flat_pix, kept = accel.project_and_gate(
            ref.positions, inv.rotation, inv.translation,
            intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height,
            np.asarray(depth, dtype=np.float64), config.depth_tolerance,
        )
        classes = ref.class_ids[kept]
        voters = classes != VOID
        counts = accel.class_counts_by_region(
            flat_region[flat_pix[voters]], classes[voters].astype(np.int64),
            n_regions, n_classes,
        )
        accum += counts / regions.sizes[:, None]

    accum[np.arange(n_regions), regions.classes] += 1.0
    accum /= len(references) + 1

    mx = accum.max(axis=1)
    own_score = accum[np.arange(n_regions), regions.classes]
    winners = np.where(own_score == mx, regions.classes, np.argmax(accum, axis=1))
    return winners.astype(semantic.dtype)[regions.region_ids]


def apply_verified_semantic(annotation, verified: np.ndarray):
    """Adopt a verified raster into a fused annotation.

    Instance ids are cleared wherever verification changed the class;
    instances left with no pixels drop out of the metadata. Mutates and
    returns the annotation.
    """
    changed = verified != annotation.semantic
    instances = annotation.instances.copy()
    instances[changed] = 0
    kept = []
    for meta in annotation.metadata:
        area = int((instances == meta.id).sum())
        if area:
            meta.area = area
            kept.append(meta)
    annotation.semantic = verified.astype(annotation.semantic.dtype)
    annotation.instances = instances
    annotation.metadata = kept
    return annotation


class CloudCache:
    """Concurrency-safe cache for reference point clouds keyed by frame id."""

    def __init__(self):
        self._lock = threading.Lock()
        self._clouds: dict[str, LabeledPointCloud] = {}

    def get_or_build(self, key: str, builder) -> LabeledPointCloud:
        with self._lock:
            cloud = self._clouds.get(key)
        if cloud is not None:
            return cloud
        built = builder()
        with self._lock:
            # first insertion wins so all workers share one instance
            return self._clouds.setdefault(key, built)
