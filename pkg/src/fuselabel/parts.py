"""Object-part discovery: pick segments inside container detections,
cluster their features, and back-project a human-chosen cluster as named
part masks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import Detection, DetectionSet, FeatureTable, Segment, SegmentSet


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray    # (k, d)
    assignments: np.ndarray  # (n,) int64
    inertia: float
    seed: int
    n_iters: int


@dataclass
class PartMask:
    frame_id: str
    segment_id: int
    detection_index: int
    part_name: str
    counts: list[int]        # RLE of the part mask (equals the source segment)
    area: int
    bbox: tuple[int, int, int, int]


@dataclass
class PartAnnotationSet:
    part_name: str
    masks: list[PartMask] = field(default_factory=list)


def candidate_segments(
    segset: SegmentSet,
    detections: DetectionSet,
    container_class: int,
    min_inside_frac: float = 0.5,
) -> list[tuple[int, int]]:
    """Segments mostly inside any container-class detection box.

    Returns (segment_id, detection_index) pairs in segment-id order; a
    segment qualifying under several boxes reports the first.
    """
    boxes = [
        (i, d.box) for i, d in enumerate(detections.detections)
        if d.class_id == container_class
    ]
    out = []
    for seg in sorted(segset.segments, key=lambda s: s.id):
        mask = seg.decode(segset.width, segset.height)
        for det_index, (x, y, w, h) in boxes:
            x0, y0 = max(0, int(np.floor(x))), max(0, int(np.floor(y)))
            x1 = min(segset.width, int(np.ceil(x + w)))
            y1 = min(segset.height, int(np.ceil(y + h)))
            inside = int(mask[y0:y1, x0:x1].sum())
            if inside and inside / seg.area >= min_inside_frac:
                out.append((seg.id, det_index))
                break
    return out


def normalize_rows(features: np.ndarray) -> np.ndarray:
    """L2-normalize feature rows; zero rows stay zero."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return features / norms


def _plusplus_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centroids = np.empty((k, features.shape[1]), dtype=np.float64)
    centroids[0] = features[rng.integers(n)]
    d2 = np.sum((features - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[i] = features[pick]
        d2 = np.minimum(d2, np.sum((features - centroids[i]) ** 2, axis=1))
    return centroids


def _assign(features: np.ndarray, centroids: np.ndarray):
    # argmin returns the first minimum, i.e. the lowest cluster index on ties
    d2 = (
        np.sum(features ** 2, axis=1)[:, None]
        - 2.0 * features @ centroids.T
        + np.sum(centroids ** 2, axis=1)[None, :]
    )
    assignments = np.argmin(d2, axis=1)
    inertia = float(np.sum((features - centroids[assignments]) ** 2))
    return assignments, inertia


def kmeans(
    features,
    k: int,
    seed: int,
    max_iters: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
) -> Clustering:
    """Seeded k-means++ with Lloyd iterations and deterministic restarts.

    The best of ``n_init`` runs (by final inertia) is returned; restart
    sub-seeds derive from ``seed`` so the result is reproducible.
    """
    if isinstance(features, FeatureTable):
        features = features.features
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    best = None
    for restart in range(max(1, n_init)):
        run = _kmeans_once(features, k, np.random.default_rng([seed, restart]),
                           max_iters, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return Clustering(k=k, centroids=best.centroids, assignments=best.assignments,
                      inertia=best.inertia, seed=seed, n_iters=best.n_iters)


def _kmeans_once(features, k, rng, max_iters, tol) -> Clustering:
    """One k-means++ / Lloyd run; inertia is checked to be non-increasing
    every iteration, and empty clusters re-seed to the farthest point."""
    centroids = _plusplus_init(features, k, rng)
    assignments, inertia = _assign(features, centroids)
    n_iters = 0
    for n_iters in range(1, max_iters + 1):
        new_centroids = centroids.copy()
        for c in range(k):
            members = assignments == c
            if members.any():
                new_centroids[c] = features[members].mean(axis=0)
        # relocate empty clusters to the current farthest points
        dist = np.sum((features - new_centroids[assignments]) ** 2, axis=1)
        for c in range(k):
            if not (assignments == c).any():
                far = int(np.argmax(dist))
                new_centroids[c] = features[far]
                dist[far] = 0.0

        new_assignments, new_inertia = _assign(features, new_centroids)
        if new_inertia > inertia + 1e-9 * max(1.0, inertia):
            raise AssertionError(
                f"Lloyd inertia increased: {inertia} -> {new_inertia}"
            )
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids, assignments, inertia = new_centroids, new_assignments, new_inertia
        if shift < tol:
            break

    return Clustering(
        k=k,
        centroids=centroids,
        assignments=assignments.astype(np.int64),
        inertia=inertia,
        seed=0,
        n_iters=n_iters,
    )


@dataclass
class SegmentRef:
    """Ties one clustered feature row back to its source segment."""

    frame_id: str
    segment: Segment
    detection_index: int


def backproject_cluster(
    clustering: Clustering,
    cluster_index: int,
    refs: list[SegmentRef],
    part_name: str,
) -> PartAnnotationSet:
    """Turn every segment of the chosen cluster into a named part mask."""
    if not 0 <= cluster_index < clustering.k:
        raise ValueError(f"cluster index {cluster_index} outside [0, {clustering.k})")
    if len(refs) != clustering.assignments.shape[0]:
        raise ValueError("refs do not align with clustering assignments")
    out = PartAnnotationSet(part_name=part_name)
    for ref, assignment in zip(refs, clustering.assignments):
        if assignment != cluster_index:
            continue
        seg = ref.segment
        out.masks.append(
            PartMask(
                frame_id=ref.frame_id,
                segment_id=seg.id,
                detection_index=ref.detection_index,
                part_name=part_name,
                counts=list(seg.counts),
                area=seg.area,
                bbox=tuple(seg.bbox),
            )
        )
    return out
