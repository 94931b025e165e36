"""Single-view fusion: segment voting, prompt-mask composition, background
filtering, and foreground-over-background overlay.

The flow per frame: class-agnostic segments are labeled by majority vote
over the semantic raster, non-background classes are discarded, and
detector/manual-box instance masks are painted on top in ascending score
order so the most confident instance owns contested pixels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import accel
from .errors import DimensionMismatchError, EmptyPromptError
from .ingest import (
    Detection,
    DetectionSet,
    SegmentSet,
    Vocabulary,
    atomic_write_json,
    decode_rle,
    load_label_image,
    save_label_image,
)

log = logging.getLogger(__name__)

VOID = 0


@dataclass
class FuseConfig:
    min_inside_frac: float = 0.8       # segment-in-box fraction for prompt composition
    min_detection_score: float = 0.3   # detector outputs below this are ignored
    use_ingested_masks: bool = False   # prefer Detection.mask_counts over composition


@dataclass
class InstanceMask:
    instance_id: int
    class_id: int
    score: float
    mask: np.ndarray
    provenance: str  # "detector" | "manual-box"


@dataclass
class InstanceMeta:
    id: int
    class_id: int
    score: float
    provenance: str
    area: int


@dataclass
class FusedAnnotation:
    semantic: np.ndarray    # (H, W) uint16 class ids
    instances: np.ndarray   # (H, W) uint16 instance ids, 0 = none
    metadata: list[InstanceMeta] = field(default_factory=list)


def vote_segment_labels(segset: SegmentSet, semantic: np.ndarray) -> np.ndarray:
    """Paint each segment with the majority class of its pixels.

    Void participates as a votable class; ties break to the lowest class
    id; pixels outside all segments keep their incoming label.
    """
    semantic = np.asarray(semantic)
    if semantic.shape != (segset.height, segset.width):
        raise DimensionMismatchError(
            "semantic", (segset.height, segset.width), semantic.shape
        )
    out = semantic.copy()
    if not segset.segments:
        return out
    seg_raster = segset.id_raster()
    covered = seg_raster >= 0
    n_classes = int(semantic.max()) + 1
    counts = accel.class_counts_by_region(
        seg_raster[covered].astype(np.int64),
        semantic[covered].astype(np.int64),
        len(segset.segments),
        n_classes,
    )
    winner = np.argmax(counts, axis=1).astype(out.dtype)  # first max = lowest class id
    out[covered] = winner[seg_raster[covered]]
    return out


def _box_slices(box, width: int, height: int):
    x, y, w, h = box
    x0 = max(0, int(np.floor(x)))
    y0 = max(0, int(np.floor(y)))
    x1 = min(width, int(np.ceil(x + w)))
    y1 = min(height, int(np.ceil(y + h)))
    return slice(y0, y1), slice(x0, x1)


def compose_mask_from_prompt(
    segset: SegmentSet,
    box,
    centroid,
    min_inside_frac: float = 0.8,
) -> np.ndarray:
    """Emulate a box+centroid prompt over the ingested segment set.

    Selects every segment with at least ``min_inside_frac`` of its area
    inside the box, plus (always) the segment containing the centroid,
    and returns the union of the selected segments.
    """
    rows, cols = _box_slices(box, segset.width, segset.height)
    cu = min(max(int(np.floor(centroid[0])), 0), segset.width - 1)
    cv = min(max(int(np.floor(centroid[1])), 0), segset.height - 1)

    selected = np.zeros((segset.height, segset.width), dtype=bool)
    picked = 0
    for seg in segset.segments:
        mask = seg.decode(segset.width, segset.height)
        inside = int(mask[rows, cols].sum())
        if inside and inside / seg.area >= min_inside_frac:
            selected |= mask
            picked += 1
        elif mask[cv, cu]:
            selected |= mask
            picked += 1
    if picked == 0:
        raise EmptyPromptError(
            f"prompt box {tuple(box)} with centroid ({centroid[0]}, {centroid[1]}) "
            f"selected no segments"
        )
    return selected


def instance_masks_from_detections(
    segset: SegmentSet,
    detections: DetectionSet,
    vocab: Vocabulary,
    manual_boxes: list[Detection] = (),
    config: FuseConfig | None = None,
) -> list[InstanceMask]:
    """Build one instance mask per usable detection plus manual boxes.

    Detections whose prompt selects no segments are dropped with a
    warning; manual boxes always carry score 1.0.
    """
    config = config or FuseConfig()
    out = []
    next_id = 1
    entries = [(d, "detector") for d in detections.detections]
    entries += [(b, "manual-box") for b in manual_boxes]
    for det, provenance in entries:
        if provenance == "detector" and det.score < config.min_detection_score:
            continue
        if det.class_id not in vocab.names:
            log.warning("detection with unknown class id %d dropped", det.class_id)
            continue
        mask = None
        if config.use_ingested_masks and det.mask_counts is not None:
            mask = decode_rle(det.mask_counts, segset.width, segset.height)
        if mask is None:
            try:
                mask = compose_mask_from_prompt(
                    segset, det.box, det.centroid(), config.min_inside_frac
                )
            except EmptyPromptError:
                log.warning(
                    "detection class=%d box=%s produced an empty prompt; dropped",
                    det.class_id, det.box,
                )
                continue
        score = 1.0 if provenance == "manual-box" else det.score
        out.append(InstanceMask(next_id, det.class_id, score, mask, provenance))
        next_id += 1
    return out


def filter_background(labels: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Keep background-class pixels; everything else becomes void."""
    labels = np.asarray(labels)
    keep = np.zeros(int(labels.max(initial=0)) + 1, dtype=bool)
    for cid in vocab.background:
        if cid < keep.size:
            keep[cid] = True
    out = np.where(keep[labels], labels, VOID).astype(labels.dtype)
    return out


def overlay_instances(
    background: np.ndarray, instances: list[InstanceMask]
) -> FusedAnnotation:
    """Superimpose instance masks on the background semantic raster.

    Painting ascends by score so the highest-score instance owns every
    contested pixel (equal scores: the lower instance id wins). Instances
    fully occluded after painting are dropped from the metadata.
    """
    semantic = np.asarray(background).astype(np.uint16).copy()
    inst_raster = np.zeros_like(semantic)
    for inst in sorted(instances, key=lambda m: (m.score, -m.instance_id)):
        if inst.mask.shape != semantic.shape:
            raise DimensionMismatchError(
                f"instance {inst.instance_id}", semantic.shape, inst.mask.shape
            )
        semantic[inst.mask] = inst.class_id
        inst_raster[inst.mask] = inst.instance_id
    metadata = []
    for inst in instances:
        area = int((inst_raster == inst.instance_id).sum())
        if area == 0:
            continue
        metadata.append(
            InstanceMeta(inst.instance_id, inst.class_id, inst.score, inst.provenance, area)
        )
    return FusedAnnotation(semantic, inst_raster, metadata)


def fuse_frame(
    segset: SegmentSet,
    semantic: np.ndarray,
    detections: DetectionSet,
    vocab: Vocabulary,
    manual_boxes: list[Detection] = (),
    config: FuseConfig | None = None,
) -> FusedAnnotation:
    """Full single-view fusion for one frame."""
    config = config or FuseConfig()
    voted = vote_segment_labels(segset, semantic)
    background = filter_background(voted, vocab)
    instances = instance_masks_from_detections(
        segset, detections, vocab, manual_boxes, config
    )
    return overlay_instances(background, instances)


# ---------------------------------------------------------------------------
# persistence: semantic PNG + instance PNG + JSON sidecar

def save_annotation(ann: FusedAnnotation, directory: Path, frame_id: str):
    directory = Path(directory)
    save_label_image(ann.semantic, directory / f"{frame_id}_semantic.png")
    save_label_image(ann.instances, directory / f"{frame_id}_instance.png")
    atomic_write_json(
        directory / f"{frame_id}_instances.json",
        {
            "instances": [
                {"id": m.id, "class_id": m.class_id, "score": m.score,
                 "provenance": m.provenance, "area": m.area}
                for m in ann.metadata
            ]
        },
    )


def load_annotation(directory: Path, frame_id: str) -> FusedAnnotation:
    import json

    directory = Path(directory)
    semantic = load_label_image(directory / f"{frame_id}_semantic.png")
    instances = load_label_image(directory / f"{frame_id}_instance.png")
    with open(directory / f"{frame_id}_instances.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    metadata = [
        InstanceMeta(int(m["id"]), int(m["class_id"]), float(m["score"]),
                     str(m["provenance"]), int(m["area"]))
        for m in doc.get("instances", [])
    ]
    return FusedAnnotation(semantic, instances, metadata)
