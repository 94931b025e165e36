"""Stage orchestration: the fuse / verify / eval / map / navigate / parts
stages behind the CLI, each reading a manifest plus prior-stage artifacts
and writing its own stage directory.

All artifact writes are atomic (temp file + rename) and deterministic:
rerunning a stage on unchanged inputs reproduces byte-identical outputs
regardless of worker count. Run logs carry timing and warnings and live
under logs/, which is not part of the artifact contract.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FuseLabelError, MissingInputError
from .fuse import FuseConfig, fuse_frame, load_annotation, save_annotation
from .geometry import unproject
from .ingest import (
    Manifest,
    atomic_write_bytes,
    atomic_write_json,
    load_depth,
    load_detections,
    load_feature_table,
    load_intrinsics,
    load_label_image,
    load_manual_boxes,
    load_pose,
    load_rgb,
    load_segments,
    read_fseg,
    save_label_image,
)
from .metrics import ConfusionMatrix, evaluation_report, format_report_text, map_vocabulary
from .mvverify import (
    CloudCache,
    VerifyConfig,
    apply_verified_semantic,
    select_reference_frames,
    verify_frame,
)
from .nav import NavConfig, navigable_mask, run_suite
from .parts import SegmentRef, backproject_cluster, candidate_segments, kmeans, normalize_rows
from .semmap import (
    GridConfig,
    MapFrame,
    SemanticGrid,
    build_embedding_grid,
    build_semantic_grid,
    load_semantic_grid,
    save_embedding_grid,
    save_semantic_grid,
)
from .synthetic import class_colors

DEFAULT_WORKERS = os.cpu_count() or 1


class StageLog:
    """JSON-lines run log; not part of the deterministic artifact set."""

    def __init__(self, out_root: Path, stage: str):
        self.path = Path(out_root) / "logs" / f"{stage}.jsonl"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, **record):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        self._fh.close()


def _require(path: Path, produced_by: str) -> Path:
    if not Path(path).exists():
        raise FuseLabelError(
            f"missing prerequisite artifact {path} (run the {produced_by!r} stage first)"
        )
    return Path(path)


def _map_frames(frames, fn, workers: int):
    """Apply fn over frames concurrently, returning results in frame order."""
    if workers <= 1:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, frames))


# ---------------------------------------------------------------------------
# fuse

def run_fuse(
    manifest: Manifest,
    out_root: Path,
    config: FuseConfig | None = None,
    workers: int = DEFAULT_WORKERS,
) -> Path:
    config = config or FuseConfig()
    vocab = manifest.load_vocabulary()
    out_dir = Path(out_root) / "fused"
    log = StageLog(out_root, "fuse")
    try:
        for scene in manifest.scenes:
            sdir = out_dir / scene.id
            sdir.mkdir(parents=True, exist_ok=True)

            def one(frame, scene_id=scene.id, sdir=sdir):
                t0 = time.monotonic()
                segset = load_segments(frame.path("segments"))
                semantic = load_label_image(frame.path("semantic"))
                detections = load_detections(frame.path("detections"))
                manual = (
                    load_manual_boxes(frame.path("manual_boxes"))
                    if frame.has("manual_boxes") else []
                )
                ann = fuse_frame(segset, semantic, detections, vocab, manual, config)
                save_annotation(ann, sdir, frame.id)
                eligible = sum(
                    1 for d in detections.detections
                    if d.score >= config.min_detection_score and d.class_id in vocab.names
                ) + len(manual)
                warnings = []
                if eligible > len(ann.metadata):
                    warnings.append(
                        f"{eligible - len(ann.metadata)} detections produced no instance"
                    )
                return {"scene": scene_id, "frame": frame.id,
                        "ms": round(1000 * (time.monotonic() - t0), 3),
                        "instances": len(ann.metadata), "warnings": warnings}

            for record in _map_frames(scene.frames, one, workers):
                log.write(stage="fuse", **record)
    finally:
        log.close()
    return out_dir


# ---------------------------------------------------------------------------
# verify

def run_verify(
    manifest: Manifest,
    out_root: Path,
    config: VerifyConfig | None = None,
    workers: int = DEFAULT_WORKERS,
    fused_dir: Path | None = None,
) -> Path:
    config = config or VerifyConfig()
    fused_dir = Path(fused_dir) if fused_dir else Path(out_root) / "fused"
    out_dir = Path(out_root) / "verified"
    log = StageLog(out_root, "verify")
    try:
        for scene in manifest.scenes:
            sdir = out_dir / scene.id
            sdir.mkdir(parents=True, exist_ok=True)
            poses = {}
            for frame in scene.frames:
                if not frame.has("pose") or not frame.has("depth"):
                    raise MissingInputError(frame.id, "pose/depth")
                poses[frame.id] = load_pose(frame.path("pose"))
            frames_by_id = {f.id: f for f in scene.frames}
            cache = CloudCache()

            def build_cloud(frame_id, scene_id=scene.id):
                frame = frames_by_id[frame_id]
                _require(fused_dir / scene_id / f"{frame_id}_semantic.png", "fuse")
                ann = load_annotation(fused_dir / scene_id, frame_id)
                depth = load_depth(frame.path("depth"))
                intr = load_intrinsics(frame.path("intrinsics"))
                return unproject(depth, intr, poses[frame_id], ann.semantic, frame_id)

            def one(frame, scene_id=scene.id, sdir=sdir):
                t0 = time.monotonic()
                _require(fused_dir / scene_id / f"{frame.id}_semantic.png", "fuse")
                ann = load_annotation(fused_dir / scene_id, frame.id)
                depth = load_depth(frame.path("depth"))
                intr = load_intrinsics(frame.path("intrinsics"))
                ref_ids = select_reference_frames(
                    frame.id, poses, config.num_references, config.rotation_weight
                )
                clouds = [
                    cache.get_or_build(rid, lambda rid=rid: build_cloud(rid))
                    for rid in ref_ids
                ]
                verified = verify_frame(
                    ann.semantic, depth, intr, poses[frame.id], clouds, config
                )
                changed = verified != ann.semantic
                apply_verified_semantic(ann, verified)
                save_annotation(ann, sdir, frame.id)
                return {"scene": scene_id, "frame": frame.id,
                        "ms": round(1000 * (time.monotonic() - t0), 3),
                        "references": ref_ids, "changed_px": int(changed.sum())}

            for record in _map_frames(scene.frames, one, workers):
                log.write(stage="verify", **record)
    finally:
        log.close()
    return out_dir


# ---------------------------------------------------------------------------
# eval

def run_eval(
    manifest: Manifest,
    out_root: Path,
    pred_dir: Path | None = None,
    apply_synonyms: bool = False,
) -> dict:
    """Score a stage's semantic rasters against gt_semantic frames."""
    vocab = manifest.load_vocabulary()
    pred_dir = Path(pred_dir) if pred_dir else Path(out_root) / "verified"
    cm = ConfusionMatrix.zeros(vocab.max_id + 1)
    scored = 0
    for scene in manifest.scenes:
        for frame in scene.frames:
            if not frame.has("gt_semantic"):
                continue
            pred_path = _require(pred_dir / scene.id / f"{frame.id}_semantic.png", "fuse/verify")
            pred = load_label_image(pred_path)
            gt = load_label_image(frame.path("gt_semantic"))
            if apply_synonyms:
                pred = map_vocabulary(pred, vocab, vocab.synonyms)
            cm.add(pred, gt)
            scored += 1
    if scored == 0:
        raise FuseLabelError("no frame carries gt_semantic; nothing to evaluate")
    report = evaluation_report(cm, vocab)
    report["frames"] = scored
    out_dir = Path(out_root) / "eval"
    atomic_write_json(out_dir / "report.json", report)
    atomic_write_bytes(out_dir / "report.txt", format_report_text(report).encode())
    return report


# ---------------------------------------------------------------------------
# map

def run_map(
    manifest: Manifest,
    out_root: Path,
    labels_from: str = "verified",
    grid_config: GridConfig | None = None,
    with_embeddings: bool = False,
    workers: int = DEFAULT_WORKERS,
) -> Path:
    """Build per-scene semantic (and optional embedding) grids.

    ``labels_from`` picks the semantic source: a stage directory name
    ("fused"/"verified") or the manifest fields "semantic"/"gt_semantic".
    """
    config = grid_config or GridConfig()
    vocab = manifest.load_vocabulary()
    if not config.ceiling_ids:
        try:
            config.ceiling_ids = frozenset({vocab.id_of("ceiling")})
        except KeyError:
            pass
    out_dir = Path(out_root) / "maps"
    log = StageLog(out_root, "map")
    try:
        for scene in manifest.scenes:
            t0 = time.monotonic()
            sdir = out_dir / scene.id
            sdir.mkdir(parents=True, exist_ok=True)

            def load_frame(frame, scene_id=scene.id):
                depth = load_depth(frame.path("depth"))
                pose = load_pose(frame.path("pose"))
                intr = load_intrinsics(frame.path("intrinsics"))
                if labels_from in ("semantic", "gt_semantic"):
                    labels = load_label_image(frame.path(labels_from))
                else:
                    path = _require(
                        Path(out_root) / labels_from / scene_id / f"{frame.id}_semantic.png",
                        labels_from,
                    )
                    labels = load_label_image(path)
                emb = None
                if with_embeddings:
                    emb = read_fseg(frame.path("embeddings"))
                return MapFrame(depth, pose, intr, labels, emb)

            frames = _map_frames(scene.frames, load_frame, workers)
            grid = build_semantic_grid(frames, config, n_classes=vocab.max_id + 1)
            save_semantic_grid(grid, sdir / "grid.png", sdir / "grid.json")
            if with_embeddings:
                egrid = build_embedding_grid(frames, config)
                save_embedding_grid(egrid, sdir / "embedding.bin", sdir / "embedding.json")
            log.write(stage="map", scene=scene.id, size=grid.size,
                      ms=round(1000 * (time.monotonic() - t0), 3))
    finally:
        log.close()
    return out_dir


# ---------------------------------------------------------------------------
# navigate

def _render_episode_map(grid: SemanticGrid, nav, episode, result, goal, scale: int = 4):
    rgb = class_colors(grid.classes)
    rgb[nav] = (rgb[nav] * 0.4 + np.array([150, 150, 255]) * 0.6).astype(np.uint8)
    img = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)

    def paint(cell, color, r=scale):
        cx, cy = cell[0] * scale + scale // 2, cell[1] * scale + scale // 2
        img[max(0, cy - r):cy + r, max(0, cx - r):cx + r] = color

    if goal is not None:
        paint(goal, (255, 220, 0))
    paint(episode.start, (255, 255, 255))
    paint(result.stop, (255, 0, 0), r=scale // 2)
    return img


def run_navigate(
    manifest: Manifest,
    out_root: Path,
    seeds: list[int],
    episodes_per_scene: int = 1,
    nav_config: NavConfig | None = None,
    maps_dir: Path | None = None,
    target_overrides: dict[str, int] | None = None,
) -> dict:
    nav_config = nav_config or NavConfig()
    vocab = manifest.load_vocabulary()
    maps_dir = Path(maps_dir) if maps_dir else Path(out_root) / "maps"
    out_dir = Path(out_root) / "nav"
    out_dir.mkdir(parents=True, exist_ok=True)

    scenes = {}
    for scene in manifest.scenes:
        png = _require(maps_dir / scene.id / "grid.png", "map")
        grid = load_semantic_grid(png, maps_dir / scene.id / "grid.json")
        scenes[scene.id] = (grid, navigable_mask(grid, vocab, nav_config.floor_name))

    report = run_suite(
        scenes, vocab, seeds, episodes_per_scene, nav_config, target_overrides
    )

    rows = []
    from .nav import localize_class, nearest_navigable

    for idx, (episode, result) in enumerate(report.episodes):
        grid, nav = scenes[episode.scene_id]
        eid = f"{episode.scene_id}-s{episode.seed}-e{idx}"
        goal = None
        targets = localize_class(grid, episode.target_class)
        if targets.shape[0]:
            try:
                goal = nearest_navigable(nav, targets)
            except FuseLabelError:
                goal = None
        render = _render_episode_map(grid, nav, episode, result, goal)
        buf = io.BytesIO()
        Image.fromarray(render).save(buf, format="PNG")
        atomic_write_bytes(out_dir / "renders" / f"{eid}.png", buf.getvalue())
        atomic_write_json(
            out_dir / "episodes" / f"{eid}.json",
            {
                "id": eid, "scene": episode.scene_id, "seed": episode.seed,
                "target_class": episode.target_class,
                "target_name": vocab.names.get(episode.target_class, str(episode.target_class)),
                "start": list(episode.start), "goal": list(goal) if goal else None,
                "stop": list(result.stop), "path_length": result.path_length,
                "cost": round(result.cost, 6), "success": bool(result.success),
                "reason": result.reason, "map_render": f"renders/{eid}.png",
            },
        )
        rows.append(
            (episode.scene_id, episode.seed,
             vocab.names.get(episode.target_class, str(episode.target_class)),
             f"{episode.start[0]}:{episode.start[1]}",
             f"{result.stop[0]}:{result.stop[1]}",
             f"{result.cost:.6f}", int(result.success), result.reason)
        )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scene", "seed", "target", "start", "stop", "cost", "success", "reason"])
    writer.writerows(rows)
    atomic_write_bytes(out_dir / "episodes.csv", buf.getvalue().encode())

    summary = report.summary()
    summary["episodes"] = len(report.episodes)
    atomic_write_json(out_dir / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# parts

def run_parts(
    manifest: Manifest,
    out_root: Path,
    container_class: str,
    k: int = 3,
    seed: int = 0,
    normalize: bool = True,
    selection: tuple[int, str] | None = None,
    min_inside_frac: float = 0.5,
) -> Path:
    """Cluster candidate segments per scene; optionally back-project.

    ``selection`` is (cluster_index, part_name); when omitted, a
    selection.json previously written by the review service is used if
    present.
    """
    vocab = manifest.load_vocabulary()
    container_id = vocab.id_of(container_class)
    out_dir = Path(out_root) / "parts"
    log = StageLog(out_root, "parts")
    try:
        for scene in manifest.scenes:
            t0 = time.monotonic()
            sdir = out_dir / scene.id
            sdir.mkdir(parents=True, exist_ok=True)
            refs: list[SegmentRef] = []
            rows = []
            shapes = {}
            for frame in scene.frames:
                segset = load_segments(frame.path("segments"))
                detections = load_detections(frame.path("detections"))
                table = load_feature_table(frame.path("features"))
                shapes[frame.id] = (segset.width, segset.height)
                by_id = {s.id: s for s in segset.segments}
                feat_row = {sid: i for i, sid in enumerate(table.segment_ids)}
                for seg_id, det_index in candidate_segments(
                    segset, detections, container_id, min_inside_frac
                ):
                    if seg_id not in feat_row:
                        raise MissingInputError(frame.id, f"features for segment {seg_id}")
                    refs.append(SegmentRef(frame.id, by_id[seg_id], det_index))
                    rows.append(table.features[feat_row[seg_id]])
            if not refs:
                log.write(stage="parts", scene=scene.id, candidates=0)
                continue
            features = np.stack(rows).astype(np.float64)
            if normalize:
                features = normalize_rows(features)
            n_clusters = min(k, len(refs))
            clustering = kmeans(features, n_clusters, seed)
            atomic_write_json(
                sdir / "clusters.json",
                {
                    "k": clustering.k, "seed": seed, "inertia": round(clustering.inertia, 9),
                    "normalized": normalize, "container_class": container_class,
                    "counts": np.bincount(clustering.assignments, minlength=clustering.k).tolist(),
                    "members": [
                        {"frame": r.frame_id, "segment_id": r.segment.id,
                         "detection_index": r.detection_index,
                         "cluster": int(c)}
                        for r, c in zip(refs, clustering.assignments)
                    ],
                },
            )
            _write_cluster_montages(manifest, scene, refs, clustering, sdir)

            chosen = selection
            if chosen is None:
                sel_path = sdir / "selection.json"
                if sel_path.exists():
                    with open(sel_path, encoding="utf-8") as fh:
                        doc = json.load(fh)
                    chosen = (int(doc["cluster"]), str(doc["part"]))
            if chosen is not None:
                cluster_index, part_name = chosen
                part_set = backproject_cluster(clustering, cluster_index, refs, part_name)
                _write_part_masks(part_set, shapes, sdir)
            log.write(stage="parts", scene=scene.id, candidates=len(refs),
                      k=n_clusters, ms=round(1000 * (time.monotonic() - t0), 3))
    finally:
        log.close()
    return out_dir


def _write_cluster_montages(manifest, scene, refs, clustering, sdir: Path, thumb: int = 48):
    frames_by_id = {f.id: f for f in scene.frames}
    for c in range(clustering.k):
        members = [r for r, a in zip(refs, clustering.assignments) if a == c][:9]
        canvas = np.zeros((3 * thumb, 3 * thumb, 3), dtype=np.uint8)
        for i, ref in enumerate(members):
            frame = frames_by_id[ref.frame_id]
            if not frame.has("rgb"):
                continue
            rgb = load_rgb(frame.path("rgb"))
            x, y, w, h = ref.segment.bbox
            crop = rgb[y:y + h, x:x + w]
            if crop.size == 0:
                continue
            im = Image.fromarray(crop).resize((thumb, thumb), Image.NEAREST)
            r, col = divmod(i, 3)
            canvas[r * thumb:(r + 1) * thumb, col * thumb:(col + 1) * thumb] = np.asarray(im)
        buf = io.BytesIO()
        Image.fromarray(canvas).save(buf, format="PNG")
        atomic_write_bytes(sdir / f"montage_{c}.png", buf.getvalue())


def _write_part_masks(part_set, shapes: dict, sdir: Path):
    from .rle import decode_rle

    by_frame: dict[str, list] = {}
    for mask in part_set.masks:
        by_frame.setdefault(mask.frame_id, []).append(mask)
    index = {"part_name": part_set.part_name, "images": []}
    for frame_id in sorted(by_frame):
        width, height = shapes[frame_id]
        combined = np.zeros((height, width), dtype=np.uint16)
        for m in by_frame[frame_id]:
            combined[decode_rle(m.counts, width, height)] = 1
        rel = f"masks/{frame_id}_parts.png"
        save_label_image(combined, sdir / rel)
        index["images"].append(
            {"frame": frame_id, "mask": rel,
             "segments": sorted(m.segment_id for m in by_frame[frame_id]),
             "area": int(combined.sum())}
        )
    atomic_write_json(sdir / "parts_index.json", index)
