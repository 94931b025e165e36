"""Dataset manifest, vocabulary, and file codecs for all pipeline artifacts.

Formats (all JSON is UTF-8):
  labels / instances / depth  16-bit single-channel PNG (depth in mm by default)
  pose                        JSON 4x4 row-major camera-to-world matrix
  intrinsics                  JSON {fx, fy, cx, cy, width, height}
  segments / detections / vocabulary / feature index   JSON, schemas below
  feature payload             "FSEG" binary: 16-byte header (magic "FSEG",
                              u32 row count, u32 dimension, u32 reserved=0),
                              then row-major little-endian float32 data
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ManifestError, MissingInputError
from .geometry import Intrinsics, Pose
from .rle import decode_rle, encode_rle

VOID = 0

_FSEG_MAGIC = b"FSEG"
_FSEG_HEADER = struct.Struct("<4sIII")


# ---------------------------------------------------------------------------
# atomic writes

def atomic_write_bytes(path: Path, data: bytes):
    """Write via a same-directory temp file and atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink(missing_ok=True)


def atomic_write_json(path: Path, obj):
    data = json.dumps(obj, indent=2, sort_keys=True).encode("utf-8") + b"\n"
    atomic_write_bytes(path, data)


# ---------------------------------------------------------------------------
# raster codecs

def save_label_image(img: np.ndarray, path: Path):
    """Persist a class-id or instance-id raster as 16-bit PNG."""
    img = np.asarray(img)
    if img.dtype != np.uint16:
        if img.min() < 0 or img.max() > 65535:
            raise FormatError(f"label values outside uint16 range at {path}")
        img = img.astype(np.uint16)
    import io

    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_label_image(path: Path) -> np.ndarray:
    im = Image.open(path)
    if im.mode not in ("I;16", "I;16B"):
        raise FormatError(f"{path}: expected 16-bit single-channel PNG, got mode {im.mode}")
    return np.asarray(im, dtype=np.uint16)


def save_depth(depth_m: np.ndarray, path: Path, scale: float = 0.001):
    """Quantize metric depth to 16-bit units of ``scale`` meters."""
    raw = np.rint(np.asarray(depth_m, dtype=np.float64) / scale)
    if raw.min() < 0 or raw.max() > 65535:
        raise FormatError(f"depth out of range for 16-bit storage at {path}")
    save_label_image(raw.astype(np.uint16), path)


def load_depth(path: Path, scale: float = 0.001) -> np.ndarray:
    """Load 16-bit depth; raw value 0 stays invalid-0 in meters."""
    return load_label_image(path).astype(np.float64) * scale


def save_rgb(img: np.ndarray, path: Path):
    import io

    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_rgb(path: Path) -> np.ndarray:
    im = Image.open(path)
    if im.mode != "RGB":
        im = im.convert("RGB")
    return np.asarray(im)


# ---------------------------------------------------------------------------
# pose / intrinsics

def save_pose(pose: Pose, path: Path):
    atomic_write_json(path, pose.matrix().tolist())


def load_pose(path: Path) -> Pose:
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    try:
        return Pose.from_matrix(np.asarray(m, dtype=np.float64))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: not a valid 4x4 camera-to-world matrix: {exc}") from exc


def save_intrinsics(intr: Intrinsics, path: Path):
    atomic_write_json(
        path,
        {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
         "width": intr.width, "height": intr.height},
    )


def load_intrinsics(path: Path) -> Intrinsics:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        return Intrinsics(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad intrinsics: {exc}") from exc


# ---------------------------------------------------------------------------
# vocabulary

@dataclass(frozen=True)
class Vocabulary:
    """Class registry: id 0 is reserved for void."""

    names: dict[int, str]
    background: frozenset[int] = frozenset()
    small_objects: frozenset[int] = frozenset()
    synonyms: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.names.get(VOID, "void") != "void":
            raise FormatError("vocabulary id 0 is reserved for void")
        known = set(self.names) | {VOID}
        for label, ids in (("background", self.background), ("small_objects", self.small_objects)):
            extra = set(ids) - known
            if extra:
                raise FormatError(f"vocabulary {label} ids not in table: {sorted(extra)}")
        bad = {t for t in self.synonyms.values() if t != VOID and t not in self.names}
        if bad:
            raise FormatError(f"synonym targets not in table: {sorted(bad)}")

    @property
    def max_id(self) -> int:
        return max(self.names, default=0)

    def id_of(self, name: str) -> int:
        for cid, cname in self.names.items():
            if cname == name:
                return cid
        raise KeyError(name)

    def is_valid_raster(self, labels: np.ndarray) -> bool:
        present = np.unique(labels)
        return all(int(c) == VOID or int(c) in self.names for c in present)


def save_vocabulary(vocab: Vocabulary, path: Path):
    atomic_write_json(
        path,
        {
            "classes": [{"id": i, "name": n} for i, n in sorted(vocab.names.items())],
            "background": sorted(vocab.background),
            "small_objects": sorted(vocab.small_objects),
            "synonyms": dict(sorted(vocab.synonyms.items())),
        },
    )


def load_vocabulary(path: Path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    names = {int(c["id"]): str(c["name"]) for c in d.get("classes", [])}
    return Vocabulary(
        names=names,
        background=frozenset(int(i) for i in d.get("background", [])),
        small_objects=frozenset(int(i) for i in d.get("small_objects", [])),
        synonyms={str(k): int(v) for k, v in d.get("synonyms", {}).items()},
    )


# ---------------------------------------------------------------------------
# segments

@dataclass
class Segment:
    """One class-agnostic mask region in RLE form."""

    id: int
    counts: list[int]
    area: int
    bbox: tuple[int, int, int, int]  # x, y, w, h

    def decode(self, width: int, height: int) -> np.ndarray:
        return decode_rle(self.counts, width, height)


@dataclass
class SegmentSet:
    """Non-overlapping segments over one image."""

    width: int
    height: int
    segments: list[Segment]

    def masks(self) -> np.ndarray:
        """(n, H, W) boolean stack in list order."""
        if not self.segments:
            return np.zeros((0, self.height, self.width), dtype=bool)
        return np.stack([s.decode(self.width, self.height) for s in self.segments])

    def id_raster(self) -> np.ndarray:
        """Per-pixel segment list-index, -1 where uncovered."""
        out = np.full((self.height, self.width), -1, dtype=np.int64)
        for i, seg in enumerate(self.segments):
            out[seg.decode(self.width, self.height)] = i
        return out

    def validate(self):
        cover = np.zeros((self.height, self.width), dtype=np.int32)
        for seg in self.segments:
            mask = seg.decode(self.width, self.height)
            area = int(mask.sum())
            if area != seg.area:
                raise FormatError(f"segment {seg.id}: stored area {seg.area} != mask area {area}")
            if area == 0:
                raise FormatError(f"segment {seg.id} is empty")
            if tight_bbox(mask) != tuple(seg.bbox):
                raise FormatError(f"segment {seg.id}: bbox {seg.bbox} is not tight")
            cover += mask
        if cover.max(initial=0) > 1:
            raise FormatError("segments overlap")


def tight_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    if rows.size == 0:
        return (0, 0, 0, 0)
    return (int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def segment_from_mask(seg_id: int, mask: np.ndarray) -> Segment:
    return Segment(
        id=seg_id,
        counts=encode_rle(mask),
        area=int(mask.sum()),
        bbox=tight_bbox(mask),
    )


def save_segments(segset: SegmentSet, path: Path):
    atomic_write_json(
        path,
        {
            "width": segset.width,
            "height": segset.height,
            "segments": [
                {"id": s.id, "counts": s.counts, "area": s.area, "bbox": list(s.bbox)}
                for s in segset.segments
            ],
        },
    )


def load_segments(path: Path, validate: bool = True) -> SegmentSet:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    segset = SegmentSet(
        width=int(d["width"]),
        height=int(d["height"]),
        segments=[
            Segment(
                id=int(s["id"]),
                counts=[int(c) for c in s["counts"]],
                area=int(s["area"]),
                bbox=tuple(int(b) for b in s["bbox"]),
            )
            for s in d.get("segments", [])
        ],
    )
    if validate:
        try:
            segset.validate()
        except FormatError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return segset


# ---------------------------------------------------------------------------
# detections

@dataclass
class Detection:
    """One detector output (or manual box) in image space."""

    class_id: int
    score: float
    box: tuple[float, float, float, float]  # x, y, w, h
    mask_centroid: tuple[float, float] | None = None
    mask_counts: list[int] | None = None

    def centroid(self) -> tuple[float, float]:
        if self.mask_centroid is not None:
            return self.mask_centroid
        x, y, w, h = self.box
        return (x + w / 2.0, y + h / 2.0)


@dataclass
class DetectionSet:
    width: int
    height: int
    detections: list[Detection]


def save_detections(dets: DetectionSet, path: Path):
    rows = []
    for d in dets.detections:
        row = {"class_id": d.class_id, "score": d.score, "box": list(d.box)}
        if d.mask_centroid is not None:
            row["mask_centroid"] = list(d.mask_centroid)
        if d.mask_counts is not None:
            row["mask_counts"] = d.mask_counts
        rows.append(row)
    atomic_write_json(path, {"width": dets.width, "height": dets.height, "detections": rows})


def load_detections(path: Path) -> DetectionSet:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    width, height = int(d["width"]), int(d["height"])
    out = []
    for row in d.get("detections", []):
        score = float(row["score"])
        if not np.isfinite(score):
            raise FormatError(f"{path}: non-finite detection score")
        x, y, w, h = (float(v) for v in row["box"])
        # clamp to image bounds; downstream code assumes this invariant
        x0, y0 = max(0.0, x), max(0.0, y)
        x1, y1 = min(float(width), x + w), min(float(height), y + h)
        out.append(
            Detection(
                class_id=int(row["class_id"]),
                score=score,
                box=(x0, y0, max(0.0, x1 - x0), max(0.0, y1 - y0)),
                mask_centroid=tuple(row["mask_centroid"]) if "mask_centroid" in row else None,
                mask_counts=[int(c) for c in row["mask_counts"]] if "mask_counts" in row else None,
            )
        )
    return DetectionSet(width=width, height=height, detections=out)


def load_manual_boxes(path: Path) -> list[Detection]:
    """Manual boxes are trusted: score forced to 1.0."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    out = []
    for row in d.get("boxes", []):
        x, y, w, h = (float(v) for v in row["box"])
        out.append(Detection(class_id=int(row["class_id"]), score=1.0, box=(x, y, w, h)))
    return out


# ---------------------------------------------------------------------------
# feature tables (FSEG binary + JSON index)

@dataclass
class FeatureTable:
    """One feature row per segment id."""

    segment_ids: list[int]
    features: np.ndarray  # (n, d) float32

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[0] != len(self.segment_ids):
            raise FormatError(
                f"feature rows {self.features.shape} do not match "
                f"{len(self.segment_ids)} segment ids"
            )
        if not np.isfinite(self.features).all():
            raise FormatError("feature table contains non-finite values")


def write_fseg(matrix: np.ndarray, path: Path):
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise FormatError("FSEG payload must be a 2D matrix")
    header = _FSEG_HEADER.pack(_FSEG_MAGIC, matrix.shape[0], matrix.shape[1], 0)
    atomic_write_bytes(path, header + matrix.tobytes())


def read_fseg(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _FSEG_HEADER.size:
        raise FormatError(f"{path}: truncated FSEG header")
    magic, rows, dim, _ = _FSEG_HEADER.unpack_from(data)
    if magic != _FSEG_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _FSEG_HEADER.size + rows * dim * 4
    if len(data) != expected:
        raise FormatError(f"{path}: payload size {len(data)} != expected {expected}")
    return np.frombuffer(data, dtype="<f4", offset=_FSEG_HEADER.size).reshape(rows, dim).copy()


def save_feature_table(table: FeatureTable, index_path: Path, payload_name: str | None = None):
    index_path = Path(index_path)
    payload_name = payload_name or index_path.stem + ".bin"
    write_fseg(table.features, index_path.parent / payload_name)
    atomic_write_json(
        index_path,
        {"segment_ids": list(table.segment_ids), "dim": int(table.features.shape[1]),
         "payload": payload_name},
    )


def load_feature_table(index_path: Path) -> FeatureTable:
    index_path = Path(index_path)
    with open(index_path, encoding="utf-8") as fh:
        d = json.load(fh)
    features = read_fseg(index_path.parent / d["payload"])
    if features.shape[1] != int(d["dim"]):
        raise FormatError(f"{index_path}: index dim {d['dim']} != payload dim {features.shape[1]}")
    return FeatureTable(segment_ids=[int(i) for i in d["segment_ids"]], features=features)


# ---------------------------------------------------------------------------
# manifest

FRAME_PATH_FIELDS = (
    "rgb", "depth", "pose", "intrinsics", "semantic", "segments", "detections",
    "features", "embeddings", "gt_semantic", "manual_boxes",
)


@dataclass
class FrameRecord:
    id: str
    paths: dict[str, Path]

    def has(self, fieldname: str) -> bool:
        return fieldname in self.paths

    def path(self, fieldname: str) -> Path:
        try:
            return self.paths[fieldname]
        except KeyError:
            raise MissingInputError(self.id, fieldname) from None


@dataclass
class Scene:
    id: str
    frames: list[FrameRecord]

    def frame(self, frame_id: str) -> FrameRecord:
        for f in self.frames:
            if f.id == frame_id:
                return f
        raise ManifestError(f"scene {self.id!r} has no frame {frame_id!r}")


@dataclass
class Manifest:
    dataset: str
    scenes: list[Scene]
    vocabulary_path: Path | None
    metadata: dict
    root: Path

    def scene(self, scene_id: str) -> Scene:
        for s in self.scenes:
            if s.id == scene_id:
                return s
        raise ManifestError(f"manifest has no scene {scene_id!r}")

    def load_vocabulary(self) -> Vocabulary:
        if self.vocabulary_path is None:
            raise ManifestError("manifest declares no vocabulary")
        return load_vocabulary(self.vocabulary_path)


def load_manifest(path: Path, require: tuple[str, ...] = ()) -> Manifest:
    """Load and validate a manifest.

    Every declared file path is existence-checked eagerly. ``require``
    lists frame fields that must be present on every frame (stages pass
    e.g. ("depth", "pose") when multi-view processing is enabled).
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc

    root = path.parent
    scenes = []
    for scene_doc in doc.get("scenes", []):
        try:
            scene_id = str(scene_doc["id"])
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: scene record missing 'id'") from exc
        frames = []
        seen = set()
        for frame_doc in scene_doc.get("frames", []):
            try:
                frame_id = str(frame_doc["id"])
            except (KeyError, TypeError) as exc:
                raise ManifestError(
                    f"{path}: scene {scene_id!r}: frame record missing 'id'"
                ) from exc
            if frame_id in seen:
                raise ManifestError(f"{path}: scene {scene_id!r}: duplicate frame id {frame_id!r}")
            seen.add(frame_id)
            paths = {}
            for fieldname in FRAME_PATH_FIELDS:
                if fieldname not in frame_doc or frame_doc[fieldname] is None:
                    continue
                p = root / frame_doc[fieldname]
                if not p.exists():
                    raise ManifestError(
                        f"{path}: scene {scene_id!r} frame {frame_id!r}: "
                        f"{fieldname} file not found: {p}"
                    )
                paths[fieldname] = p
            for fieldname in require:
                if fieldname not in paths:
                    raise ManifestError(
                        f"{path}: scene {scene_id!r} frame {frame_id!r}: "
                        f"required field {fieldname!r} is missing"
                    )
            frames.append(FrameRecord(id=frame_id, paths=paths))
        scenes.append(Scene(id=scene_id, frames=frames))

    vocab_path = None
    if doc.get("vocabulary"):
        vocab_path = root / doc["vocabulary"]
        if not vocab_path.exists():
            raise ManifestError(f"{path}: vocabulary file not found: {vocab_path}")

    return Manifest(
        dataset=str(doc.get("dataset", "")),
        scenes=scenes,
        vocabulary_path=vocab_path,
        metadata=dict(doc.get("metadata", {})),
        root=root,
    )
