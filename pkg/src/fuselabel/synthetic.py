"""Analytic box-world scenes with exact ground truth.

Rooms are axis-aligned boxes viewed from pinhole cameras; objects are
axis-aligned boxes inside the room. Rays have closed-form first hits, so
depth, labels, segments, detections, and the top-down footprint grid are
all exact. Corruption specs inject controlled label errors into the
"predicted" annotation stream for repair experiments.

Geometry convention for oracle exactness: keep object/room x-y extents on
multiples of the grid resolution and use the half-cell-offset grid origin
from ``default_grid_config`` so no surface plane sits on a cell boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import accel
from .geometry import Intrinsics, Pose
from .ingest import (
    Detection,
    DetectionSet,
    FeatureTable,
    SegmentSet,
    Vocabulary,
    atomic_write_json,
    save_depth,
    save_intrinsics,
    save_label_image,
    save_pose,
    save_rgb,
    save_segments,
    save_detections,
    save_feature_table,
    save_vocabulary,
    segment_from_mask,
    tight_bbox,
    write_fseg,
)
from .semmap import GridConfig

BASE_CLASSES = ("void", "wall", "floor", "ceiling", "door", "blind")
BACKGROUND_NAMES = ("wall", "floor", "ceiling", "door", "blind")

# room face surface ids; objects start at 6
_FACE_WALL_X0, _FACE_WALL_X1, _FACE_WALL_Y0, _FACE_WALL_Y1 = 0, 1, 2, 3
_FACE_FLOOR, _FACE_CEILING = 4, 5
_N_FACES = 6


@dataclass
class ObjectSpec:
    class_name: str
    box: tuple[tuple[float, float, float], tuple[float, float, float]]  # min, max corners
    role: str | None = None  # feature-planting role, e.g. "handle"


@dataclass
class Corruption:
    frame_id: str
    region: tuple[int, int, int, int]  # x, y, w, h in pixels
    wrong_class: str


@dataclass
class SceneSpec:
    name: str
    room: tuple[float, float, float]  # W, L, H meters
    objects: list[ObjectSpec]
    cameras: list[Pose]
    intrinsics: Intrinsics
    seed: int = 0
    corruptions: list[Corruption] = field(default_factory=list)
    erode_px: int = 0
    feature_dim: int = 8
    feature_separation: float = 12.0

    def __post_init__(self):
        w, l, h = self.room
        if w <= 0 or l <= 0 or h <= 0:
            raise ValueError(f"degenerate room {self.room}")
        for obj in self.objects:
            lo, hi = np.asarray(obj.box[0]), np.asarray(obj.box[1])
            if (lo >= hi).any():
                raise ValueError(f"degenerate object box {obj.box}")
            if (lo < -1e-9).any() or (hi > np.array([w, l, h]) + 1e-9).any():
                raise ValueError(f"object {obj.class_name} outside room")


def look_at(eye, target, up=None) -> Pose:
    """Camera-to-world pose looking from eye toward target (z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    if up is None:
        up = (0.0, 1.0, 0.0) if abs(z[2]) > 0.99 else (0.0, 0.0, 1.0)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), eye)


def make_vocabulary(specs, small_names: tuple[str, ...] = ()) -> Vocabulary:
    """Base indoor classes plus object classes, stable across scenes.

    Object class ids are assigned in sorted-name order over the union of
    all given specs so multi-scene datasets share one consistent table.
    """
    if isinstance(specs, SceneSpec):
        specs = [specs]
    names = {i: n for i, n in enumerate(BASE_CLASSES)}
    by_name = {n: i for i, n in names.items()}
    extra = sorted({o.class_name for spec in specs for o in spec.objects} - set(by_name))
    for name in extra:
        cid = max(names) + 1
        names[cid] = name
        by_name[name] = cid
    background = frozenset(by_name[n] for n in BACKGROUND_NAMES)
    small = frozenset(by_name[n] for n in small_names if n in by_name)
    return Vocabulary(names=names, background=background, small_objects=small)


# ---------------------------------------------------------------------------
# rendering

def _ray_dirs_world(intr: Intrinsics, pose: Pose) -> np.ndarray:
    uu, vv = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    dirs = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu, dtype=np.float64)],
        axis=-1,
    ).reshape(-1, 3)
    return dirs @ pose.rotation.T


def _room_exit(origin: np.ndarray, dirs: np.ndarray, room) -> tuple[np.ndarray, np.ndarray]:
    """Param and face id of each ray's exit through the room shell."""
    bounds = np.array([[0.0, room[0]], [0.0, room[1]], [0.0, room[2]]])
    face_ids = np.array(
        [[_FACE_WALL_X0, _FACE_WALL_X1], [_FACE_WALL_Y0, _FACE_WALL_Y1],
         [_FACE_FLOOR, _FACE_CEILING]]
    )
    t_best = np.full(dirs.shape[0], np.inf)
    face = np.zeros(dirs.shape[0], dtype=np.int64)
    for axis in range(3):
        d = dirs[:, axis]
        with np.errstate(divide="ignore"):
            t_hi = (bounds[axis, 1] - origin[axis]) / d
            t_lo = (bounds[axis, 0] - origin[axis]) / d
        t_axis = np.where(d > 0, t_hi, np.where(d < 0, t_lo, np.inf))
        f_axis = np.where(d > 0, face_ids[axis, 1], face_ids[axis, 0])
        better = t_axis < t_best
        t_best = np.where(better, t_axis, t_best)
        face = np.where(better, f_axis, face)
    return t_best, face


def _box_entry(origin: np.ndarray, dirs: np.ndarray, lo, hi) -> np.ndarray:
    """Entry param of each ray into an axis-aligned box (inf = miss)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (np.asarray(lo) - origin) / dirs
        t2 = (np.asarray(hi) - origin) / dirs
    tmin = np.nanmin(np.stack([t1, t2]), axis=0).max(axis=1)
    tmax = np.nanmax(np.stack([t1, t2]), axis=0).min(axis=1)
    hit = (tmin <= tmax) & (tmin > 1e-9)
    return np.where(hit, tmin, np.inf)


@dataclass
class RenderedFrame:
    frame_id: str
    pose: Pose
    depth: np.ndarray              # (H, W) float64 z-depth, exact
    surfaces: np.ndarray           # (H, W) int64 surface ids
    gt_semantic: np.ndarray        # (H, W) uint16
    gt_instances: np.ndarray       # (H, W) uint16, 0 = background
    predicted_semantic: np.ndarray # gt with erosion + corruption applied
    segments: SegmentSet
    detections: DetectionSet
    features: FeatureTable
    segment_roles: list[str]       # aligned with segments, planted ground truth
    embeddings: np.ndarray | None = None  # (H*W, D) float32 one-hot by class


def _erode_boundaries(labels: np.ndarray, iterations: int) -> np.ndarray:
    out = labels.copy()
    for _ in range(iterations):
        diff = np.zeros(out.shape, dtype=bool)
        diff[1:, :] |= out[1:, :] != out[:-1, :]
        diff[:-1, :] |= out[:-1, :] != out[1:, :]
        diff[:, 1:] |= out[:, 1:] != out[:, :-1]
        diff[:, :-1] |= out[:, :-1] != out[:, 1:]
        out = np.where(diff, 0, out)
    return out


def render_frame(
    spec: SceneSpec,
    vocab: Vocabulary,
    frame_index: int,
    with_embeddings: bool = False,
) -> RenderedFrame:
    pose = spec.cameras[frame_index]
    intr = spec.intrinsics
    room = np.asarray(spec.room)
    if (pose.translation <= 0).any() or (pose.translation >= room).any():
        raise ValueError(f"camera {frame_index} must sit strictly inside the room")
    frame_id = f"{frame_index:03d}"
    dirs = _ray_dirs_world(intr, pose)
    origin = pose.translation

    t_hit, face = _room_exit(origin, dirs, spec.room)
    surface = face.copy()
    for i, obj in enumerate(spec.objects):
        t_obj = _box_entry(origin, dirs, obj.box[0], obj.box[1])
        closer = t_obj < t_hit
        t_hit = np.where(closer, t_obj, t_hit)
        surface = np.where(closer, _N_FACES + i, surface)

    shape = (intr.height, intr.width)
    depth = t_hit.reshape(shape)
    surfaces = surface.reshape(shape)

    face_class = [vocab.id_of("wall")] * 4 + [vocab.id_of("floor"), vocab.id_of("ceiling")]
    class_of_surface = np.array(
        face_class + [vocab.id_of(o.class_name) for o in spec.objects], dtype=np.uint16
    )
    instance_of_surface = np.array(
        [0] * _N_FACES + [i + 1 for i in range(len(spec.objects))], dtype=np.uint16
    )
    gt_semantic = class_of_surface[surfaces]
    gt_instances = instance_of_surface[surfaces]

    predicted = _erode_boundaries(gt_semantic, spec.erode_px)
    for cor in spec.corruptions:
        if cor.frame_id != frame_id:
            continue
        x, y, w, h = cor.region
        predicted = predicted.copy()
        predicted[y:y + h, x:x + w] = vocab.id_of(cor.wrong_class)

    # segments: exact connected components of the surface raster
    region_ids = accel.label_components_4(surfaces.astype(np.int64))
    n_regions = int(region_ids.max()) + 1
    segments = []
    roles = []
    for rid in range(n_regions):
        mask = region_ids == rid
        segments.append(segment_from_mask(rid, mask))
        sid = int(surfaces[mask][0])
        if sid < _N_FACES:
            roles.append("background")
        else:
            roles.append(spec.objects[sid - _N_FACES].role or "object")
    segset = SegmentSet(width=intr.width, height=intr.height, segments=segments)

    detections = []
    for i, obj in enumerate(spec.objects):
        mask = gt_instances == i + 1
        if not mask.any():
            continue
        vs, us = np.nonzero(mask)
        detections.append(
            Detection(
                class_id=int(vocab.id_of(obj.class_name)),
                score=1.0,
                box=tuple(float(b) for b in tight_bbox(mask)),
                mask_centroid=(float(us.mean()), float(vs.mean())),
            )
        )
    detset = DetectionSet(width=intr.width, height=intr.height, detections=detections)

    # planted features: one Gaussian per role, means on fixed axes chosen
    # from the spec (not the frame) so roles cluster across frames
    role_names = sorted({"background"} | {o.role or "object" for o in spec.objects})
    rng = np.random.default_rng([spec.seed, frame_index])
    dim = max(spec.feature_dim, len(role_names))
    means = {
        role: spec.feature_separation * np.eye(dim)[j]
        for j, role in enumerate(role_names)
    }
    feats = np.stack([means[r] + rng.standard_normal(dim) for r in roles])
    table = FeatureTable(segment_ids=[s.id for s in segments], features=feats.astype(np.float32))

    embeddings = None
    if with_embeddings:
        d = vocab.max_id + 1
        embeddings = np.zeros((intr.height * intr.width, d), dtype=np.float32)
        embeddings[np.arange(embeddings.shape[0]), gt_semantic.ravel()] = 1.0

    return RenderedFrame(
        frame_id=frame_id,
        pose=pose,
        depth=depth,
        surfaces=surfaces,
        gt_semantic=gt_semantic,
        gt_instances=gt_instances,
        predicted_semantic=predicted,
        segments=segset,
        detections=detset,
        features=table,
        segment_roles=roles,
        embeddings=embeddings,
    )


@dataclass
class SceneData:
    spec: SceneSpec
    vocabulary: Vocabulary
    frames: list[RenderedFrame]


def render_scene(spec: SceneSpec, with_embeddings: bool = False,
                 small_names: tuple[str, ...] = (),
                 vocab: Vocabulary | None = None) -> SceneData:
    vocab = vocab or make_vocabulary(spec, small_names)
    frames = [
        render_frame(spec, vocab, i, with_embeddings) for i in range(len(spec.cameras))
    ]
    return SceneData(spec=spec, vocabulary=vocab, frames=frames)


def interior_rect(mask: np.ndarray, margin: int = 3) -> tuple[int, int, int, int]:
    """A rectangle strictly inside a mask's central blob.

    Shrinks the tight bbox by ``margin`` on every side and verifies the
    result is fully covered by the mask; used to place corruptions that
    must not touch the surrounding region.
    """
    x, y, w, h = tight_bbox(mask)
    rx, ry = x + margin, y + margin
    rw, rh = w - 2 * margin, h - 2 * margin
    if rw < 1 or rh < 1 or not mask[ry:ry + rh, rx:rx + rw].all():
        raise ValueError("mask has no clear interior rectangle at this margin")
    return (rx, ry, rw, rh)


# ---------------------------------------------------------------------------
# analytic top-down grid

def default_grid_config(
    spec: SceneSpec,
    resolution: float = 0.05,
    height_band: tuple[float, float] = (0.0, 1.8),
    margin: float = 0.275,
) -> GridConfig:
    """Grid override placing every resolution-aligned plane mid-cell.

    The origin sits half a cell off the resolution lattice so room walls
    and object faces at multiples of the resolution never land on a cell
    boundary, keeping float binning exactly predictable.
    """
    size = int(np.ceil((max(spec.room[0], spec.room[1]) + 2 * margin) / resolution)) + 1
    ceiling_id = BASE_CLASSES.index("ceiling")
    return GridConfig(
        resolution=resolution,
        height_band=height_band,
        origin=(-margin, -margin),
        size=size,
        ceiling_ids=frozenset({ceiling_id}),
    )


def _cell_range(lo: float, hi: float, origin: float, res: float, size: int):
    a = int(np.floor((lo - origin) / res))
    b = int(np.floor((hi - origin) / res))
    return max(a, 0), min(b, size - 1)


def _check_mid_cell(coord: float, origin: float, res: float):
    frac = ((coord - origin) / res) % 1.0
    if not 0.1 <= frac <= 0.9:
        raise ValueError(
            f"fixture coordinate {coord} sits within 10% of a cell boundary; "
            f"shift geometry or the grid origin to keep the oracle exact"
        )


def expected_semantic_grid(
    spec: SceneSpec, vocab: Vocabulary, config: GridConfig
) -> np.ndarray:
    """Analytic footprint grid: what a full observation of in-band
    surfaces must produce under the top-voxel majority rule.

    Assumes full camera coverage of walls, floor, and object tops, with
    object tops inside the height band and objects clear of walls and of
    each other.
    """
    if config.origin is None or config.size is None:
        raise ValueError("expected grid needs an explicit origin and size")
    res = config.resolution
    ox, oy = config.origin
    m = config.size
    w, l, _ = spec.room
    lo_band, hi_band = config.height_band

    for coord, origin in ((0.0, ox), (w, ox), (0.0, oy), (l, oy)):
        _check_mid_cell(coord, origin, res)

    grid = np.zeros((m, m), dtype=np.uint16)

    # floor everywhere the room interior touches
    fx0, fx1 = _cell_range(0.0, w, ox, res, m)
    fy0, fy1 = _cell_range(0.0, l, oy, res, m)
    if lo_band <= 0.0 <= hi_band:
        grid[fy0:fy1 + 1, fx0:fx1 + 1] = vocab.id_of("floor")

    # walls: one-cell-thick ring on the wall planes
    wall = vocab.id_of("wall")
    x_lo = int(np.floor((0.0 - ox) / res))
    x_hi = int(np.floor((w - ox) / res))
    y_lo = int(np.floor((0.0 - oy) / res))
    y_hi = int(np.floor((l - oy) / res))
    grid[y_lo:y_hi + 1, x_lo] = wall
    grid[y_lo:y_hi + 1, x_hi] = wall
    grid[y_lo, x_lo:x_hi + 1] = wall
    grid[y_hi, x_lo:x_hi + 1] = wall

    # objects, shortest first so the tallest in-band top wins a cell
    for obj in sorted(spec.objects, key=lambda o: o.box[1][2]):
        (bx0, by0, _), (bx1, by1, bz1) = obj.box
        if not lo_band <= bz1 <= hi_band:
            raise ValueError(
                f"object {obj.class_name} top {bz1} outside the height band; "
                f"the footprint oracle does not cover that case"
            )
        for coord, origin in ((bx0, ox), (bx1, ox)):
            _check_mid_cell(coord, origin, res)
        for coord, origin in ((by0, oy), (by1, oy)):
            _check_mid_cell(coord, origin, res)
        cx0, cx1 = _cell_range(bx0, bx1, ox, res, m)
        cy0, cy1 = _cell_range(by0, by1, oy, res, m)
        grid[cy0:cy1 + 1, cx0:cx1 + 1] = vocab.id_of(obj.class_name)

    return grid


# ---------------------------------------------------------------------------
# planted clusters for k-means oracles

def planted_clusters(
    n_per_cluster: int,
    n_clusters: int,
    dim: int,
    separation: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian blobs (sigma 1) with means ``separation`` apart on axes.

    Returns (features (n, dim) float64, labels (n,) int64).
    """
    if dim < n_clusters:
        raise ValueError("dim must be >= n_clusters")
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for c in range(n_clusters):
        mean = separation * np.eye(dim)[c]
        feats.append(mean + rng.standard_normal((n_per_cluster, dim)))
        labels.append(np.full(n_per_cluster, c, dtype=np.int64))
    return np.concatenate(feats), np.concatenate(labels)


# ---------------------------------------------------------------------------
# scene presets used by the test and acceptance suites

def _standard_intrinsics(width: int = 160, height: int = 120) -> Intrinsics:
    return Intrinsics(fx=64.0, fy=64.0, cx=width / 2.0, cy=height / 2.0,
                      width=width, height=height)


def preset_fuse_scene(seed: int = 7, n_frames: int = 10) -> SceneSpec:
    """Five mid-height objects observed from an inward-looking ring."""
    objects = [
        ObjectSpec("chair", ((0.60, 0.60, 0.0), (1.00, 1.00, 0.45))),
        ObjectSpec("table", ((2.80, 0.60, 0.0), (3.40, 1.20, 0.60))),
        ObjectSpec("cabinet", ((0.60, 2.40, 0.0), (1.20, 3.00, 0.85))),
        ObjectSpec("sofa", ((2.60, 2.50, 0.0), (3.40, 2.90, 0.50))),
        ObjectSpec("refrigerator", ((1.80, 1.50, 0.0), (2.20, 1.90, 0.90))),
    ]
    center = np.array([2.0, 1.8, 0.45])
    cameras = []
    for i in range(n_frames):
        ang = 2.0 * np.pi * i / n_frames
        eye = center[:2] + 1.45 * np.array([np.cos(ang), np.sin(ang)])
        cameras.append(look_at((eye[0], eye[1], 1.5), center))
    return SceneSpec(
        name=f"fuse-{seed}",
        room=(4.0, 3.6, 2.4),
        objects=objects,
        cameras=cameras,
        intrinsics=_standard_intrinsics(),
        seed=seed,
        erode_px=1,
    )


def preset_mapping_scene(seed: int = 11) -> SceneSpec:
    """Fixed layout with full multi-camera coverage of every surface."""
    objects = [
        ObjectSpec("chair", ((0.80, 0.80, 0.0), (1.20, 1.20, 0.45))),
        ObjectSpec("table", ((2.60, 0.70, 0.0), (3.20, 1.30, 0.60))),
        ObjectSpec("cabinet", ((0.70, 2.30, 0.0), (1.30, 2.90, 0.85))),
        ObjectSpec("sofa", ((2.70, 2.40, 0.0), (3.30, 2.80, 0.50))),
    ]
    cameras = [look_at((2.0, 1.8, 2.3), (2.0, 1.8, 0.0))]
    center = (2.0, 1.8, 1.0)
    for tx, ty in ((4.0, 1.8), (0.0, 1.8), (2.0, 3.6), (2.0, 0.0)):
        cameras.append(look_at(center, (tx, ty, 1.0)))
    # a nadir camera just off each side of each object covers the floor
    # strip that the object shadows from every other viewpoint
    for obj in objects:
        (x0, y0, _), (x1, y1, _) = obj.box
        mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        for ex, ey in ((mx, y0 - 0.35), (mx, y1 + 0.35), (x0 - 0.35, my), (x1 + 0.35, my)):
            ex = min(max(ex, 0.15), 4.0 - 0.15)
            ey = min(max(ey, 0.15), 3.6 - 0.15)
            cameras.append(look_at((ex, ey, 2.3), (ex, ey, 0.0)))
    return SceneSpec(
        name="mapping",
        room=(4.0, 3.6, 2.4),
        objects=objects,
        cameras=cameras,
        intrinsics=_standard_intrinsics(),
        seed=seed,
    )


def preset_mv_scene(
    corrupt: bool = True,
    disjoint_references: bool = False,
    seed: int = 23,
) -> SceneSpec:
    """A fridge on the far wall seen by one target and two reference views.

    Frame 001 is the verification target; 000 and 002 are clean nearby
    references. With ``corrupt`` a rectangle inside the fridge in 001 is
    painted as wall. With ``disjoint_references`` the references face the
    opposite end of the room and share no geometry with the target view.
    """
    objects = [
        ObjectSpec("refrigerator", ((4.80, 1.40, 0.0), (5.20, 2.20, 1.70))),
    ]
    fridge_center = (5.0, 1.8, 0.85)
    if disjoint_references:
        cameras = [
            look_at((2.5, 1.8, 1.2), (0.0, 1.8, 1.0)),
            look_at((2.2, 1.8, 1.2), fridge_center),
            look_at((2.5, 2.0, 1.2), (0.0, 1.8, 1.0)),
        ]
    else:
        cameras = [
            look_at((2.2, 1.55, 1.2), fridge_center),
            look_at((2.2, 1.80, 1.2), fridge_center),
            look_at((2.2, 2.05, 1.2), fridge_center),
        ]
    corruptions = []
    if corrupt:
        corruptions.append(Corruption(frame_id="001", region=(70, 45, 20, 26),
                                      wrong_class="wall"))
    return SceneSpec(
        name="mv",
        room=(6.0, 3.6, 2.4),
        objects=objects,
        cameras=cameras,
        intrinsics=_standard_intrinsics(),
        seed=seed,
        corruptions=corruptions,
    )


_NAV_CLASSES = ("chair", "table", "sofa", "cabinet", "refrigerator", "lamp")


def preset_nav_scene(index: int) -> SceneSpec:
    """One of the seeded navigation rooms; geometry snaps to 5 cm."""
    rng = np.random.default_rng([101, index])
    w = 3.0 + 0.1 * int(rng.integers(0, 11))
    l = 3.0 + 0.1 * int(rng.integers(0, 11))
    objects = []
    n_obj = 3 + int(rng.integers(0, 3))
    occupied = []
    for j in range(n_obj):
        for _ in range(40):
            ww = 0.3 + 0.05 * int(rng.integers(0, 7))
            ll = 0.3 + 0.05 * int(rng.integers(0, 7))
            x0 = 0.3 + 0.05 * int(rng.integers(0, int((w - 0.6 - ww) / 0.05) + 1))
            y0 = 0.3 + 0.05 * int(rng.integers(0, int((l - 0.6 - ll) / 0.05) + 1))
            box = (x0, y0, x0 + ww, y0 + ll)
            clear = all(
                box[2] + 0.15 < b[0] or b[2] + 0.15 < box[0]
                or box[3] + 0.15 < b[1] or b[3] + 0.15 < box[1]
                for b in occupied
            )
            if clear:
                occupied.append(box)
                h = 0.4 + 0.05 * int(rng.integers(0, 9))
                cls = _NAV_CLASSES[j % len(_NAV_CLASSES)]
                objects.append(ObjectSpec(cls, ((x0, y0, 0.0), (x0 + ww, y0 + ll, h))))
                break
    return SceneSpec(
        name=f"nav-{index:02d}",
        room=(w, l, 2.4),
        objects=objects,
        cameras=[],
        intrinsics=_standard_intrinsics(),
        seed=1000 + index,
    )


def preset_parts_scene(seed: int = 31, n_frames: int = 4) -> SceneSpec:
    """Two cabinets, each split the way a bottom-up segmenter sees them:
    main body, protruding drawer front, and a small handle."""
    objects = [
        ObjectSpec("cabinet", ((0.80, 3.30, 0.0), (1.80, 3.60, 0.95)), role="body"),
        ObjectSpec("cabinet", ((0.90, 3.265, 0.60), (1.70, 3.30, 0.90)), role="drawer"),
        ObjectSpec("cabinet", ((1.20, 3.25, 0.45), (1.40, 3.30, 0.55)), role="handle"),
        ObjectSpec("cabinet", ((2.40, 3.30, 0.0), (3.40, 3.60, 0.95)), role="body"),
        ObjectSpec("cabinet", ((2.50, 3.265, 0.60), (3.30, 3.30, 0.90)), role="drawer"),
        ObjectSpec("cabinet", ((2.80, 3.25, 0.45), (3.00, 3.30, 0.55)), role="handle"),
    ]
    cameras = [
        look_at((x, 1.6, 1.0), (x, 3.6, 0.7))
        for x in np.linspace(1.1, 3.1, n_frames)
    ]
    return SceneSpec(
        name="parts",
        room=(4.0, 3.6, 2.4),
        objects=objects,
        cameras=cameras,
        intrinsics=_standard_intrinsics(),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# dataset writer (emits the exact ingest formats)

_PALETTE = np.array([
    [0, 0, 0], [180, 180, 180], [120, 90, 60], [220, 220, 240],
    [160, 60, 40], [60, 120, 160], [200, 60, 60], [60, 160, 60],
    [60, 60, 200], [200, 160, 40], [160, 40, 160], [40, 160, 160],
    [240, 120, 40], [120, 240, 40], [40, 120, 240], [240, 40, 120],
], dtype=np.uint8)


def class_colors(raster: np.ndarray) -> np.ndarray:
    return _PALETTE[np.asarray(raster, dtype=np.int64) % len(_PALETTE)]


def write_dataset(
    specs: list[SceneSpec],
    out_dir: Path,
    small_names: tuple[str, ...] = (),
    with_embeddings: bool = False,
    with_gt_grid: bool = True,
    depth_scale: float = 0.001,
) -> Path:
    """Render scenes to disk in the ingest formats; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    vocab = make_vocabulary(specs, small_names)
    scene_docs = []
    for spec in specs:
        data = render_scene(spec, with_embeddings=with_embeddings, vocab=vocab)
        sdir = out_dir / "scenes" / spec.name
        sdir.mkdir(parents=True, exist_ok=True)
        save_intrinsics(spec.intrinsics, sdir / "intrinsics.json")
        frame_docs = []
        for frame in data.frames:
            fid = frame.frame_id
            save_depth(frame.depth, sdir / f"depth_{fid}.png", scale=depth_scale)
            save_pose(frame.pose, sdir / f"pose_{fid}.json")
            save_label_image(frame.predicted_semantic, sdir / f"semantic_{fid}.png")
            save_label_image(frame.gt_semantic, sdir / f"gt_semantic_{fid}.png")
            save_segments(frame.segments, sdir / f"segments_{fid}.json")
            save_detections(frame.detections, sdir / f"detections_{fid}.json")
            save_feature_table(frame.features, sdir / f"features_{fid}.json")
            save_rgb(class_colors(frame.gt_semantic), sdir / f"rgb_{fid}.png")
            rel = f"scenes/{spec.name}"
            doc = {
                "id": fid,
                "rgb": f"{rel}/rgb_{fid}.png",
                "depth": f"{rel}/depth_{fid}.png",
                "pose": f"{rel}/pose_{fid}.json",
                "intrinsics": f"{rel}/intrinsics.json",
                "semantic": f"{rel}/semantic_{fid}.png",
                "gt_semantic": f"{rel}/gt_semantic_{fid}.png",
                "segments": f"{rel}/segments_{fid}.json",
                "detections": f"{rel}/detections_{fid}.json",
                "features": f"{rel}/features_{fid}.json",
            }
            if frame.embeddings is not None:
                write_fseg(frame.embeddings, sdir / f"embeddings_{fid}.bin")
                doc["embeddings"] = f"{rel}/embeddings_{fid}.bin"
            frame_docs.append(doc)
        if with_gt_grid:
            config = default_grid_config(spec)
            grid = expected_semantic_grid(spec, vocab, config)
            save_label_image(grid, sdir / "gt_grid.png")
            atomic_write_json(
                sdir / "gt_grid.json",
                {"origin": list(config.origin), "resolution": config.resolution,
                 "n_classes": vocab.max_id, "size": config.size},
            )
        scene_docs.append({"id": spec.name, "frames": frame_docs})

    save_vocabulary(vocab, out_dir / "vocabulary.json")
    manifest_path = out_dir / "manifest.json"
    atomic_write_json(
        manifest_path,
        {
            "dataset": "box-world",
            "vocabulary": "vocabulary.json",
            "metadata": {
                "generator": "fuselabel.synthetic",
                "depth_scale": depth_scale,
                "segment_source": "surface-id connected components",
            },
            "scenes": scene_docs,
        },
    )
    return manifest_path
