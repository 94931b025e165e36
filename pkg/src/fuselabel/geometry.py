"""Pinhole camera model, pose algebra, and unproject/reproject primitives.

Conventions used throughout the package:

  Camera frame (right-handed, standard computer vision):
    x right, y down, z forward along the optical axis.
  Image frame: u right (column), v down (row), origin at the top-left
    pixel center; pixel (u, v) = (cx, cy) lies on the principal ray.
  Depth: z-depth in meters along the optical axis (not ray length);
    0 marks an invalid measurement and such pixels emit no point.
  Pose: camera-to-world rigid transform; world = R @ cam + t.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accel
from .errors import DimensionMismatchError

ORTHONORMALITY_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=ORTHONORMALITY_TOL):
            raise ValueError("rotation columns are not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("rotation determinant is not +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the camera-to-world transform to an (N, 3) array."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass
class LabeledPointCloud:
    """World-frame points with class ids, as lifted from one frame."""

    positions: np.ndarray          # (N, 3) float64
    class_ids: np.ndarray          # (N,) int64
    source_frame: str = ""
    pixel_indices: np.ndarray = field(default=None, repr=False)  # row-major flat pixels

    def __len__(self) -> int:
        return self.positions.shape[0]


def _check_raster(name: str, raster: np.ndarray, intr: Intrinsics):
    if raster.shape != intr.shape:
        raise DimensionMismatchError(name, intr.shape, raster.shape)


def unproject(
    depth: np.ndarray,
    intr: Intrinsics,
    pose: Pose,
    labels: np.ndarray | None = None,
    frame_id: str = "",
) -> LabeledPointCloud:
    """Lift every valid-depth pixel into a world-frame labeled point.

    ``labels`` may be omitted, in which case every point carries the
    void class 0. One point is produced per pixel with depth > 0.
    """
    depth = np.asarray(depth, dtype=np.float64)
    _check_raster("depth", depth, intr)
    if labels is not None:
        _check_raster("labels", np.asarray(labels), intr)
    points, flat_idx = accel.unproject_valid(
        depth, intr.fx, intr.fy, intr.cx, intr.cy, pose.rotation, pose.translation
    )
    if labels is None:
        class_ids = np.zeros(len(flat_idx), dtype=np.int64)
    else:
        class_ids = np.asarray(labels).ravel()[flat_idx].astype(np.int64)
    return LabeledPointCloud(points, class_ids, frame_id, flat_idx)


def project_point(p, intr: Intrinsics, pose: Pose):
    """Project one world point into the camera.

    Returns ((u, v), z) with sub-pixel coordinates and camera-frame
    depth, or None when the point is behind the camera or lands outside
    the image bounds.
    """
    pix, z, ok = project_points(np.asarray(p, dtype=np.float64).reshape(1, 3), intr, pose)
    if not ok[0]:
        return None
    return (float(pix[0, 0]), float(pix[0, 1])), float(z[0])


def project_points(points: np.ndarray, intr: Intrinsics, pose: Pose):
    """Vectorized projection of (N, 3) world points.

    Returns (pixels (N, 2), z (N,), in_view (N,) bool). Pixel values of
    out-of-view points are unspecified.
    """
    inv = pose.inverse()
    cam = points @ inv.rotation.T + inv.translation
    z = cam[:, 2]
    ok = z > 0.0
    safe_z = np.where(ok, z, 1.0)
    u = intr.fx * cam[:, 0] / safe_z + intr.cx
    v = intr.fy * cam[:, 1] / safe_z + intr.cy
    ok &= (u >= -0.5) & (u <= intr.width - 0.5) & (v >= -0.5) & (v <= intr.height - 0.5)
    return np.stack([u, v], axis=1), z, ok


def pose_distance(a: Pose, b: Pose, rotation_weight: float = 0.5) -> float:
    """Blend of translation distance and rotation geodesic angle.

    distance = |t_a - t_b| + rotation_weight * angle(R_a, R_b), with the
    angle in radians and the weight in meters per radian.
    """
    dt = float(np.linalg.norm(a.translation - b.translation))
    rel = a.rotation.T @ b.rotation
    cos = (np.trace(rel) - 1.0) / 2.0
    angle = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    return dt + rotation_weight * angle
