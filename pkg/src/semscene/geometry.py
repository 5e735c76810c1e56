"""Camera models, depth unprojection, rigid/similarity transforms and bounds
filtering for point clouds.

Conventions:
  * Camera frame is the usual computer-vision one: x right, y down, z forward.
  * Pixel (u, v) means column u, row v; the ray for a pixel passes through
    K^-1 [u, v, 1]^T, i.e. integer pixel coordinates, no half-pixel offset.
  * Depth is z-depth in the camera frame, in meters.  Depth 0 marks an
    invalid pixel (background) and produces no point.
  * Bounds are half-open: a point belongs to [lower, upper).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, FormatError

_ORTHO_TOL = 1e-6

DEPTH_MAGIC = b"DPTH"
DEPTH_VERSION = 1


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractViolationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ContractViolationError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ContractViolationError("rotation must be 3x3")
    if not np.allclose(rotation.T @ rotation, np.eye(3), atol=_ORTHO_TOL):
        raise ContractViolationError("rotation must be orthonormal")
    if not np.isclose(np.linalg.det(rotation), 1.0, atol=_ORTHO_TOL):
        raise ContractViolationError("rotation must have determinant +1")
    return rotation


@dataclass(frozen=True)
class CameraPose:
    """World-from-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(np.eye(3), np.zeros(3))

    @staticmethod
    def look_at(position, target, up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Camera at ``position`` with its optical axis toward ``target``."""
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise ContractViolationError("look_at target coincides with position")
        forward /= norm
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        rnorm = np.linalg.norm(right)
        if rnorm < 1e-12:
            raise ContractViolationError("view direction parallel to up vector")
        right /= rnorm
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=1)
        return CameraPose(rotation, position)

    def camera_axes_world(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, down, forward) unit vectors expressed in world frame."""
        return self.rotation[:, 0], self.rotation[:, 1], self.rotation[:, 2]


@dataclass(frozen=True)
class PointCloud:
    """N world-space positions with C per-point feature channels."""

    positions: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.shape[0] != positions.shape[0]:
            raise ContractViolationError("positions and features must have equal N")
        if features.ndim != 2 or features.shape[1] < 1:
            raise ContractViolationError("features must be N x C with C >= 1")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(features))):
            raise ContractViolationError("point cloud entries must be finite")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "features", features)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    @staticmethod
    def empty(channels: int = 1) -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros((0, channels)))


@dataclass(frozen=True)
class SimilarityTransform:
    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ContractViolationError("scale must be a positive finite scalar")

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(np.eye(3), np.zeros(3), 1.0)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        rot_inv = self.rotation.T
        return SimilarityTransform(
            rot_inv, -(rot_inv @ self.translation) / self.scale, 1.0 / self.scale
        )


@dataclass(frozen=True)
class AugmentConfig:
    """Ranges for random similarity-transform augmentation.

    Defaults collapse to the identity transform; the training configs widen
    them (translation +-0.1 m, full-circle yaw, scale 0.9..1.1).
    """

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_max: float = 0.0
    scale_min: float = 1.0
    scale_max: float = 1.0

    def __post_init__(self):
        if self.scale_min <= 0 or self.scale_max <= 0:
            raise ContractViolationError("scale range must be positive")
        if self.scale_min > self.scale_max:
            raise ContractViolationError("scale_min must not exceed scale_max")
        if any(t < 0 for t in self.translation) or self.yaw_max < 0:
            raise ContractViolationError("augmentation ranges must be non-negative")


def unproject_depth(
    depth: np.ndarray,
    intr: CameraIntrinsics,
    pose: CameraPose,
    pixel_features: np.ndarray,
) -> PointCloud:
    """Lift a depth image into a world-space point cloud.

    ``pixel_features`` is H x W (single channel) or H x W x C; the feature at
    each valid pixel is carried onto its point.  Pixels with depth <= 0 are
    dropped.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (intr.height, intr.width):
        raise ContractViolationError(
            f"depth shape {depth.shape} does not match intrinsics "
            f"({intr.height}, {intr.width})"
        )
    pixel_features = np.asarray(pixel_features, dtype=np.float64)
    if pixel_features.ndim == 2:
        pixel_features = pixel_features[..., None]
    if pixel_features.shape[:2] != depth.shape:
        raise ContractViolationError("pixel_features dimensions must match depth")

    valid = depth > 0
    if not np.any(valid):
        return PointCloud.empty(pixel_features.shape[2])
    vv, uu = np.nonzero(valid)
    d = depth[vv, uu]
    x = (uu - intr.cx) / intr.fx * d
    y = (vv - intr.cy) / intr.fy * d
    cam = np.stack([x, y, d], axis=1)
    world = cam @ pose.rotation.T + pose.translation
    return PointCloud(world, pixel_features[vv, uu])


def apply_transform(pc: PointCloud, t: SimilarityTransform) -> PointCloud:
    return PointCloud(t.apply(pc.positions), pc.features)


def filter_bounds(pc: PointCloud, spec) -> PointCloud:
    """Keep points with lower <= p < upper componentwise (order preserved).

    ``spec`` is anything with ``lower`` and ``upper`` 3-vectors (a GridSpec).
    """
    lower = np.asarray(spec.lower, dtype=np.float64)
    upper = np.asarray(spec.upper, dtype=np.float64)
    keep = np.all((pc.positions >= lower) & (pc.positions < upper), axis=1)
    return PointCloud(pc.positions[keep], pc.features[keep])


def yaw_rotation(angle: float) -> np.ndarray:
    """Rotation about the world z (up) axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def sample_augmentation(rng: np.random.Generator, cfg: AugmentConfig) -> SimilarityTransform:
    """Draw a random yaw/translation/scale transform; deterministic given rng."""
    yaw = rng.uniform(0.0, cfg.yaw_max) if cfg.yaw_max > 0 else 0.0
    translation = np.array(
        [rng.uniform(-t, t) if t > 0 else 0.0 for t in cfg.translation]
    )
    if cfg.scale_max > cfg.scale_min:
        scale = rng.uniform(cfg.scale_min, cfg.scale_max)
    else:
        scale = cfg.scale_min
    return SimilarityTransform(yaw_rotation(yaw), translation, scale)


def write_depth(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise ContractViolationError("depth image must be 2D")
    height, width = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<III", DEPTH_VERSION, width, height))
        f.write(depth.astype("<f4").tobytes())


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != DEPTH_MAGIC:
        raise FormatError("bad depth-file magic", offset=0)
    if len(raw) < 16:
        raise FormatError("truncated depth header", offset=len(raw))
    version, width, height = struct.unpack_from("<III", raw, 4)
    if version != DEPTH_VERSION:
        raise FormatError(f"unsupported depth-file version {version}", offset=4)
    expected = 16 + 4 * width * height
    if len(raw) != expected:
        raise FormatError(
            f"depth payload has {len(raw) - 16} bytes, expected {4 * width * height}",
            offset=min(len(raw), expected),
        )
    return np.frombuffer(raw, dtype="<f4", offset=16).reshape(height, width).copy()
