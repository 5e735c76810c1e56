"""Fixed-bounds voxel grids: scatter with max reduction, trilinear sampling,
IoU and semantic argmax.

Voxel indexing is half-open: point p maps to voxel floor((p - lower) / edge),
valid when lower <= p < upper.  Voxel centers sit at
lower + (index + 0.5) * edge.  Trilinear sampling interpolates between voxel
centers and uses zero padding for neighbors outside the lattice.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ContractViolationError, FormatError
from .geometry import PointCloud

VOLUME_MAGIC = b"FVOL"
VOLUME_VERSION = 1

EMPTY = -1  # reserved label index in SemanticGrid


@dataclass(frozen=True)
class GridSpec:
    lower: np.ndarray
    upper: np.ndarray
    resolution: tuple[int, int, int]

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64).reshape(3)
        upper = np.asarray(self.upper, dtype=np.float64).reshape(3)
        if not np.all(lower < upper):
            raise ContractViolationError("grid lower bound must be below upper bound")
        res = tuple(int(r) for r in self.resolution)
        if any(r < 1 for r in res):
            raise ContractViolationError("grid resolution must be >= 1 per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "resolution", res)

    @staticmethod
    def default(resolution: int = 32) -> "GridSpec":
        # Metric bounds of the scene volume: 2 m x 2 m footprint, z from
        # just below the floor to just below the ceiling.
        return GridSpec(
            np.array([-1.0, -1.0, -0.1]),
            np.array([1.0, 1.0, 1.9]),
            (resolution, resolution, resolution),
        )

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.upper - self.lower) / np.array(self.resolution, dtype=np.float64)

    @property
    def num_voxels(self) -> int:
        rx, ry, rz = self.resolution
        return rx * ry * rz

    def voxel_centers(self) -> np.ndarray:
        """All voxel centers as an (rx*ry*rz, 3) array, x-major then y, z."""
        rx, ry, rz = self.resolution
        edge = self.voxel_size
        ix, iy, iz = np.meshgrid(
            np.arange(rx), np.arange(ry), np.arange(rz), indexing="ij"
        )
        idx = np.stack([ix, iy, iz], axis=-1).reshape(-1, 3)
        return self.lower + (idx + 0.5) * edge

    def point_indices(self, positions: np.ndarray) -> np.ndarray:
        """Voxel index of each position; caller guarantees in-bounds points."""
        idx = np.floor((positions - self.lower) / self.voxel_size).astype(np.int64)
        return idx

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridSpec)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and self.resolution == other.resolution
        )


@dataclass(frozen=True)
class FeatureVolume:
    spec: GridSpec
    data: np.ndarray  # (C, rx, ry, rz) float32

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4 or data.shape[1:] != self.spec.resolution:
            raise ContractViolationError(
                f"volume data shape {data.shape} does not match spec resolution "
                f"{self.spec.resolution}"
            )
        if not np.all(np.isfinite(data)):
            raise ContractViolationError("volume entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class OccupancyGrid:
    spec: GridSpec
    data: np.ndarray  # (rx, ry, rz) bool

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.shape != self.spec.resolution:
            raise ContractViolationError("occupancy data shape must match spec")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class SemanticGrid:
    spec: GridSpec
    data: np.ndarray  # (rx, ry, rz) int64, EMPTY or class index
    num_classes: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.int64)
        if data.shape != self.spec.resolution:
            raise ContractViolationError("semantic data shape must match spec")
        if np.any((data != EMPTY) & ((data < 0) | (data >= self.num_classes))):
            raise ContractViolationError("label indices must be EMPTY or < K")
        object.__setattr__(self, "data", data)

    def class_mask(self, k: int) -> OccupancyGrid:
        return OccupancyGrid(self.spec, self.data == k)


def scatter_max(pc: PointCloud, spec: GridSpec) -> FeatureVolume:
    """Scatter point features into the grid, keeping the per-voxel max.

    Voxels that receive no point hold 0.  Points must already be inside the
    grid bounds.
    """
    positions = pc.positions
    if len(pc) and (
        np.any(positions < spec.lower) or np.any(positions >= spec.upper)
    ):
        raise ContractViolationError("scatter_max requires a bounds-filtered cloud")
    data = _scatter_max_array(positions, pc.features, spec)
    return FeatureVolume(spec, data)


def _scatter_max_array(positions: np.ndarray, features: np.ndarray, spec: GridSpec) -> np.ndarray:
    channels = features.shape[1] if features.ndim == 2 else 1
    data = np.zeros((channels,) + spec.resolution, dtype=np.float32)
    if positions.shape[0] == 0:
        return data
    idx = spec.point_indices(positions)
    # rare float edge case: p just below upper can round to resolution
    idx = np.minimum(idx, np.array(spec.resolution) - 1)
    feats = features.reshape(len(positions), channels).astype(np.float32)
    for c in range(channels):
        np.maximum.at(data[c], (idx[:, 0], idx[:, 1], idx[:, 2]), feats[:, c])
    return data


def _to_lattice_coords(queries: torch.Tensor, spec: GridSpec) -> torch.Tensor:
    lower = torch.as_tensor(spec.lower, dtype=queries.dtype, device=queries.device)
    edge = torch.as_tensor(spec.voxel_size, dtype=queries.dtype, device=queries.device)
    return (queries - lower) / edge - 0.5


def trilinear_sample_tensor(
    vol: torch.Tensor, queries: torch.Tensor, spec: GridSpec
) -> torch.Tensor:
    """Differentiable trilinear sampling of a (C, rx, ry, rz) tensor at N
    world-space query points; zero padding outside the voxel-center lattice.
    Returns (N, C).
    """
    coords = _to_lattice_coords(queries, spec)
    base = torch.floor(coords)
    frac = coords - base
    base = base.long()
    res = torch.as_tensor(spec.resolution, device=vol.device)
    channels, n = vol.shape[0], queries.shape[0]
    out = torch.zeros(n, channels, dtype=vol.dtype, device=vol.device)
    flat = vol.reshape(channels, -1)
    strides = torch.tensor(
        [spec.resolution[1] * spec.resolution[2], spec.resolution[2], 1],
        device=vol.device,
    )
    for corner in range(8):
        offset = torch.tensor(
            [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1], device=vol.device
        )
        idx = base + offset
        inside = ((idx >= 0) & (idx < res)).all(dim=1)
        w = torch.prod(
            torch.where(offset.bool(), frac, 1.0 - frac), dim=1
        )
        idx_clamped = idx.clamp(min=torch.zeros_like(res), max=res - 1)
        flat_idx = (idx_clamped * strides).sum(dim=1)
        vals = flat[:, flat_idx].T  # (N, C)
        out = out + (w * inside.to(vol.dtype)).unsqueeze(1) * vals
    return out


def trilinear_sample(vol: FeatureVolume, queries: np.ndarray) -> np.ndarray:
    """Sample a FeatureVolume at N x 3 query points; returns N x C."""
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(queries)):
        raise ContractViolationError("queries must be finite")
    out = trilinear_sample_tensor(
        torch.from_numpy(vol.data.astype(np.float64)),
        torch.from_numpy(queries),
        vol.spec,
    )
    return out.numpy()


def voxel_iou(a: OccupancyGrid, b: OccupancyGrid) -> float:
    if a.spec != b.spec:
        raise ContractViolationError("voxel_iou requires matching grid specs")
    union = np.count_nonzero(a.data | b.data)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.data & b.data) / union


def semantic_argmax(per_class: list[FeatureVolume], c: float) -> SemanticGrid:
    """Label each voxel with the argmax class, or EMPTY below threshold c.

    Ties break toward the lowest class index.
    """
    if len(per_class) == 0:
        raise ContractViolationError("semantic_argmax requires K >= 1 volumes")
    spec = per_class[0].spec
    for vol in per_class:
        if vol.spec != spec:
            raise ContractViolationError("all volumes must share one grid spec")
        if vol.channels != 1:
            raise ContractViolationError("per-class volumes must have C = 1")
        if np.any(vol.data < 0) or np.any(vol.data > 1):
            raise ContractViolationError("occupancy probabilities must lie in [0, 1]")
    stack = np.stack([vol.data[0] for vol in per_class], axis=0)
    labels = np.argmax(stack, axis=0).astype(np.int64)
    labels[np.max(stack, axis=0) < c] = EMPTY
    return SemanticGrid(spec, labels, num_classes=len(per_class))


def write_volume(path, vol: FeatureVolume) -> None:
    rx, ry, rz = vol.spec.resolution
    with open(path, "wb") as f:
        f.write(VOLUME_MAGIC)
        f.write(struct.pack("<IIIII", VOLUME_VERSION, vol.channels, rx, ry, rz))
        f.write(np.concatenate([vol.spec.lower, vol.spec.upper]).astype("<f4").tobytes())
        f.write(vol.data.astype("<f4").tobytes())


def read_volume(path) -> FeatureVolume:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != VOLUME_MAGIC:
        raise FormatError("bad volume-file magic", offset=0)
    header_len = 4 + 20 + 24
    if len(raw) < header_len:
        raise FormatError("truncated volume header", offset=len(raw))
    version, channels, rx, ry, rz = struct.unpack_from("<IIIII", raw, 4)
    if version != VOLUME_VERSION:
        raise FormatError(f"unsupported volume-file version {version}", offset=4)
    bounds = np.frombuffer(raw, dtype="<f4", count=6, offset=24)
    expected = header_len + 4 * channels * rx * ry * rz
    if len(raw) != expected:
        raise FormatError("volume payload size mismatch", offset=min(len(raw), expected))
    spec = GridSpec(bounds[:3].astype(np.float64), bounds[3:].astype(np.float64), (rx, ry, rz))
    data = np.frombuffer(raw, dtype="<f4", offset=header_len).reshape(channels, rx, ry, rz)
    return FeatureVolume(spec, data.copy())
