"""Relevancy maps: provider abstraction, multi-scale crop scheduling and
aggregation, the ground-truth oracle provider, RMAP file I/O, and projection
into relevancy point clouds.

Relevancy values are raw and non-negative throughout; amplitude carries the
provider's confidence and is never binarized or normalized per label.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractViolationError, FormatError
from .geometry import CameraIntrinsics, CameraPose, PointCloud, unproject_depth

RMAP_MAGIC = b"RMAP"
RMAP_VERSION = 1


@dataclass(frozen=True)
class RelevancyMap:
    label: str
    values: np.ndarray  # (H, W) float32, >= 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ContractViolationError("relevancy values must be H x W")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ContractViolationError("relevancy values must be finite and >= 0")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CropWindow:
    x: int
    y: int
    size: int


@dataclass(frozen=True)
class ScaleWindows:
    size: int
    stride: int
    windows: tuple[CropWindow, ...]


@dataclass(frozen=True)
class CropSchedule:
    width: int
    height: int
    scales: tuple[ScaleWindows, ...]


def make_crop_schedule(
    width: int,
    height: int,
    scale_divisors=(1, 2, 3, 4),
    stride_fraction: float = 0.25,
) -> CropSchedule:
    """Sliding-window schedule: size_k = floor(h / divisor_k), stride one
    ``stride_fraction`` of the size, plus an edge-flush window per axis so
    every pixel is covered at every scale."""
    if width != height:
        raise ContractViolationError("crop scheduling expects a square image")
    h = height
    scales = []
    for divisor in scale_divisors:
        if divisor < 1:
            raise ContractViolationError("scale divisors must be >= 1")
        size = h // int(divisor)
        if size < 1:
            raise ContractViolationError(f"crop size for divisor {divisor} is < 1 px")
        stride = max(1, int(size * stride_fraction))
        positions = list(range(0, h - size + 1, stride))
        if positions[-1] != h - size:
            positions.append(h - size)
        windows = tuple(
            CropWindow(x, y, size) for y in positions for x in positions
        )
        scales.append(ScaleWindows(size, stride, windows))
    return CropSchedule(width, height, tuple(scales))


def aggregate_crops(
    per_window_maps: list[tuple[CropWindow, np.ndarray]],
    schedule: CropSchedule,
    label: str = "",
) -> RelevancyMap:
    """Composite per-window maps: per-pixel mean within each scale, then the
    mean across scales.  Accumulation runs in float32 so the result is
    bit-reproducible for a fixed window order.
    """
    height, width = schedule.height, schedule.width
    by_size: dict[int, list[tuple[CropWindow, np.ndarray]]] = {
        s.size: [] for s in schedule.scales
    }
    for window, values in per_window_maps:
        values = np.asarray(values, dtype=np.float32)
        if values.shape != (window.size, window.size):
            raise ContractViolationError(
                f"window map shape {values.shape} does not match window size "
                f"{window.size}"
            )
        if window.size not in by_size:
            raise ContractViolationError(
                f"window size {window.size} is not part of the schedule"
            )
        by_size[window.size].append((window, values))

    total = np.zeros((height, width), dtype=np.float32)
    for scale in schedule.scales:
        acc = np.zeros((height, width), dtype=np.float32)
        count = np.zeros((height, width), dtype=np.float32)
        for window, values in by_size[scale.size]:
            acc[window.y : window.y + window.size, window.x : window.x + window.size] += values
            count[window.y : window.y + window.size, window.x : window.x + window.size] += 1.0
        if np.any(count == 0):
            raise ContractViolationError(
                f"scale {scale.size} leaves pixels uncovered"
            )
        total += acc / count
    final = total / np.float32(len(schedule.scales))
    return RelevancyMap(label, np.maximum(final, 0.0))


def aggregate_variants(
    maps: list[np.ndarray], flipped: list[bool], label: str = ""
) -> RelevancyMap:
    """Mean across augmentation variants; horizontally flipped variants are
    un-flipped first."""
    if len(maps) != len(flipped) or not maps:
        raise ContractViolationError("need one flip flag per variant map")
    acc = np.zeros_like(np.asarray(maps[0], dtype=np.float32))
    for values, flip in zip(maps, flipped):
        values = np.asarray(values, dtype=np.float32)
        acc += np.fliplr(values) if flip else values
    return RelevancyMap(label, acc / np.float32(len(maps)))


# ---------------------------------------------------------------------------
# providers


class RelevancyProvider(Protocol):
    def relevancy(self, view, labels: list[str]) -> list[RelevancyMap]:
        """One map per label, with the view's image dimensions."""
        ...


@dataclass(frozen=True)
class NoiseConfig:
    amplitude_min: float = 0.6
    amplitude_max: float = 1.0
    blur_sigma: float = 1.5
    noise_max: float = 0.05


def oracle_relevancy(
    scene,
    mask: np.ndarray,
    label: str,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> RelevancyMap:
    """Synthesize a VLM-like relevancy map from the instance mask.

    Visible instances matching the label contribute a blurred blob with
    amplitude ~ U(amplitude_min, amplitude_max); a uniform noise floor is
    added everywhere.  Labels with no matching visible instance yield a
    noise-floor-only map, modeling low confidence for absent objects.
    """
    base = np.zeros(mask.shape, dtype=np.float64)
    for obj in scene.objects_matching(label, include_hidden=False):
        amplitude = rng.uniform(noise.amplitude_min, noise.amplitude_max)
        base = np.maximum(base, amplitude * (mask == obj.id))
    if noise.blur_sigma > 0:
        base = gaussian_filter(base, sigma=noise.blur_sigma)
    if noise.noise_max > 0:
        base = base + rng.uniform(0.0, noise.noise_max, size=mask.shape)
    return RelevancyMap(label, np.maximum(base, 0.0))


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


class OracleRelevancyProvider:
    """Deterministic test double: maps derive from ground-truth masks.

    The per-map noise draw is keyed on (seed, view id, label) so identical
    requests always return identical maps, independent of call order.
    """

    def __init__(self, noise: NoiseConfig | None = None, seed: int = 0):
        self.noise = noise if noise is not None else NoiseConfig()
        self.seed = seed

    def relevancy(self, view, labels: list[str]) -> list[RelevancyMap]:
        out = []
        for label in labels:
            rng = np.random.default_rng(_stable_seed(self.seed, view.view_id, label))
            out.append(oracle_relevancy(view.scene, view.mask, label, self.noise, rng))
        return out


class RmapFileProvider:
    """Serves maps ingested from RMAP files, one file per view id."""

    def __init__(self, directory):
        from pathlib import Path

        self.directory = Path(directory)

    def relevancy(self, view, labels: list[str]) -> list[RelevancyMap]:
        path = self.directory / f"{view.view_id}.rmap"
        available = {m.label: m for m in read_rmap(path)}
        out = []
        for label in labels:
            if label not in available:
                raise ContractViolationError(
                    f"label {label!r} missing from {path}"
                )
            out.append(available[label])
        return out


def project_relevancy(
    rmap: RelevancyMap,
    depth: np.ndarray,
    intr: CameraIntrinsics,
    pose: CameraPose,
) -> PointCloud:
    """Lift a relevancy map to a C=1 point cloud via depth unprojection."""
    depth = np.asarray(depth)
    if rmap.values.shape != depth.shape:
        raise ContractViolationError("relevancy map and depth dimensions differ")
    return unproject_depth(depth, intr, pose, rmap.values)


# ---------------------------------------------------------------------------
# RMAP file format


def write_rmap(path, maps: list[RelevancyMap]) -> None:
    if not maps:
        raise ContractViolationError("RMAP files must contain at least one map")
    height, width = maps[0].values.shape
    for m in maps:
        if m.values.shape != (height, width):
            raise ContractViolationError("all maps in one RMAP file share dims")
    with open(path, "wb") as f:
        f.write(RMAP_MAGIC)
        f.write(struct.pack("<IIII", RMAP_VERSION, height, width, len(maps)))
        for m in maps:
            label = m.label.encode("utf-8")
            f.write(struct.pack("<I", len(label)))
            f.write(label)
            f.write(m.values.astype("<f4").tobytes())


def read_rmap(path) -> list[RelevancyMap]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != RMAP_MAGIC:
        raise FormatError("bad RMAP magic", offset=0)
    if len(raw) < 20:
        raise FormatError("truncated RMAP header", offset=len(raw))
    version, height, width, count = struct.unpack_from("<IIII", raw, 4)
    if version != RMAP_VERSION:
        raise FormatError(f"unsupported RMAP version {version}", offset=4)
    if count == 0:
        raise FormatError("RMAP file declares zero maps", offset=16)
    offset = 20
    maps = []
    for _ in range(count):
        if offset + 4 > len(raw):
            raise FormatError("truncated RMAP record header", offset=offset)
        (label_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        if offset + label_len + 4 * height * width > len(raw):
            raise FormatError("truncated RMAP record", offset=offset)
        label = raw[offset : offset + label_len].decode("utf-8")
        offset += label_len
        values = np.frombuffer(raw, dtype="<f4", count=height * width, offset=offset)
        offset += 4 * height * width
        maps.append(RelevancyMap(label, values.reshape(height, width).copy()))
    if offset != len(raw):
        raise FormatError("trailing bytes after last RMAP record", offset=offset)
    return maps
