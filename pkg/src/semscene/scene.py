"""Synthetic room scenes: generation, analytic depth rendering, occupancy
oracle, and viewer-centric spatial-relation ground truth.

Scenes live in the world frame shared with the voxel grid (z up, floor at
z = 0).  Cameras look roughly along +y from outside the grid footprint, so
viewer-centric directions are stable across scenes; the labeler nevertheless
derives them from the actual pose.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractViolationError, FormatError, GenerationError
from .geometry import CameraIntrinsics, CameraPose

BACKGROUND = -1
MASK_MAGIC = b"IMSK"

_RAY_EPS = 1e-9


# ---------------------------------------------------------------------------
# primitives


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=np.float64).reshape(3)
        )
        if self.radius <= 0:
            raise ContractViolationError("sphere radius must be positive")

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius

    def sdf(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=-1) - self.radius

    def ray_hits(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Smallest ray parameter s > 0 per ray, inf on miss.

        ``dirs`` may be unnormalized; s is in units of |dir|.
        """
        oc = origins - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * np.sum(dirs * oc, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - 4 * a * c
        hit = disc >= 0
        s = np.full(dirs.shape[:-1], np.inf)
        sq = np.sqrt(np.maximum(disc, 0.0))
        s0 = (-b - sq) / (2 * a)
        s1 = (-b + sq) / (2 * a)
        near = np.where(s0 > _RAY_EPS, s0, np.where(s1 > _RAY_EPS, s1, np.inf))
        s[hit] = near[hit]
        return s


@dataclass(frozen=True)
class Box:
    """Oriented box; ``rotation`` maps box frame to world."""

    rotation: np.ndarray
    translation: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )
        he = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if np.any(he <= 0):
            raise ContractViolationError("box half extents must be positive")
        object.__setattr__(self, "half_extents", he)

    @staticmethod
    def axis_aligned(center, half_extents) -> "Box":
        return Box(np.eye(3), center, half_extents)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        extent = np.abs(self.rotation) @ self.half_extents
        return self.translation - extent, self.translation + extent

    def _to_local(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation

    def sdf(self, points: np.ndarray) -> np.ndarray:
        q = np.abs(self._to_local(points)) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def ray_hits(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        ol = self._to_local(origins)
        dl = dirs @ self.rotation
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dl
            t0 = (-self.half_extents - ol) * inv
            t1 = (self.half_extents - ol) * inv
        lo = np.minimum(t0, t1)
        hi = np.maximum(t0, t1)
        # rays parallel to a slab: inside -> (-inf, inf), outside -> miss
        parallel = np.abs(dl) < 1e-14
        inside_slab = np.abs(ol) <= self.half_extents
        lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), hi)
        tmin = np.max(lo, axis=-1)
        tmax = np.min(hi, axis=-1)
        s = np.where(tmin > _RAY_EPS, tmin, tmax)
        s = np.where((tmax >= tmin) & (s > _RAY_EPS), s, np.inf)
        return s


Primitive = Sphere | Box


@dataclass(frozen=True)
class AABox:
    """Axis-aligned box region (receptacles, room)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64).reshape(3)
        upper = np.asarray(self.upper, dtype=np.float64).reshape(3)
        if not np.all(lower < upper):
            raise ContractViolationError("region lower bound must be below upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.all((points >= self.lower) & (points <= self.upper), axis=-1)


# ---------------------------------------------------------------------------
# scene objects


@dataclass(frozen=True)
class SceneObject:
    id: int
    class_label: str
    synonyms: tuple[str, ...]
    primitives: tuple[Primitive, ...]
    on_top_region: AABox | None = None
    inside_region: AABox | None = None
    hidden: bool = False

    def matches(self, label: str) -> bool:
        label = label.strip().lower()
        return label == self.class_label.lower() or label in (
            s.lower() for s in self.synonyms
        )

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = zip(*(p.aabb() for p in self.primitives))
        return np.min(los, axis=0), np.max(his, axis=0)

    def centroid(self) -> np.ndarray:
        lo, hi = self.aabb()
        return 0.5 * (lo + hi)

    def bounding_radius(self) -> float:
        lo, hi = self.aabb()
        return float(0.5 * np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class Scene:
    room: AABox
    objects: tuple[SceneObject, ...]
    split_tag: str = "train"

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ContractViolationError("object ids must be unique")

    def visible_objects(self) -> tuple[SceneObject, ...]:
        return tuple(o for o in self.objects if not o.hidden)

    def visible_classes(self) -> list[str]:
        seen: list[str] = []
        for o in self.visible_objects():
            if o.class_label not in seen:
                seen.append(o.class_label)
        return seen

    def objects_matching(self, label: str, include_hidden: bool = True):
        return [
            o
            for o in self.objects
            if o.matches(label) and (include_hidden or not o.hidden)
        ]


class SpatialRelation(Enum):
    BEHIND = "behind"
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    IN_FRONT_OF = "in_front_of"
    ON_TOP_OF = "on_top_of"
    INSIDE = "inside"


DIRECTIONAL_RELATIONS = (
    SpatialRelation.BEHIND,
    SpatialRelation.LEFT_OF,
    SpatialRelation.RIGHT_OF,
    SpatialRelation.IN_FRONT_OF,
)

OPPOSITE_RELATION = {
    SpatialRelation.LEFT_OF: SpatialRelation.RIGHT_OF,
    SpatialRelation.RIGHT_OF: SpatialRelation.LEFT_OF,
    SpatialRelation.BEHIND: SpatialRelation.IN_FRONT_OF,
    SpatialRelation.IN_FRONT_OF: SpatialRelation.BEHIND,
}


@dataclass(frozen=True)
class Description:
    target_label: str
    relation: SpatialRelation
    ref_label: str

    def __post_init__(self):
        if not self.target_label or not self.ref_label:
            raise ContractViolationError("description labels must be nonempty")


# ---------------------------------------------------------------------------
# rendering


def render_depth(
    scene: Scene, intr: CameraIntrinsics, pose: CameraPose
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ray casting; returns (z-depth image, instance-id mask).

    Background pixels carry depth 0 and id BACKGROUND.  Hidden objects are
    skipped.
    """
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    dirs_cam = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1
    )
    dirs = dirs_cam @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)

    depth = np.full((intr.height, intr.width), np.inf)
    mask = np.full((intr.height, intr.width), BACKGROUND, dtype=np.int32)
    for obj in scene.visible_objects():
        for prim in obj.primitives:
            s = prim.ray_hits(origins, dirs)
            closer = s < depth
            depth[closer] = s[closer]
            mask[closer] = obj.id
    depth[~np.isfinite(depth)] = 0.0
    return depth.astype(np.float32), mask


# ---------------------------------------------------------------------------
# occupancy oracle


def occupancy_query(
    scene: Scene,
    class_label: str,
    points: np.ndarray,
    probe_radius: float,
) -> np.ndarray:
    """True where a probe sphere at the point intersects any primitive of an
    object whose class or synonyms match ``class_label``."""
    if probe_radius < 0:
        raise ContractViolationError("probe_radius must be non-negative")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(points.shape[0], dtype=bool)
    for obj in scene.objects_matching(class_label):
        for prim in obj.primitives:
            out |= prim.sdf(points) <= probe_radius
    return out


# ---------------------------------------------------------------------------
# spatial relations

COS_CONE = np.cos(np.deg2rad(45.0))
DEFAULT_KAPPA = 0.5


def _horizontal_unit(vec: np.ndarray) -> np.ndarray:
    flat = np.array([vec[0], vec[1], 0.0])
    norm = np.linalg.norm(flat)
    if norm < 1e-9:
        raise ContractViolationError("camera axis has no horizontal component")
    return flat / norm


def relation_direction(pose: CameraPose, relation: SpatialRelation) -> np.ndarray:
    """View-centric horizontal unit direction for a directional relation."""
    right, _down, forward = pose.camera_axes_world()
    right_h = _horizontal_unit(right)
    forward_h = _horizontal_unit(forward)
    if relation is SpatialRelation.LEFT_OF:
        return -right_h
    if relation is SpatialRelation.RIGHT_OF:
        return right_h
    if relation is SpatialRelation.IN_FRONT_OF:
        return -forward_h
    if relation is SpatialRelation.BEHIND:
        return forward_h
    raise ContractViolationError(f"{relation} is not directional")


def mean_class_radius(scene: Scene, label: str) -> float:
    """Mean bounding-sphere radius of the labeled class; falls back to the
    scene-wide mean when the class has no instance in the scene."""
    matching = scene.objects_matching(label)
    pool = matching if matching else list(scene.objects)
    if not pool:
        raise ContractViolationError("scene has no objects")
    return float(np.mean([o.bounding_radius() for o in pool]))


def label_spatial_relation(
    scene: Scene,
    pose: CameraPose,
    desc: Description,
    eval_points: np.ndarray,
    kappa: float = DEFAULT_KAPPA,
) -> np.ndarray:
    """Ground-truth positives for a description at the given points.

    A point is positive iff it is consistent with the description for SOME
    visible instance of the reference label:
      * ON_TOP_OF / INSIDE: the point lies in that instance's receptacle
        region;
      * directional: the displacement d from the instance centroid satisfies
        cos(d, u) >= cos 45 deg and ||d|| <= (1 + kappa) (r_t + r_ref), with
        u the view-centric unit direction, r_ref the instance's bounding
        radius, and r_t the mean target-class radius.

    Multiple matching reference instances union their per-instance positive
    sets.  For directional relations, points that also satisfy the OPPOSITE
    relation for some other instance are ambiguous and labeled negative, so
    the left/right (and front/behind) positive sets are always disjoint.

    A reference label with no visible instance yields all-negative output.
    """
    points = np.asarray(eval_points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(points.shape[0], dtype=bool)
    refs = scene.objects_matching(desc.ref_label, include_hidden=False)
    if not refs:
        return out

    if desc.relation is SpatialRelation.ON_TOP_OF:
        for obj in refs:
            if obj.on_top_region is not None:
                out |= obj.on_top_region.contains(points)
        return out
    if desc.relation is SpatialRelation.INSIDE:
        for obj in refs:
            if obj.inside_region is not None:
                out |= obj.inside_region.contains(points)
        return out

    r_t = mean_class_radius(scene, desc.target_label)

    def directional_union(relation: SpatialRelation) -> np.ndarray:
        direction = relation_direction(pose, relation)
        acc = np.zeros(points.shape[0], dtype=bool)
        for obj in refs:
            d = points - obj.centroid()
            dist = np.linalg.norm(d, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cos = (d @ direction) / dist
            reach = (1.0 + kappa) * (r_t + obj.bounding_radius())
            acc |= (dist > 0) & (cos >= COS_CONE) & (dist <= reach)
        return acc

    out = directional_union(desc.relation)
    return out & ~directional_union(OPPOSITE_RELATION[desc.relation])


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class ClassSpec:
    name: str
    synonyms: tuple[str, ...]
    shape: str  # sphere | box | container | table
    size_min: float
    size_max: float


def default_class_registry() -> tuple[ClassSpec, ...]:
    # Paired halves with identical shape families, so a vocabulary holdout
    # leaves the geometry distribution unchanged.
    return (
        ClassSpec("ball", ("orb", "round toy"), "sphere", 0.13, 0.20),
        ClassSpec("globe", ("world sphere",), "sphere", 0.13, 0.20),
        ClassSpec("crate", ("wooden box",), "box", 0.12, 0.20),
        ClassSpec("bin", ("storage cube",), "box", 0.12, 0.20),
        ClassSpec("cabinet", ("cupboard",), "container", 0.14, 0.20),
        ClassSpec("hamper", ("basket",), "container", 0.14, 0.20),
        ClassSpec("table", ("desk",), "table", 0.18, 0.26),
        ClassSpec("bench", ("stool",), "table", 0.18, 0.26),
    )


def synonym_table(classes=None) -> dict[str, str]:
    classes = classes if classes is not None else default_class_registry()
    return {c.name: c.synonyms[0] for c in classes if c.synonyms}


@dataclass(frozen=True)
class SceneConfig:
    classes: tuple[ClassSpec, ...] = field(default_factory=default_class_registry)
    room: AABox = field(
        default_factory=lambda: AABox(
            np.array([-0.92, -0.92, 0.0]), np.array([0.92, 0.92, 1.5])
        )
    )
    min_objects: int = 3
    max_objects: int = 5
    ensure_container: bool = True
    hidden_object_prob: float = 0.6
    placement_margin: float = 0.04
    max_retries: int = 200

    def __post_init__(self):
        if not self.classes:
            raise ContractViolationError("class vocabulary must be nonempty")
        if self.min_objects < 1 or self.max_objects < self.min_objects:
            raise ContractViolationError("invalid object count range")

    def class_by_name(self, name: str) -> ClassSpec:
        for c in self.classes:
            if c.name == name:
                return c
        raise ContractViolationError(f"unknown class {name!r}")


def _build_object(
    oid: int, spec: ClassSpec, center_xy: np.ndarray, rng: np.random.Generator
) -> SceneObject:
    cx, cy = center_xy
    size = rng.uniform(spec.size_min, spec.size_max)
    if spec.shape == "sphere":
        prims = (Sphere(np.array([cx, cy, size]), size),)
        region_top = region_in = None
    elif spec.shape == "box":
        he = np.array(
            [size * rng.uniform(0.8, 1.2), size * rng.uniform(0.8, 1.2), size]
        )
        prims = (Box.axis_aligned(np.array([cx, cy, he[2]]), he),)
        region_top = region_in = None
    elif spec.shape == "container":
        hx = size * rng.uniform(0.9, 1.1)
        hy = size * rng.uniform(0.9, 1.1)
        hz = rng.uniform(0.12, 0.18)
        t = 0.03
        z0, z1 = 0.0, 2 * hz
        prims = (
            # bottom, then four side walls; open top
            Box.axis_aligned([cx, cy, t / 2], [hx, hy, t / 2]),
            Box.axis_aligned([cx - hx + t / 2, cy, hz], [t / 2, hy, hz]),
            Box.axis_aligned([cx + hx - t / 2, cy, hz], [t / 2, hy, hz]),
            Box.axis_aligned([cx, cy - hy + t / 2, hz], [hx - t, t / 2, hz]),
            Box.axis_aligned([cx, cy + hy - t / 2, hz], [hx - t, t / 2, hz]),
        )
        region_in = AABox(
            [cx - hx + t, cy - hy + t, z0 + t], [cx + hx - t, cy + hy - t, z1]
        )
        region_top = None
    elif spec.shape == "table":
        hx = size * rng.uniform(0.9, 1.1)
        hy = size * rng.uniform(0.9, 1.1)
        height = rng.uniform(0.35, 0.55)
        tz = 0.025
        leg = 0.025
        legs = []
        for sx in (-1, 1):
            for sy in (-1, 1):
                legs.append(
                    Box.axis_aligned(
                        [cx + sx * (hx - leg), cy + sy * (hy - leg), height / 2],
                        [leg, leg, height / 2],
                    )
                )
        prims = (
            Box.axis_aligned([cx, cy, height + tz], [hx, hy, tz]),
            *legs,
        )
        region_top = AABox(
            [cx - hx, cy - hy, height + 2 * tz], [cx + hx, cy + hy, height + 2 * tz + 0.25]
        )
        region_in = None
    else:
        raise ContractViolationError(f"unknown shape {spec.shape!r}")
    return SceneObject(
        id=oid,
        class_label=spec.name,
        synonyms=spec.synonyms,
        primitives=prims,
        on_top_region=region_top,
        inside_region=region_in,
    )


def _footprint(obj: SceneObject, margin: float) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = obj.aabb()
    return lo[:2] - margin, hi[:2] + margin


def _overlaps(a, b) -> bool:
    (alo, ahi), (blo, bhi) = a, b
    return bool(np.all(ahi > blo) and np.all(bhi > alo))


def generate_scene(rng: np.random.Generator, cfg: SceneConfig) -> Scene:
    """Place non-interpenetrating objects in the room; deterministic per rng."""
    n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    class_names = [c.name for c in cfg.classes]
    picks = [cfg.classes[rng.integers(len(cfg.classes))] for _ in range(n)]
    if cfg.ensure_container and not any(c.shape == "container" for c in picks):
        containers = [c for c in cfg.classes if c.shape == "container"]
        if containers:
            picks[0] = containers[rng.integers(len(containers))]

    objects: list[SceneObject] = []
    footprints = []
    oid = 0
    for spec in picks:
        placed = False
        for _ in range(cfg.max_retries):
            reach = spec.size_max * 1.5
            cx = rng.uniform(cfg.room.lower[0] + reach, cfg.room.upper[0] - reach)
            cy = rng.uniform(cfg.room.lower[1] + reach, cfg.room.upper[1] - reach)
            candidate = _build_object(oid, spec, np.array([cx, cy]), rng)
            fp = _footprint(candidate, cfg.placement_margin)
            if not any(_overlaps(fp, other) for other in footprints):
                objects.append(candidate)
                footprints.append(fp)
                oid += 1
                placed = True
                break
        if not placed:
            # crowded room: drop the extra object rather than fail, as long
            # as the minimum population is already met
            if len(objects) >= cfg.min_objects:
                continue
            raise GenerationError(
                f"could not place object of class {spec.name!r} "
                f"after {cfg.max_retries} retries"
            )

    if rng.uniform() < cfg.hidden_object_prob:
        visible_names = {o.class_label for o in objects}
        candidates = [c for c in cfg.classes if c.name not in visible_names]
        if candidates:
            spec = candidates[rng.integers(len(candidates))]
            for _ in range(cfg.max_retries):
                reach = spec.size_max * 1.5
                cx = rng.uniform(cfg.room.lower[0] + reach, cfg.room.upper[0] - reach)
                cy = rng.uniform(cfg.room.lower[1] + reach, cfg.room.upper[1] - reach)
                candidate = _build_object(oid, spec, np.array([cx, cy]), rng)
                fp = _footprint(candidate, cfg.placement_margin)
                if not any(_overlaps(fp, other) for other in footprints):
                    objects.append(
                        SceneObject(
                            id=candidate.id,
                            class_label=candidate.class_label,
                            synonyms=candidate.synonyms,
                            primitives=candidate.primitives,
                            on_top_region=candidate.on_top_region,
                            inside_region=candidate.inside_region,
                            hidden=True,
                        )
                    )
                    footprints.append(fp)
                    break

    return Scene(room=cfg.room, objects=tuple(objects))


# ---------------------------------------------------------------------------
# descriptions


@dataclass(frozen=True)
class DescriptionSample:
    description: Description
    positives: np.ndarray  # bool, one per eval point
    hidden_target: bool


def generate_descriptions(
    scene: Scene,
    pose: CameraPose,
    rng: np.random.Generator,
    k: int,
    eval_points: np.ndarray,
    kappa: float = DEFAULT_KAPPA,
    max_retries: int = 100,
) -> list[DescriptionSample]:
    """Sample k descriptions with nonempty positive sets.

    Hidden-target descriptions use the scene's hidden object's class as the
    target; the description is kept even though the object never renders.
    """
    visible = scene.visible_objects()
    hidden = [o for o in scene.objects if o.hidden]
    if not visible:
        raise GenerationError("scene has no visible objects")

    candidates: list[tuple[SceneObject, SpatialRelation]] = []
    for obj in visible:
        if obj.inside_region is not None:
            candidates.append((obj, SpatialRelation.INSIDE))
        if obj.on_top_region is not None:
            candidates.append((obj, SpatialRelation.ON_TOP_OF))
        for rel in DIRECTIONAL_RELATIONS:
            candidates.append((obj, rel))
    if not candidates:
        raise GenerationError("scene admits no relation candidates")

    samples: list[DescriptionSample] = []
    for _ in range(k):
        sample = None
        for _ in range(max_retries):
            ref, rel = candidates[rng.integers(len(candidates))]
            use_hidden = bool(hidden) and rng.uniform() < 0.5
            if use_hidden:
                target_label = hidden[rng.integers(len(hidden))].class_label
            else:
                others = [o for o in visible if o.class_label != ref.class_label]
                pool = others if others else list(visible)
                target_label = pool[rng.integers(len(pool))].class_label
            desc = Description(target_label, rel, ref.class_label)
            positives = label_spatial_relation(scene, pose, desc, eval_points, kappa)
            if positives.any():
                sample = DescriptionSample(desc, positives, use_hidden)
                break
        if sample is None:
            raise GenerationError("no valid description found")
        samples.append(sample)
    return samples


# ---------------------------------------------------------------------------
# serialization


def _region_json(region: AABox | None):
    if region is None:
        return None
    return {"lower": region.lower.tolist(), "upper": region.upper.tolist()}


def _region_from_json(data) -> AABox | None:
    if data is None:
        return None
    return AABox(np.array(data["lower"]), np.array(data["upper"]))


def _primitive_json(prim: Primitive):
    if isinstance(prim, Sphere):
        return {"type": "sphere", "center": prim.center.tolist(), "radius": prim.radius}
    return {
        "type": "box",
        "rotation": prim.rotation.tolist(),
        "translation": prim.translation.tolist(),
        "half_extents": prim.half_extents.tolist(),
    }


def _primitive_from_json(data) -> Primitive:
    if data["type"] == "sphere":
        return Sphere(np.array(data["center"]), float(data["radius"]))
    if data["type"] == "box":
        return Box(
            np.array(data["rotation"]),
            np.array(data["translation"]),
            np.array(data["half_extents"]),
        )
    raise FormatError(f"unknown primitive type {data['type']!r}")


def scene_to_json(scene: Scene) -> dict:
    return {
        "room": _region_json(scene.room),
        "split_tag": scene.split_tag,
        "objects": [
            {
                "id": o.id,
                "class": o.class_label,
                "synonyms": list(o.synonyms),
                "hidden": o.hidden,
                "primitives": [_primitive_json(p) for p in o.primitives],
                "on_top_region": _region_json(o.on_top_region),
                "inside_region": _region_json(o.inside_region),
            }
            for o in scene.objects
        ],
    }


def scene_from_json(data: dict) -> Scene:
    objects = tuple(
        SceneObject(
            id=int(o["id"]),
            class_label=o["class"],
            synonyms=tuple(o.get("synonyms", ())),
            primitives=tuple(_primitive_from_json(p) for p in o["primitives"]),
            on_top_region=_region_from_json(o.get("on_top_region")),
            inside_region=_region_from_json(o.get("inside_region")),
            hidden=bool(o.get("hidden", False)),
        )
        for o in data["objects"]
    )
    room = _region_from_json(data["room"])
    return Scene(room=room, objects=objects, split_tag=data.get("split_tag", "train"))


def write_scene(path, scene: Scene) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene_to_json(scene), f, indent=1, sort_keys=True)


def read_scene(path) -> Scene:
    with open(path, encoding="utf-8") as f:
        return scene_from_json(json.load(f))


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=np.int32)
    height, width = mask.shape
    with open(path, "wb") as f:
        f.write(MASK_MAGIC)
        f.write(struct.pack("<II", width, height))
        f.write(mask.astype("<i4").tobytes())


def read_mask(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MASK_MAGIC:
        raise FormatError("bad mask-file magic", offset=0)
    if len(raw) < 12:
        raise FormatError("truncated mask header", offset=len(raw))
    width, height = struct.unpack_from("<II", raw, 4)
    expected = 12 + 4 * width * height
    if len(raw) != expected:
        raise FormatError("mask payload size mismatch", offset=min(len(raw), expected))
    return np.frombuffer(raw, dtype="<i4", offset=12).reshape(height, width).copy()
