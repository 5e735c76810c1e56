"""Rendered views and on-disk dataset trees.

A dataset directory holds one subdirectory per view:

    <out>/manifest.json
    <out>/views/<view_id>/scene.json
    <out>/views/<view_id>/camera.json
    <out>/views/<view_id>/depth.dpth
    <out>/views/<view_id>/mask.imsk
    <out>/views/<view_id>/descriptions.json
    <out>/views/<view_id>/occupancy.fvol      (per-class 0/1 grids, eval res)
    <out>/views/<view_id>/relations.fvol      (per-description 0/1 grids)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, scene as scene_mod, voxel
from .errors import ConfigError
from .geometry import CameraIntrinsics, CameraPose
from .scene import (
    Description,
    DescriptionSample,
    Scene,
    SceneConfig,
    SpatialRelation,
    generate_descriptions,
    generate_scene,
    render_depth,
)
from .voxel import FeatureVolume, GridSpec

DEFAULT_PROBE_FRACTION = 0.5  # probe radius = fraction of the min voxel edge


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=70.0, fy=70.0, cx=48.0, cy=48.0, width=96, height=96)


def sample_camera_pose(rng: np.random.Generator) -> CameraPose:
    """Camera outside the grid footprint looking roughly along +y, with mild
    position jitter.  Yaw stays near zero so viewer-centric directions are
    consistent across the dataset."""
    position = np.array(
        [rng.uniform(-0.06, 0.06), rng.uniform(-1.75, -1.6), rng.uniform(1.05, 1.3)]
    )
    target = np.array([position[0] * 0.5, 0.1, rng.uniform(0.35, 0.5)])
    return CameraPose.look_at(position, target)


def default_probe_radius(spec: GridSpec) -> float:
    return DEFAULT_PROBE_FRACTION * float(np.min(spec.voxel_size))


@dataclass
class View:
    """One rendered observation of a scene."""

    view_id: str
    scene: Scene
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: np.ndarray
    mask: np.ndarray
    label_rewrite: dict[str, str] = field(default_factory=dict)

    def task_label(self, class_label: str) -> str:
        """Label string as fed to the relevancy provider (synonym splits
        rewrite labels here; the scene ground truth is untouched)."""
        return self.label_rewrite.get(class_label, class_label)

    def class_labels(self) -> list[str]:
        return self.scene.visible_classes()


@dataclass
class ViewRecord:
    """A view plus its description ground truth."""

    view: View
    descriptions: list[DescriptionSample]


def make_view(
    scene: Scene,
    view_id: str,
    rng: np.random.Generator,
    intrinsics: CameraIntrinsics | None = None,
) -> View:
    intr = intrinsics if intrinsics is not None else default_intrinsics()
    pose = sample_camera_pose(rng)
    depth, mask = render_depth(scene, intr, pose)
    return View(view_id, scene, intr, pose, depth, mask)


def make_dataset(
    seed: int,
    count: int,
    scene_cfg: SceneConfig | None = None,
    grid: GridSpec | None = None,
    descriptions_per_view: int = 6,
) -> list[ViewRecord]:
    """Generate ``count`` scene views with description ground truth."""
    if count < 1:
        raise ConfigError("dataset count must be >= 1")
    cfg = scene_cfg if scene_cfg is not None else SceneConfig()
    spec = grid if grid is not None else GridSpec.default()
    centers = spec.voxel_centers()
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        scn = generate_scene(rng, cfg)
        view = make_view(scn, f"view_{i:05d}", rng)
        descs = generate_descriptions(
            scn, view.pose, rng, descriptions_per_view, centers
        )
        records.append(ViewRecord(view, descs))
    return records


# ---------------------------------------------------------------------------
# ground-truth grids


def class_occupancy_grids(
    view: View, spec: GridSpec, probe_radius: float | None = None
) -> dict[str, np.ndarray]:
    """Boolean occupancy at voxel centers, one grid per visible class."""
    probe = probe_radius if probe_radius is not None else default_probe_radius(spec)
    centers = spec.voxel_centers()
    out = {}
    for label in view.class_labels():
        occ = scene_mod.occupancy_query(view.scene, label, centers, probe)
        out[label] = occ.reshape(spec.resolution)
    return out


# ---------------------------------------------------------------------------
# disk I/O


def _pose_json(pose: CameraPose) -> dict:
    return {"rotation": pose.rotation.tolist(), "translation": pose.translation.tolist()}


def _camera_json(view: View) -> dict:
    intr = view.intrinsics
    return {
        "view_id": view.view_id,
        "intrinsics": {
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
            "width": intr.width,
            "height": intr.height,
        },
        "pose": _pose_json(view.pose),
    }


def _descriptions_json(descs: list[DescriptionSample]) -> list[dict]:
    return [
        {
            "target": d.description.target_label,
            "relation": d.description.relation.value,
            "ref": d.description.ref_label,
            "hidden_target": d.hidden_target,
        }
        for d in descs
    ]


def save_view_record(
    directory: Path, record: ViewRecord, spec: GridSpec
) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    view = record.view
    scene_mod.write_scene(directory / "scene.json", view.scene)
    with open(directory / "camera.json", "w", encoding="utf-8") as f:
        json.dump(_camera_json(view), f, indent=1, sort_keys=True)
    geometry.write_depth(directory / "depth.dpth", view.depth)
    scene_mod.write_mask(directory / "mask.imsk", view.mask)
    with open(directory / "descriptions.json", "w", encoding="utf-8") as f:
        json.dump(_descriptions_json(record.descriptions), f, indent=1, sort_keys=True)

    occ = class_occupancy_grids(view, spec)
    if occ:
        data = np.stack([occ[c] for c in view.class_labels()]).astype(np.float32)
        voxel.write_volume(directory / "occupancy.fvol", FeatureVolume(spec, data))
    if record.descriptions:
        data = np.stack(
            [d.positives.reshape(spec.resolution) for d in record.descriptions]
        ).astype(np.float32)
        voxel.write_volume(directory / "relations.fvol", FeatureVolume(spec, data))


def load_view_record(directory: Path, spec: GridSpec) -> ViewRecord:
    scn = scene_mod.read_scene(directory / "scene.json")
    with open(directory / "camera.json", encoding="utf-8") as f:
        cam = json.load(f)
    intr = CameraIntrinsics(**cam["intrinsics"])
    pose = CameraPose(
        np.array(cam["pose"]["rotation"]), np.array(cam["pose"]["translation"])
    )
    depth = geometry.read_depth(directory / "depth.dpth")
    mask = scene_mod.read_mask(directory / "mask.imsk")
    view = View(cam["view_id"], scn, intr, pose, depth, mask)
    with open(directory / "descriptions.json", encoding="utf-8") as f:
        raw = json.load(f)
    centers = spec.voxel_centers()
    descs = []
    for d in raw:
        desc = Description(d["target"], SpatialRelation(d["relation"]), d["ref"])
        positives = scene_mod.label_spatial_relation(scn, pose, desc, centers)
        descs.append(DescriptionSample(desc, positives, d["hidden_target"]))
    return ViewRecord(view, descs)


def save_dataset(out_dir, records: list[ViewRecord], spec: GridSpec) -> None:
    out = Path(out_dir)
    views_dir = out / "views"
    views_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        save_view_record(views_dir / record.view.view_id, record, spec)


def load_dataset(root, spec: GridSpec | None = None) -> list[ViewRecord]:
    spec = spec if spec is not None else GridSpec.default()
    views_dir = Path(root) / "views"
    if not views_dir.is_dir():
        raise ConfigError(f"{root} does not contain a views/ directory")
    return [
        load_view_record(d, spec) for d in sorted(views_dir.iterdir()) if d.is_dir()
    ]
