"""End-to-end inference pipelines: open-vocabulary scene completion (per-label
occupancy + semantic argmax) and description-driven hidden-object
localization, plus PLY export of results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ContractViolationError
from .geometry import filter_bounds
from .network import LOGIT_CLAMP, OccupancyModel, spatial_similarity, concat_features
from .relevancy import RelevancyProvider, project_relevancy
from .scene import Description
from .voxel import FeatureVolume, GridSpec, OccupancyGrid, SemanticGrid, scatter_max, semantic_argmax

DEFAULT_EMPTY_THRESHOLD = 0.5


@dataclass
class OvsscResult:
    labels: list[str]
    per_class_prob: list[FeatureVolume]
    semantic: SemanticGrid


@dataclass
class VoolResult:
    description: Description
    prob: FeatureVolume
    occupancy: OccupancyGrid


def relevancy_volume(view, label: str, provider: RelevancyProvider, grid: GridSpec) -> FeatureVolume:
    """Provider map -> projected cloud -> bounds filter -> max scatter."""
    (rmap,) = provider.relevancy(view, [label])
    cloud = project_relevancy(rmap, view.depth, view.intrinsics, view.pose)
    cloud = filter_bounds(cloud, grid)
    return scatter_max(cloud, grid)


def _occupancy_probs(
    model: OccupancyModel, rvox: FeatureVolume, queries: torch.Tensor, spec: GridSpec
) -> np.ndarray:
    x = torch.from_numpy(rvox.data).unsqueeze(0)
    with torch.no_grad():
        z = model.encode_tensor(x)[0]
        feats = model.sample_features(z, queries, rvox.spec)
        probs = model.decoder(feats)
    return probs.numpy()


def ovssc_infer(
    view,
    labels: list[str],
    provider: RelevancyProvider,
    model: OccupancyModel,
    eval_spec: GridSpec,
    grid: GridSpec | None = None,
    empty_threshold: float = DEFAULT_EMPTY_THRESHOLD,
) -> OvsscResult:
    """Run the completion pipeline once per label and argmax over classes.

    Query points are the eval grid's voxel centers; the decoder is continuous,
    so the eval resolution is independent of the scatter/encode grid.
    """
    if not labels:
        raise ContractViolationError("ovssc_infer requires K >= 1 labels")
    grid = grid if grid is not None else eval_spec
    queries = torch.from_numpy(eval_spec.voxel_centers().astype(np.float32))
    per_class = []
    for label in labels:
        try:
            rvox = relevancy_volume(view, label, provider, grid)
        except Exception as exc:
            raise type(exc)(f"label {label!r}: {exc}") from exc
        probs = _occupancy_probs(model, rvox, queries, eval_spec)
        per_class.append(
            FeatureVolume(eval_spec, probs.reshape((1,) + eval_spec.resolution))
        )
    semantic = semantic_argmax(per_class, empty_threshold)
    return OvsscResult(list(labels), per_class, semantic)


def vool_infer(
    view,
    desc: Description,
    provider: RelevancyProvider,
    model: OccupancyModel,
    eval_spec: GridSpec,
    grid: GridSpec | None = None,
    empty_threshold: float = DEFAULT_EMPTY_THRESHOLD,
) -> VoolResult:
    """Localize the description's target region.

    Both the target and the reference relevancy maps are requested even when
    the target is hidden; a noise-floor target map carries the provider's
    "not visible" signal.
    """
    if model.spatial is None:
        raise ContractViolationError("model has no spatial embeddings")
    grid = grid if grid is not None else eval_spec
    rvox_target = relevancy_volume(view, desc.target_label, provider, grid)
    rvox_ref = relevancy_volume(view, desc.ref_label, provider, grid)
    queries = torch.from_numpy(eval_spec.voxel_centers().astype(np.float32))
    with torch.no_grad():
        z_target = model.encode_tensor(torch.from_numpy(rvox_target.data).unsqueeze(0))[0]
        z_ref = model.encode_tensor(torch.from_numpy(rvox_ref.data).unsqueeze(0))[0]
        feat_t = model.sample_features(z_target, queries, grid)
        feat_r = model.sample_features(z_ref, queries, grid)
        logits = spatial_similarity(
            concat_features(feat_t, feat_r), desc.relation, model.spatial
        )
        probs = torch.sigmoid(logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)).numpy()
    prob_vol = FeatureVolume(eval_spec, probs.reshape((1,) + eval_spec.resolution))
    occupancy = OccupancyGrid(eval_spec, prob_vol.data[0] >= empty_threshold)
    return VoolResult(desc, prob_vol, occupancy)


# ---------------------------------------------------------------------------
# PLY export


def write_ply(path, positions: np.ndarray, quality: np.ndarray) -> None:
    """ASCII PLY with per-vertex scalar ``quality``."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    quality = np.asarray(quality, dtype=np.float64).reshape(-1)
    if positions.shape[0] != quality.shape[0]:
        raise ContractViolationError("positions and quality must have equal N")
    with open(path, "w", encoding="ascii") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {positions.shape[0]}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("property float quality\nend_header\n")
        for p, q in zip(positions, quality):
            f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {q:.6f}\n")


def prob_volume_to_ply(path, vol: FeatureVolume, threshold: float) -> int:
    """Export voxel centers with probability >= threshold; returns the count."""
    probs = vol.data[0].reshape(-1)
    centers = vol.spec.voxel_centers()
    keep = probs >= threshold
    write_ply(path, centers[keep], probs[keep])
    return int(np.count_nonzero(keep))


def semantic_grid_to_ply(path, semantic: SemanticGrid) -> int:
    """Export non-EMPTY voxel centers with the class index as quality."""
    labels = semantic.data.reshape(-1)
    centers = semantic.spec.voxel_centers()
    keep = labels >= 0
    write_ply(path, centers[keep], labels[keep].astype(np.float64))
    return int(np.count_nonzero(keep))
