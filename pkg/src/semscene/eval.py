"""Evaluation: dataset splits, per-class completion IoU with a confusion
matrix, and per-relation localization IoU.

Splits probe three generalization axes: novel rooms (new layouts, same
vocabulary), novel synonyms (same views, labels rewritten to synonyms the
ground truth never uses), and novel classes (held-out vocabulary whose shape
families mirror the training classes).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ViewRecord, class_occupancy_grids, make_dataset
from .errors import ConfigError, ContractViolationError
from .relevancy import RelevancyProvider
from .scene import (
    Description,
    SceneConfig,
    SpatialRelation,
    default_class_registry,
    label_spatial_relation,
    synonym_table,
)
from .tasks import DEFAULT_EMPTY_THRESHOLD, ovssc_infer, vool_infer
from .network import OccupancyModel
from .voxel import EMPTY, GridSpec, OccupancyGrid, voxel_iou


# ---------------------------------------------------------------------------
# splits


@dataclass
class Splits:
    train: list[ViewRecord]
    novel_room: list[ViewRecord]
    novel_synonym: list[ViewRecord]
    novel_class: list[ViewRecord]
    seen_classes: list[str]
    held_out_classes: list[str]

    def named(self) -> dict[str, list[ViewRecord]]:
        return {
            "train": self.train,
            "novel_room": self.novel_room,
            "novel_synonym": self.novel_synonym,
            "novel_class": self.novel_class,
        }


def split_class_registry() -> tuple[list, list]:
    """Even/odd halves of the registry; the pairing keeps the shape-family
    distribution identical across halves, so holding out the odd half changes
    only the vocabulary."""
    registry = default_class_registry()
    return registry[0::2], registry[1::2]


def _rewrite_to_synonyms(records: list[ViewRecord]) -> list[ViewRecord]:
    table = synonym_table()
    out = []
    for record in records:
        view = record.view
        rewrite = {c: table[c] for c in view.class_labels() if table.get(c)}
        rewritten = dataclass_replace_view(view, rewrite)
        out.append(ViewRecord(rewritten, record.descriptions))
    return out


def dataclass_replace_view(view, rewrite: dict[str, str]):
    from dataclasses import replace

    return replace(view, label_rewrite=rewrite)


def make_splits(
    seed: int,
    train_count: int,
    eval_count: int,
    grid: GridSpec | None = None,
    descriptions_per_view: int = 6,
) -> Splits:
    """Generate all four splits from one seed.

    Rooms never repeat across splits (distinct sub-seeds); the synonym split
    reuses the novel-room views with provider-facing labels rewritten.
    """
    seen, held = split_class_registry()
    spec = grid if grid is not None else GridSpec.default()
    seen_cfg = SceneConfig(classes=seen)
    held_cfg = SceneConfig(classes=held)
    train = make_dataset(seed, train_count, seen_cfg, spec, descriptions_per_view)
    novel_room = make_dataset(
        seed + 1_000_003, eval_count, seen_cfg, spec, descriptions_per_view
    )
    novel_class = make_dataset(
        seed + 2_000_003, eval_count, held_cfg, spec, descriptions_per_view
    )
    novel_synonym = _rewrite_to_synonyms(novel_room)
    return Splits(
        train=train,
        novel_room=novel_room,
        novel_synonym=novel_synonym,
        novel_class=novel_class,
        seen_classes=[c.name for c in seen],
        held_out_classes=[c.name for c in held],
    )


# ---------------------------------------------------------------------------
# completion metrics


@dataclass
class OvsscReport:
    split: str
    per_class_iou: dict[str, float]
    mean_iou: float
    classes: list[str]
    confusion: np.ndarray  # (K+1, K+1); row = truth, col = prediction, last = empty
    view_count: int


def eval_ovssc(
    records: list[ViewRecord],
    model: OccupancyModel,
    provider: RelevancyProvider,
    eval_spec: GridSpec,
    grid: GridSpec | None = None,
    empty_threshold: float = DEFAULT_EMPTY_THRESHOLD,
    split: str = "",
) -> OvsscReport:
    """Per-class IoU micro-accumulated over views, macro-averaged over the
    split's class set; classes absent from every view are skipped."""
    if not records:
        raise ContractViolationError("eval_ovssc needs at least one view")
    class_set = sorted({c for r in records for c in r.view.class_labels()})
    class_index = {c: i for i, c in enumerate(class_set)}
    k = len(class_set)
    inter = np.zeros(k)
    union = np.zeros(k)
    confusion = np.zeros((k + 1, k + 1), dtype=np.int64)
    empty_row = k

    for record in records:
        view = record.view
        classes = view.class_labels()
        labels = [view.task_label(c) for c in classes]
        result = ovssc_infer(
            view, labels, provider, model, eval_spec, grid=grid,
            empty_threshold=empty_threshold,
        )
        gt_grids = class_occupancy_grids(view, eval_spec)
        # ground-truth semantic labels in the split-wide index space
        gt_stack = np.stack([gt_grids[c] for c in classes])
        gt_any = gt_stack.any(axis=0)
        gt_label = np.where(gt_any, np.argmax(gt_stack, axis=0), EMPTY)
        pred_label = result.semantic.data
        # score against argmax-resolved truth so voxels claimed by two
        # classes (probe overlap) count for exactly one of them
        for ci, c in enumerate(classes):
            gi = class_index[c]
            pred = pred_label == ci
            truth = gt_label == ci
            inter[gi] += np.count_nonzero(pred & truth)
            union[gi] += np.count_nonzero(pred | truth)
        either = (gt_label != EMPTY) | (pred_label != EMPTY)
        to_global = np.array([class_index[c] for c in classes] + [empty_row])
        gt_flat = to_global[gt_label[either]]
        pred_flat = to_global[pred_label[either]]
        np.add.at(confusion, (gt_flat, pred_flat), 1)

    per_class = {}
    for c, gi in class_index.items():
        if union[gi] > 0:
            per_class[c] = float(inter[gi] / union[gi])
    if not per_class:
        raise ContractViolationError("no class present in any evaluated view")
    mean_iou = float(np.mean(list(per_class.values())))
    return OvsscReport(split, per_class, mean_iou, class_set, confusion, len(records))


# ---------------------------------------------------------------------------
# localization metrics


@dataclass
class VoolDescriptionResult:
    view_id: str
    description: Description
    iou: float
    hidden_target: bool
    opposite_iou: float | None  # prediction vs the mirrored relation's truth


@dataclass
class VoolReport:
    split: str
    per_relation_iou: dict[str, float]
    mean_iou: float
    hidden_mean_iou: float | None
    left_right_cross_iou: float | None
    details: list[VoolDescriptionResult] = field(default_factory=list)


_MIRROR = {
    SpatialRelation.LEFT_OF: SpatialRelation.RIGHT_OF,
    SpatialRelation.RIGHT_OF: SpatialRelation.LEFT_OF,
}


def eval_vool(
    records: list[ViewRecord],
    model: OccupancyModel,
    provider: RelevancyProvider,
    eval_spec: GridSpec,
    grid: GridSpec | None = None,
    empty_threshold: float = DEFAULT_EMPTY_THRESHOLD,
    split: str = "",
) -> VoolReport:
    """Per-relation IoU micro-accumulated over descriptions; the overall mean
    averages the relations that occur.  Left/right predictions are also
    scored against the mirrored relation's ground truth to measure
    directional confusion."""
    if not records:
        raise ContractViolationError("eval_vool needs at least one view")
    centers = eval_spec.voxel_centers()
    rel_inter: dict[str, float] = {}
    rel_union: dict[str, float] = {}
    cross_inter = cross_union = 0.0
    has_cross = False
    hidden_ious: list[float] = []
    details = []

    for record in records:
        view = record.view
        for sample in record.descriptions:
            desc = sample.description
            provider_desc = Description(
                view.task_label(desc.target_label), desc.relation,
                view.task_label(desc.ref_label),
            )
            result = vool_infer(
                view, provider_desc, provider, model, eval_spec, grid=grid,
                empty_threshold=empty_threshold,
            )
            truth = OccupancyGrid(
                eval_spec, sample.positives.reshape(eval_spec.resolution)
            )
            pred = result.occupancy
            key = desc.relation.value
            rel_inter[key] = rel_inter.get(key, 0.0) + np.count_nonzero(
                pred.data & truth.data
            )
            rel_union[key] = rel_union.get(key, 0.0) + np.count_nonzero(
                pred.data | truth.data
            )
            iou = voxel_iou(pred, truth)
            opposite_iou = None
            if desc.relation in _MIRROR:
                mirrored = Description(
                    desc.target_label, _MIRROR[desc.relation], desc.ref_label
                )
                opp_truth = label_spatial_relation(
                    view.scene, view.pose, mirrored, centers
                ).reshape(eval_spec.resolution)
                cross_inter += np.count_nonzero(pred.data & opp_truth)
                cross_union += np.count_nonzero(pred.data | opp_truth)
                has_cross = True
                opp_u = np.count_nonzero(pred.data | opp_truth)
                opposite_iou = (
                    np.count_nonzero(pred.data & opp_truth) / opp_u if opp_u else 1.0
                )
            if sample.hidden_target:
                hidden_ious.append(iou)
            details.append(
                VoolDescriptionResult(view.view_id, desc, iou, sample.hidden_target, opposite_iou)
            )

    per_relation = {
        rel: float(rel_inter[rel] / rel_union[rel])
        for rel in rel_inter
        if rel_union[rel] > 0
    }
    if not per_relation:
        raise ContractViolationError("no description evaluated")
    mean_iou = float(np.mean(list(per_relation.values())))
    hidden_mean = float(np.mean(hidden_ious)) if hidden_ious else None
    cross = float(cross_inter / cross_union) if has_cross and cross_union else None
    return VoolReport(split, per_relation, mean_iou, hidden_mean, cross, details)


# ---------------------------------------------------------------------------
# report output


def ovssc_report_json(report: OvsscReport) -> dict:
    return {
        "task": "ovssc",
        "split": report.split,
        "mean_iou": report.mean_iou,
        "per_class_iou": report.per_class_iou,
        "classes": report.classes,
        "confusion": report.confusion.tolist(),
        "view_count": report.view_count,
    }


def vool_report_json(report: VoolReport) -> dict:
    return {
        "task": "vool",
        "split": report.split,
        "mean_iou": report.mean_iou,
        "per_relation_iou": report.per_relation_iou,
        "hidden_mean_iou": report.hidden_mean_iou,
        "left_right_cross_iou": report.left_right_cross_iou,
        "descriptions": [
            {
                "view_id": d.view_id,
                "target": d.description.target_label,
                "relation": d.description.relation.value,
                "ref": d.description.ref_label,
                "iou": d.iou,
                "hidden_target": d.hidden_target,
                "opposite_iou": d.opposite_iou,
            }
            for d in report.details
        ],
    }


def write_report(out_dir, report) -> None:
    """report.json plus a flat CSV of the per-group IoUs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(report, OvsscReport):
        payload = ovssc_report_json(report)
        rows = [("class", "iou")] + sorted(report.per_class_iou.items())
    elif isinstance(report, VoolReport):
        payload = vool_report_json(report)
        rows = [("relation", "iou")] + sorted(report.per_relation_iou.items())
    else:
        raise ConfigError(f"unknown report type {type(report).__name__}")
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerows(rows)
