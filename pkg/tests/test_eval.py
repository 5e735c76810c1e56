import json

import numpy as np
import pytest

from semscene.errors import ContractViolationError
from semscene.eval import (
    eval_ovssc,
    eval_vool,
    make_splits,
    split_class_registry,
    write_report,
)
from semscene.network import OccupancyModel, UNetConfig
from semscene.scene import scene_to_json, synonym_table
from semscene.voxel import GridSpec


@pytest.fixture(scope="module")
def tiny_model():
    cfg = UNetConfig(levels=2, base_channels=4, in_channels=1, out_channels=4)
    return OccupancyModel.create(cfg, with_spatial=True, seed=0).eval_mode()


@pytest.fixture(scope="module")
def spec8():
    return GridSpec.default(8)


@pytest.fixture(scope="module")
def splits(spec8):
    return make_splits(21, train_count=2, eval_count=2, grid=spec8, descriptions_per_view=3)


class TestSplits:
    def test_class_halves_share_shape_families(self):
        seen, held = split_class_registry()
        assert sorted(c.shape for c in seen) == sorted(c.shape for c in held)
        assert not {c.name for c in seen} & {c.name for c in held}

    def test_train_uses_only_seen_classes(self, splits):
        seen = set(splits.seen_classes)
        for record in splits.train + splits.novel_room:
            for obj in record.view.scene.objects:
                assert obj.class_label in seen

    def test_novel_class_uses_only_held_out(self, splits):
        held = set(splits.held_out_classes)
        for record in splits.novel_class:
            for obj in record.view.scene.objects:
                assert obj.class_label in held

    def test_rooms_disjoint_across_splits(self, splits):
        train_json = {json.dumps(scene_to_json(r.view.scene)) for r in splits.train}
        eval_json = {json.dumps(scene_to_json(r.view.scene)) for r in splits.novel_room}
        assert not train_json & eval_json

    def test_synonym_split_shares_scenes_but_rewrites_labels(self, splits):
        table = synonym_table()
        for room, syn in zip(splits.novel_room, splits.novel_synonym):
            assert scene_to_json(room.view.scene) == scene_to_json(syn.view.scene)
            for label in syn.view.class_labels():
                assert syn.view.task_label(label) == table[label]
                assert syn.view.task_label(label) != label


class TestEvalOvssc:
    def test_report_structure(self, splits, tiny_model, provider, spec8):
        report = eval_ovssc(splits.novel_room, tiny_model, provider, spec8, split="novel_room")
        assert 0.0 <= report.mean_iou <= 1.0
        assert report.view_count == len(splits.novel_room)
        k = len(report.classes)
        assert report.confusion.shape == (k + 1, k + 1)
        for iou in report.per_class_iou.values():
            assert 0.0 <= iou <= 1.0

    def test_mean_recomputation_matches(self, splits, tiny_model, provider, spec8):
        report = eval_ovssc(splits.novel_room, tiny_model, provider, spec8)
        assert report.mean_iou == pytest.approx(
            np.mean(list(report.per_class_iou.values()))
        )

    def test_perfect_predictor_scores_one(self, splits, provider, spec8, monkeypatch):
        """Feeding ground truth through the metric yields IoU 1 everywhere."""
        from semscene import eval as eval_mod
        from semscene.data import class_occupancy_grids
        from semscene.voxel import EMPTY, FeatureVolume, SemanticGrid

        def fake_infer(view, labels, provider_, model, eval_spec, grid=None, empty_threshold=0.5):
            classes = view.class_labels()
            grids = class_occupancy_grids(view, eval_spec)
            stack = np.stack([grids[c] for c in classes])
            label_idx = np.where(stack.any(axis=0), np.argmax(stack, axis=0), EMPTY)
            per_class = [
                FeatureVolume(eval_spec, g[None].astype(np.float32)) for g in stack
            ]
            semantic = SemanticGrid(eval_spec, label_idx, num_classes=len(classes))

            class R:
                pass

            r = R()
            r.labels, r.per_class_prob, r.semantic = list(labels), per_class, semantic
            return r

        monkeypatch.setattr(eval_mod, "ovssc_infer", fake_infer)
        report = eval_mod.eval_ovssc(splits.novel_room, None, provider, spec8)
        assert report.mean_iou == pytest.approx(1.0)
        # a perfect predictor's confusion matrix is diagonal
        off_diag = report.confusion - np.diag(np.diag(report.confusion))
        assert off_diag.sum() == 0

    def test_empty_records_rejected(self, tiny_model, provider, spec8):
        with pytest.raises(ContractViolationError):
            eval_ovssc([], tiny_model, provider, spec8)


class TestEvalVool:
    def test_report_structure(self, splits, tiny_model, provider, spec8):
        report = eval_vool(splits.novel_room, tiny_model, provider, spec8, split="novel_room")
        assert 0.0 <= report.mean_iou <= 1.0
        assert set(report.per_relation_iou) <= {
            "behind", "left_of", "right_of", "in_front_of", "on_top_of", "inside"
        }
        assert len(report.details) == sum(len(r.descriptions) for r in splits.novel_room)

    def test_mean_recomputation_matches(self, splits, tiny_model, provider, spec8):
        report = eval_vool(splits.novel_room, tiny_model, provider, spec8)
        assert report.mean_iou == pytest.approx(
            np.mean(list(report.per_relation_iou.values()))
        )

    def test_perfect_predictor_scores_one(self, splits, provider, spec8, monkeypatch):
        from semscene import eval as eval_mod
        from semscene.scene import label_spatial_relation
        from semscene.voxel import FeatureVolume, OccupancyGrid

        centers = spec8.voxel_centers()

        def fake_infer(view, desc, provider_, model, eval_spec, grid=None, empty_threshold=0.5):
            truth = label_spatial_relation(view.scene, view.pose, desc, centers)

            class R:
                pass

            r = R()
            r.description = desc
            r.prob = FeatureVolume(
                eval_spec, truth.reshape((1,) + eval_spec.resolution).astype(np.float32)
            )
            r.occupancy = OccupancyGrid(eval_spec, truth.reshape(eval_spec.resolution))
            return r

        monkeypatch.setattr(eval_mod, "vool_infer", fake_infer)
        report = eval_mod.eval_vool(splits.novel_room, None, provider, spec8)
        assert report.mean_iou == pytest.approx(1.0)
        if report.left_right_cross_iou is not None:
            assert report.left_right_cross_iou == pytest.approx(0.0)


class TestReportFiles:
    def test_ovssc_report_files(self, splits, tiny_model, provider, spec8, tmp_path):
        report = eval_ovssc(splits.novel_room, tiny_model, provider, spec8, split="novel_room")
        write_report(tmp_path, report)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["task"] == "ovssc"
        assert payload["mean_iou"] == pytest.approx(report.mean_iou)
        csv_lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "class,iou"
        assert len(csv_lines) == 1 + len(report.per_class_iou)

    def test_vool_report_files(self, splits, tiny_model, provider, spec8, tmp_path):
        report = eval_vool(splits.novel_room, tiny_model, provider, spec8, split="novel_room")
        write_report(tmp_path, report)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["task"] == "vool"
        assert "left_right_cross_iou" in payload
        csv_lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "relation,iou"
