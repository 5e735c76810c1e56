import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from semscene.errors import ContractViolationError, FormatError
from semscene.geometry import PointCloud
from semscene.voxel import (
    EMPTY,
    FeatureVolume,
    GridSpec,
    OccupancyGrid,
    read_volume,
    scatter_max,
    semantic_argmax,
    trilinear_sample,
    trilinear_sample_tensor,
    voxel_iou,
    write_volume,
)

from .oracles import argmax_oracle, iou_oracle, scatter_max_oracle, trilinear_oracle


def random_spec(rng):
    lower = rng.uniform(-2, 0, size=3)
    upper = lower + rng.uniform(0.5, 3, size=3)
    res = tuple(int(r) for r in rng.integers(2, 9, size=3))
    return GridSpec(lower, upper, res)


class TestGridSpec:
    def test_default_bounds(self):
        spec = GridSpec.default()
        np.testing.assert_allclose(spec.lower, [-1.0, -1.0, -0.1])
        np.testing.assert_allclose(spec.upper, [1.0, 1.0, 1.9])
        assert spec.resolution == (32, 32, 32)
        # [DERIVED] (upper - lower) / 32 for the default bounds
        np.testing.assert_allclose(spec.voxel_size, [0.0625, 0.0625, 0.0625])

    def test_first_voxel_center(self):
        spec = GridSpec.default()
        # [DERIVED] lower + 0.5 * edge = (-1, -1, -0.1) + 0.03125
        np.testing.assert_allclose(
            spec.voxel_centers()[0], [-0.96875, -0.96875, -0.06875]
        )

    def test_centers_are_x_major(self):
        spec = GridSpec(np.zeros(3), np.ones(3), (2, 2, 2))
        centers = spec.voxel_centers()
        # z varies fastest, x slowest
        assert centers[0][2] < centers[1][2]
        assert centers[0][0] < centers[4][0]

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ContractViolationError):
            GridSpec(np.ones(3), np.zeros(3), (4, 4, 4))


class TestScatterMax:
    def test_matches_oracle_randomized(self, rng):
        for _ in range(100):
            spec = random_spec(rng)
            n = int(rng.integers(0, 60))
            pts = rng.uniform(spec.lower, spec.upper - 1e-9, size=(n, 3))
            feats = rng.uniform(-1, 2, size=(n, int(rng.integers(1, 4))))
            got = scatter_max(PointCloud(pts, feats), spec)
            want = scatter_max_oracle(pts, feats, spec)
            np.testing.assert_array_equal(got.data, want)

    def test_empty_cloud_gives_zero_volume(self):
        spec = GridSpec.default(8)
        vol = scatter_max(PointCloud.empty(), spec)
        assert not vol.data.any()

    def test_out_of_bounds_rejected(self):
        spec = GridSpec.default(8)
        pc = PointCloud(np.array([[5.0, 0.0, 0.0]]), np.array([1.0]))
        with pytest.raises(ContractViolationError):
            scatter_max(pc, spec)

    def test_max_wins_within_voxel(self):
        spec = GridSpec(np.zeros(3), np.ones(3), (1, 1, 1))
        pc = PointCloud(
            np.array([[0.5, 0.5, 0.5], [0.2, 0.2, 0.2]]), np.array([0.3, 0.9])
        )
        vol = scatter_max(pc, spec)
        assert vol.data[0, 0, 0, 0] == np.float32(0.9)


class TestTrilinearSample:
    def test_matches_oracle_randomized(self, rng):
        for _ in range(100):
            spec = random_spec(rng)
            c = int(rng.integers(1, 3))
            vol = FeatureVolume(
                spec, rng.normal(size=(c,) + spec.resolution).astype(np.float32)
            )
            q = rng.uniform(spec.lower - 0.2, spec.upper + 0.2, size=(20, 3))
            got = trilinear_sample(vol, q)
            want = trilinear_oracle(vol.data, q, spec)
            np.testing.assert_allclose(got, want, atol=1e-6)

    def test_exact_at_voxel_centers(self, rng):
        spec = GridSpec.default(4)
        vol = FeatureVolume(spec, rng.normal(size=(1, 4, 4, 4)).astype(np.float32))
        got = trilinear_sample(vol, spec.voxel_centers())
        np.testing.assert_allclose(got[:, 0], vol.data[0].reshape(-1), atol=1e-6)

    def test_zero_outside_lattice(self):
        spec = GridSpec.default(4)
        vol = FeatureVolume(spec, np.ones((1, 4, 4, 4), dtype=np.float32))
        far = np.array([[spec.lower[0] - 1.0, 0.0, 0.0]])
        np.testing.assert_allclose(trilinear_sample(vol, far), [[0.0]])

    def test_gradient_flows_through_volume(self):
        spec = GridSpec.default(4)
        vol = torch.randn(2, 4, 4, 4, dtype=torch.float64, requires_grad=True)
        q = torch.tensor([[0.0, 0.0, 0.5]], dtype=torch.float64)
        out = trilinear_sample_tensor(vol, q, spec)
        out.sum().backward()
        assert vol.grad is not None and torch.any(vol.grad != 0)


class TestVoxelIou:
    def test_matches_oracle_randomized(self, rng):
        spec = GridSpec.default(4)
        for _ in range(100):
            a = OccupancyGrid(spec, rng.uniform(size=spec.resolution) < 0.4)
            b = OccupancyGrid(spec, rng.uniform(size=spec.resolution) < 0.4)
            assert voxel_iou(a, b) == pytest.approx(iou_oracle(a.data, b.data))

    def test_empty_vs_empty_is_one(self):
        spec = GridSpec.default(2)
        empty = OccupancyGrid(spec, np.zeros(spec.resolution, dtype=bool))
        assert voxel_iou(empty, empty) == 1.0

    def test_spec_mismatch_rejected(self):
        a = OccupancyGrid(GridSpec.default(2), np.zeros((2, 2, 2), dtype=bool))
        b = OccupancyGrid(GridSpec.default(4), np.zeros((4, 4, 4), dtype=bool))
        with pytest.raises(ContractViolationError):
            voxel_iou(a, b)


class TestSemanticArgmax:
    def test_matches_oracle_randomized(self, rng):
        spec = GridSpec.default(4)
        for _ in range(100):
            k = int(rng.integers(1, 5))
            stack = rng.uniform(size=(k,) + spec.resolution).astype(np.float32)
            c = float(rng.uniform(0.2, 0.8))
            vols = [FeatureVolume(spec, stack[i : i + 1]) for i in range(k)]
            got = semantic_argmax(vols, c)
            want = argmax_oracle(np.stack([v.data[0] for v in vols]), c)
            np.testing.assert_array_equal(got.data, want)

    def test_all_below_threshold_is_empty(self):
        spec = GridSpec.default(2)
        vols = [FeatureVolume(spec, np.full((1, 2, 2, 2), 0.1, dtype=np.float32))]
        out = semantic_argmax(vols, 0.5)
        assert np.all(out.data == EMPTY)

    def test_tie_breaks_to_lowest_index(self):
        spec = GridSpec.default(2)
        same = np.full((1, 2, 2, 2), 0.8, dtype=np.float32)
        out = semantic_argmax([FeatureVolume(spec, same), FeatureVolume(spec, same)], 0.5)
        assert np.all(out.data == 0)

    def test_rejects_probabilities_outside_unit_interval(self):
        spec = GridSpec.default(2)
        bad = FeatureVolume(spec, np.full((1, 2, 2, 2), 1.5, dtype=np.float32))
        with pytest.raises(ContractViolationError):
            semantic_argmax([bad], 0.5)


class TestVolumeFile:
    def test_round_trip(self, tmp_path, rng):
        spec = GridSpec.default(4)
        vol = FeatureVolume(spec, rng.normal(size=(3, 4, 4, 4)).astype(np.float32))
        path = tmp_path / "v.fvol"
        write_volume(path, vol)
        back = read_volume(path)
        assert back.spec.resolution == spec.resolution
        np.testing.assert_array_equal(back.data, vol.data)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fvol"
        path.write_bytes(b"NOPE" + b"\0" * 60)
        with pytest.raises(FormatError) as exc:
            read_volume(path)
        assert exc.value.offset == 0

    def test_payload_size_mismatch(self, tmp_path, rng):
        spec = GridSpec.default(2)
        path = tmp_path / "v.fvol"
        write_volume(path, FeatureVolume(spec, rng.normal(size=(1, 2, 2, 2)).astype(np.float32)))
        path.write_bytes(path.read_bytes() + b"\0\0\0\0")
        with pytest.raises(FormatError):
            read_volume(path)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_property_scatter_then_sample_center_recovers_max(seed):
    """A voxel's center samples exactly the max feature scattered into it."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(np.zeros(3), np.ones(3), (3, 3, 3))
    pts = rng.uniform(0, 1 - 1e-9, size=(20, 3))
    feats = rng.uniform(0.1, 1.0, size=20)
    vol = scatter_max(PointCloud(pts, feats), spec)
    idx = spec.point_indices(pts)
    target = tuple(idx[0])
    center = spec.lower + (np.array(target) + 0.5) * spec.voxel_size
    got = trilinear_sample(vol, center[None])[0, 0]
    assert got == pytest.approx(vol.data[(0, *target)], abs=1e-6)
