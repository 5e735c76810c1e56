"""Batch sampling, losses, optimizer schedule and the two training loops.

Everything that draws randomness takes an explicit numpy Generator; its state
is serialized into checkpoints so a resumed run reproduces the uninterrupted
trajectory bit for bit.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .data import ViewRecord, default_probe_radius
from .errors import ContractViolationError
from .geometry import AugmentConfig, PointCloud, apply_transform, filter_bounds, sample_augmentation
from .network import (
    OccupancyModel,
    UNetConfig,
    concat_features,
    model_to_param_arrays,
    load_params_into_model,
    save_checkpoint,
    load_checkpoint,
    spatial_similarity,
)
from .relevancy import RelevancyProvider, project_relevancy
from .scene import label_spatial_relation, occupancy_query
from .voxel import GridSpec, _scatter_max_array, trilinear_sample_tensor


@dataclass(frozen=True)
class LrSchedule:
    lr_max: float = 5e-4
    lr_min: float = 0.0
    t0: int = 30  # steps in the first restart period
    mult: int = 2

    def __post_init__(self):
        if self.lr_max <= 0 or self.t0 < 1 or self.mult < 1:
            raise ContractViolationError("invalid learning-rate schedule")


def lr_at(step: int, schedule: LrSchedule) -> float:
    """Cosine annealing with warm restarts; resets to lr_max at each restart,
    period growing by the restart multiplier."""
    if step < 0:
        raise ContractViolationError("step must be >= 0")
    t, period = step, schedule.t0
    while t >= period:
        t -= period
        period *= schedule.mult
    return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (
        1.0 + math.cos(math.pi * t / period)
    )


def bce_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy over probabilities; returns the loss and its
    exact gradient with respect to the logits."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=bool).reshape(-1).astype(np.float64)
    if pred.size == 0:
        raise ContractViolationError("bce_loss needs at least one prediction")
    if np.any(pred <= 0) or np.any(pred >= 1):
        raise ContractViolationError("predictions must lie strictly in (0, 1)")
    loss = float(np.mean(-(target * np.log(pred) + (1 - target) * np.log(1 - pred))))
    grad_logits = (pred - target) / pred.size
    return loss, grad_logits


# ---------------------------------------------------------------------------
# optimizer


class AdamW:
    """Decoupled-weight-decay Adam with fully serializable state."""

    def __init__(
        self,
        named_params: list[tuple[str, torch.nn.Parameter]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
    ):
        self.named_params = named_params
        self.beta1, self.beta2 = beta1, beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: torch.zeros_like(p) for name, p in named_params}
        self.v = {name: torch.zeros_like(p) for name, p in named_params}

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.grad = None

    @torch.no_grad()
    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                g = torch.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            update = (m / bc1) / ((v / bc2).sqrt() + self.eps)
            p.add_(update + self.weight_decay * p, alpha=-lr)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"m.{name}"] = self.m[name].numpy().astype(np.float32)
            out[f"v.{name}"] = self.v[name].numpy().astype(np.float32)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for name in self.m:
            self.m[name] = torch.from_numpy(arrays[f"m.{name}"].astype(np.float32)).clone()
            self.v[name] = torch.from_numpy(arrays[f"v.{name}"].astype(np.float32)).clone()


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    task: str = "ovssc"  # ovssc | vool
    epochs: int = 20
    batch_scenes: int = 2  # B
    labels_per_scene: int = 3  # K: classes (ovssc) or descriptions (vool)
    points_per_cloud: int = 4096  # N
    query_points: int = 8192  # M
    grid_resolution: int = 32
    unet_levels: int = 3
    unet_base_channels: int = 16
    feature_dim: int = 16  # D
    lr_max: float = 5e-4
    lr_min: float = 0.0
    t0_epochs: int = 1
    restart_mult: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-2
    seed: int = 0
    augment_translation: float = 0.1
    augment_yaw: float = 0.0  # full circle breaks viewer-centric relations
    augment_scale: tuple[float, float] = (0.95, 1.05)
    pos_weight: float = 1.0
    checkpoint_every_epochs: int = 0  # 0 = final only

    def __post_init__(self):
        if self.task not in ("ovssc", "vool"):
            raise ContractViolationError(f"unknown task {self.task!r}")
        for name in ("epochs", "batch_scenes", "labels_per_scene", "points_per_cloud", "query_points"):
            if getattr(self, name) < 1:
                raise ContractViolationError(f"{name} must be >= 1")
        if self.lr_max <= 0:
            raise ContractViolationError("lr_max must be positive")

    def grid(self) -> GridSpec:
        return GridSpec.default(self.grid_resolution)

    def unet(self) -> UNetConfig:
        return UNetConfig(
            levels=self.unet_levels,
            base_channels=self.unet_base_channels,
            in_channels=1,
            out_channels=self.feature_dim,
        )

    def augment(self) -> AugmentConfig:
        t = self.augment_translation
        return AugmentConfig(
            translation=(t, t, t),
            yaw_max=self.augment_yaw,
            scale_min=self.augment_scale[0],
            scale_max=self.augment_scale[1],
        )

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(data: dict) -> "TrainConfig":
        data = dict(data)
        if "augment_scale" in data:
            data["augment_scale"] = tuple(data["augment_scale"])
        return TrainConfig(**data)


# ---------------------------------------------------------------------------
# batch sampling


@dataclass
class SceneSample:
    record: ViewRecord
    label_indices: list[int]  # into class list (ovssc) or descriptions (vool)
    clouds: list[PointCloud]  # one subsampled cloud per needed relevancy label
    cloud_labels: list[str]
    queries: np.ndarray  # (M', 3) transformed, in grid bounds
    query_mask: np.ndarray  # which original queries survived the transform
    queries_orig: np.ndarray  # (M', 3) matching pre-transform positions
    near_surface_count: int


@dataclass
class BatchSample:
    scenes: list[SceneSample]


class CloudCache:
    """Projected relevancy clouds per (view, label); provider calls are
    deterministic, so caching never changes results."""

    def __init__(self, provider: RelevancyProvider):
        self.provider = provider
        self._cache: dict[tuple[str, str], PointCloud] = {}

    def cloud(self, view, label: str) -> PointCloud:
        key = (view.view_id, label)
        if key not in self._cache:
            (rmap,) = self.provider.relevancy(view, [label])
            self._cache[key] = project_relevancy(
                rmap, view.depth, view.intrinsics, view.pose
            )
        return self._cache[key]


def _subsample_cloud(cloud: PointCloud, n: int, rng: np.random.Generator) -> PointCloud:
    if len(cloud) == 0:
        return cloud
    if len(cloud) <= n:
        idx = rng.integers(0, len(cloud), size=n) if len(cloud) < n else np.arange(n)
    else:
        idx = rng.choice(len(cloud), size=n, replace=False)
    return PointCloud(cloud.positions[idx], cloud.features[idx])


def _near_surface_sources(record: ViewRecord, pad: float) -> list[tuple[np.ndarray, np.ndarray]]:
    sources = []
    for obj in record.view.scene.visible_objects():
        lo, hi = obj.aabb()
        sources.append((lo - pad, hi + pad))
        for region in (obj.on_top_region, obj.inside_region):
            if region is not None:
                sources.append((region.lower - pad, region.upper + pad))
    return sources


def _sample_queries(
    record: ViewRecord, spec: GridSpec, m: int, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Half near-surface (inflated object/receptacle boxes), half uniform."""
    n_near = m // 2
    n_uniform = m - n_near
    pad = 2.0 * float(np.min(spec.voxel_size))
    sources = _near_surface_sources(record, pad)
    pts = []
    if sources and n_near:
        picks = rng.integers(0, len(sources), size=n_near)
        for i in picks:
            lo, hi = sources[i]
            pts.append(rng.uniform(lo, hi))
    near = np.array(pts) if pts else np.zeros((0, 3))
    uniform = rng.uniform(spec.lower, spec.upper, size=(n_uniform, 3))
    near = np.clip(near, spec.lower, spec.upper - 1e-9)
    return np.concatenate([near, uniform], axis=0), len(near)


def sample_batch(
    dataset: list[ViewRecord],
    cfg: TrainConfig,
    rng: np.random.Generator,
    cache: CloudCache,
) -> BatchSample:
    """Draw B scenes, K labels/descriptions each, N cloud points and M query
    points, sharing one augmentation transform per scene across the input
    cloud and the query points."""
    if not dataset:
        raise ContractViolationError("dataset must be nonempty")
    spec = cfg.grid()
    scene_ids = rng.choice(
        len(dataset), size=cfg.batch_scenes, replace=len(dataset) < cfg.batch_scenes
    )
    scenes = []
    for si in scene_ids:
        record = dataset[int(si)]
        view = record.view
        if cfg.task == "ovssc":
            classes = view.class_labels()
            k_idx = rng.choice(
                len(classes), size=cfg.labels_per_scene, replace=len(classes) < cfg.labels_per_scene
            ).tolist()
            labels = [view.task_label(classes[i]) for i in k_idx]
        else:
            n_desc = len(record.descriptions)
            if n_desc == 0:
                raise ContractViolationError(f"view {view.view_id} has no descriptions")
            k_idx = rng.choice(
                n_desc, size=cfg.labels_per_scene, replace=n_desc < cfg.labels_per_scene
            ).tolist()
            labels = []
            for i in k_idx:
                d = record.descriptions[i].description
                labels.extend(
                    [view.task_label(d.target_label), view.task_label(d.ref_label)]
                )

        transform = sample_augmentation(rng, cfg.augment())
        clouds = []
        for label in labels:
            cloud = _subsample_cloud(cache.cloud(view, label), cfg.points_per_cloud, rng)
            cloud = filter_bounds(apply_transform(cloud, transform), spec)
            clouds.append(cloud)

        q_orig, n_near = _sample_queries(record, spec, cfg.query_points, rng)
        q_t = transform.apply(q_orig)
        inside = np.all((q_t >= spec.lower) & (q_t < spec.upper), axis=1)
        scenes.append(
            SceneSample(
                record=record,
                label_indices=k_idx,
                clouds=clouds,
                cloud_labels=labels,
                queries=q_t[inside],
                query_mask=inside,
                queries_orig=q_orig[inside],
                near_surface_count=n_near,
            )
        )
    return BatchSample(scenes)


# ---------------------------------------------------------------------------
# loss computation


def _scatter_clouds(clouds: list[PointCloud], spec: GridSpec) -> torch.Tensor:
    vols = [
        _scatter_max_array(c.positions, c.features, spec) for c in clouds
    ]
    return torch.from_numpy(np.stack(vols))


def _bce_with_logits(logits: torch.Tensor, target: torch.Tensor, pos_weight: float) -> torch.Tensor:
    if pos_weight != 1.0:
        weight = torch.where(target > 0.5, torch.full_like(target, pos_weight), torch.ones_like(target))
        return torch.nn.functional.binary_cross_entropy_with_logits(
            logits, target, weight=weight
        )
    return torch.nn.functional.binary_cross_entropy_with_logits(logits, target)


def ovssc_batch_loss(
    batch: BatchSample, model: OccupancyModel, cfg: TrainConfig, probe_radius: float
) -> torch.Tensor:
    spec = cfg.grid()
    all_clouds = [c for s in batch.scenes for c in s.clouds]
    rvox = _scatter_clouds(all_clouds, spec)
    z = model.encode_tensor(rvox)
    losses = []
    idx = 0
    for s in batch.scenes:
        classes = s.record.view.class_labels()
        queries = torch.from_numpy(s.queries.astype(np.float32))
        for ki in s.label_indices:
            feats = trilinear_sample_tensor(z[idx], queries, spec)
            logits = model.decoder.logits(feats)
            gt = occupancy_query(
                s.record.view.scene, classes[ki], s.queries_orig, probe_radius
            )
            target = torch.from_numpy(gt.astype(np.float32))
            losses.append(_bce_with_logits(logits, target, cfg.pos_weight))
            idx += 1
    return torch.stack(losses).mean()


def vool_batch_loss(
    batch: BatchSample, model: OccupancyModel, cfg: TrainConfig
) -> torch.Tensor:
    spec = cfg.grid()
    all_clouds = [c for s in batch.scenes for c in s.clouds]
    rvox = _scatter_clouds(all_clouds, spec)
    z = model.encode_tensor(rvox)
    losses = []
    idx = 0
    for s in batch.scenes:
        queries = torch.from_numpy(s.queries.astype(np.float32))
        for ki in s.label_indices:
            sample = s.record.descriptions[ki]
            feat_t = trilinear_sample_tensor(z[idx], queries, spec)
            feat_r = trilinear_sample_tensor(z[idx + 1], queries, spec)
            idx += 2
            logits = spatial_similarity(
                concat_features(feat_t, feat_r), sample.description.relation, model.spatial
            )
            gt = label_spatial_relation(
                s.record.view.scene,
                s.record.view.pose,
                sample.description,
                s.queries_orig,
            )
            target = torch.from_numpy(gt.astype(np.float32))
            losses.append(_bce_with_logits(logits, target, cfg.pos_weight))
    return torch.stack(losses).mean()


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    model: OccupancyModel
    metrics: list[dict]
    step: int
    config: TrainConfig


def _checkpoint_config(cfg: TrainConfig) -> dict:
    return {
        "unet": asdict(cfg.unet()),
        "with_spatial": cfg.task == "vool",
        "task": cfg.task,
        "train": cfg.to_json(),
    }


def _rng_blob(rng: np.random.Generator) -> bytes:
    return json.dumps({"numpy": rng.bit_generator.state}).encode("utf-8")


def _restore_rng(blob: bytes) -> np.random.Generator:
    state = json.loads(blob.decode("utf-8"))["numpy"]
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng


def save_train_checkpoint(
    path, model: OccupancyModel, opt: AdamW, step: int, cfg: TrainConfig, rng
) -> None:
    save_checkpoint(
        path,
        config=_checkpoint_config(cfg),
        params=model_to_param_arrays(model),
        opt_state=opt.state_arrays(),
        step=step,
        rng_blob=_rng_blob(rng),
    )


def _write_metrics(out_dir: Path | None, metrics: list[dict]) -> None:
    if out_dir is None:
        return
    with open(out_dir / "metrics.ndjson", "w", encoding="utf-8") as f:
        for entry in metrics:
            f.write(json.dumps(entry) + "\n")


def train(
    dataset: list[ViewRecord],
    cfg: TrainConfig,
    provider: RelevancyProvider,
    out_dir=None,
    resume=None,
) -> TrainResult:
    """Seed-deterministic training loop shared by both tasks."""
    if not dataset:
        raise ContractViolationError("dataset must be nonempty")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    spec = cfg.grid()
    cfg.unet().check_resolution(spec.resolution)
    probe_radius = default_probe_radius(spec)
    model = OccupancyModel.create(cfg.unet(), with_spatial=cfg.task == "vool", seed=cfg.seed)
    opt = AdamW(
        model.named_parameters(),
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
    )
    rng = np.random.default_rng(cfg.seed)
    start_step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        load_params_into_model(model, ckpt.params)
        opt.load_state_arrays(ckpt.opt_state, ckpt.step)
        rng = _restore_rng(ckpt.rng_blob)
        start_step = ckpt.step

    steps_per_epoch = max(1, len(dataset) // cfg.batch_scenes)
    total_steps = steps_per_epoch * cfg.epochs
    schedule = LrSchedule(
        lr_max=cfg.lr_max,
        lr_min=cfg.lr_min,
        t0=steps_per_epoch * cfg.t0_epochs,
        mult=cfg.restart_mult,
    )
    cache = CloudCache(provider)
    metrics: list[dict] = []

    for step in range(start_step, total_steps):
        t_start = time.monotonic()
        lr = lr_at(step, schedule)
        batch = sample_batch(dataset, cfg, rng, cache)
        if cfg.task == "ovssc":
            loss = ovssc_batch_loss(batch, model, cfg, probe_radius)
        else:
            loss = vool_batch_loss(batch, model, cfg)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at step {step} (lr {lr:.3e}, "
                f"views {[s.record.view.view_id for s in batch.scenes]})"
            )
        opt.zero_grad()
        loss.backward()
        opt.step(lr)
        metrics.append(
            {
                "step": step,
                "lr": lr,
                "loss": float(loss.detach()),
                "wall_ms": (time.monotonic() - t_start) * 1e3,
            }
        )
        epoch_done = (step + 1) % steps_per_epoch == 0
        if (
            out_path is not None
            and cfg.checkpoint_every_epochs
            and epoch_done
            and ((step + 1) // steps_per_epoch) % cfg.checkpoint_every_epochs == 0
        ):
            save_train_checkpoint(
                out_path / f"checkpoint_{step + 1:07d}.sabs", model, opt, step + 1, cfg, rng
            )

    if out_path is not None:
        save_train_checkpoint(out_path / "checkpoint.sabs", model, opt, total_steps, cfg, rng)
        _write_metrics(out_path, metrics)
    return TrainResult(model.eval_mode(), metrics, total_steps, cfg)


def train_ovssc(dataset, cfg: TrainConfig, provider, out_dir=None, resume=None) -> TrainResult:
    if cfg.task != "ovssc":
        raise ContractViolationError("config task must be 'ovssc'")
    return train(dataset, cfg, provider, out_dir=out_dir, resume=resume)


def train_vool(dataset, cfg: TrainConfig, provider, out_dir=None, resume=None) -> TrainResult:
    if cfg.task != "vool":
        raise ContractViolationError("config task must be 'vool'")
    return train(dataset, cfg, provider, out_dir=out_dir, resume=resume)
