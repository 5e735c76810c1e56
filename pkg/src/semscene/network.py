"""Trainable components: 3D UNet encoder, 2-layer MLP occupancy decoder, and
the per-relation spatial embedding table, plus the SABS checkpoint format.

All modules run in float32 for training; gradient tests promote them to
float64.  Parameter init is seeded uniform fan-in so runs are reproducible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolationError, FormatError
from .scene import SpatialRelation
from .voxel import FeatureVolume, GridSpec, trilinear_sample_tensor

CHECKPOINT_MAGIC = b"SABS"
CHECKPOINT_VERSION = 1

RELATION_ORDER = tuple(SpatialRelation)

LOGIT_CLAMP = 15.0  # keeps sigmoid strictly inside (0, 1) at float32


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 3
    base_channels: int = 16
    in_channels: int = 1
    out_channels: int = 16

    def __post_init__(self):
        if self.levels < 1 or self.base_channels < 1 or self.in_channels < 1:
            raise ContractViolationError("UNet config values must be >= 1")

    def check_resolution(self, resolution: tuple[int, int, int]) -> None:
        factor = 2 ** (self.levels - 1)
        if any(r % factor for r in resolution):
            raise ContractViolationError(
                f"grid resolution {resolution} must be divisible by {factor}"
            )


def _conv_block(in_ch: int, out_ch: int, groups: int = 4) -> nn.Sequential:
    g = min(groups, out_ch)
    return nn.Sequential(
        nn.Conv3d(in_ch, out_ch, 3, padding=1),
        nn.GroupNorm(g, out_ch),
        nn.ReLU(inplace=True),
        nn.Conv3d(out_ch, out_ch, 3, padding=1),
        nn.GroupNorm(g, out_ch),
        nn.ReLU(inplace=True),
    )


class UNet3D(nn.Module):
    """Resolution-preserving 3D UNet; channels double per level, nearest
    upsampling with skip concatenation."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.base_channels * 2**i for i in range(cfg.levels)]
        self.encoders = nn.ModuleList()
        in_ch = cfg.in_channels
        for w in widths:
            self.encoders.append(_conv_block(in_ch, w))
            in_ch = w
        self.decoders = nn.ModuleList()
        for i in range(cfg.levels - 2, -1, -1):
            self.decoders.append(_conv_block(widths[i + 1] + widths[i], widths[i]))
        self.head = nn.Conv3d(widths[0], cfg.out_channels, 1)
        self.pool = nn.MaxPool3d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 5 or x.shape[1] != self.cfg.in_channels:
            raise ContractViolationError(
                f"expected (B, {self.cfg.in_channels}, rx, ry, rz) input, got "
                f"{tuple(x.shape)}"
            )
        self.cfg.check_resolution(tuple(x.shape[2:]))
        skips = []
        for i, enc in enumerate(self.encoders):
            if i > 0:
                x = self.pool(x)
            x = enc(x)
            skips.append(x)
        for i, dec in enumerate(self.decoders):
            skip = skips[self.cfg.levels - 2 - i]
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)


class DecoderMLP(nn.Module):
    """Per-point occupancy head: D -> D -> 1 with logistic squashing."""

    def __init__(self, feature_dim: int):
        super().__init__()
        self.feature_dim = feature_dim
        self.fc1 = nn.Linear(feature_dim, feature_dim)
        self.fc2 = nn.Linear(feature_dim, 1)

    def logits(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.feature_dim:
            raise ContractViolationError(
                f"decoder expects width {self.feature_dim}, got {features.shape[-1]}"
            )
        return self.fc2(torch.relu(self.fc1(features))).squeeze(-1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(features).clamp(-LOGIT_CLAMP, LOGIT_CLAMP))


class SpatialEmbeddings(nn.Module):
    """One 2D-wide embedding per spatial relation plus a log-temperature."""

    def __init__(self, feature_dim: int, init_log_temperature: float = 2.3):
        super().__init__()
        self.feature_dim = feature_dim
        self.weight = nn.Parameter(torch.empty(len(RELATION_ORDER), 2 * feature_dim))
        self.log_temperature = nn.Parameter(
            torch.tensor(float(init_log_temperature))
        )

    def vector(self, relation: SpatialRelation) -> torch.Tensor:
        return self.weight[RELATION_ORDER.index(relation)]


def spatial_similarity(
    feat_pair: torch.Tensor, relation: SpatialRelation, emb: SpatialEmbeddings
) -> torch.Tensor:
    """Scaled cosine logits between N x 2D features and the relation's
    embedding; zero feature rows get logit 0."""
    if feat_pair.shape[-1] != 2 * emb.feature_dim:
        raise ContractViolationError(
            f"expected feature width {2 * emb.feature_dim}, got {feat_pair.shape[-1]}"
        )
    vec = emb.vector(relation).to(feat_pair.dtype)
    feat_norm = feat_pair.norm(dim=-1)
    denom = feat_norm * vec.norm()
    dot = feat_pair @ vec
    cos = torch.where(denom > 0, dot / denom.clamp(min=1e-30), torch.zeros_like(dot))
    return torch.exp(emb.log_temperature).to(feat_pair.dtype) * cos


def concat_features(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise concatenation; a (target role) first, b (reference) second."""
    if a.shape[0] != b.shape[0]:
        raise ContractViolationError("feature blocks must have equal N")
    return torch.cat([a, b], dim=-1)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Seeded uniform fan-in init over a deterministic module traversal."""
    gen = torch.Generator().manual_seed(seed)
    for name, sub in sorted(module.named_modules(), key=lambda kv: kv[0]):
        if isinstance(sub, (nn.Conv3d, nn.Linear)):
            fan_in = sub.weight[0].numel()
            bound = 1.0 / np.sqrt(fan_in)
            with torch.no_grad():
                sub.weight.uniform_(-bound, bound, generator=gen)
                if sub.bias is not None:
                    sub.bias.uniform_(-bound, bound, generator=gen)
        elif isinstance(sub, nn.GroupNorm):
            with torch.no_grad():
                sub.weight.fill_(1.0)
                sub.bias.fill_(0.0)
        elif isinstance(sub, SpatialEmbeddings):
            with torch.no_grad():
                sub.weight.uniform_(-1.0, 1.0, generator=gen)


@dataclass
class OccupancyModel:
    """Bundle of the trainable pieces for one task."""

    encoder: UNet3D
    decoder: DecoderMLP
    spatial: SpatialEmbeddings | None
    unet_cfg: UNetConfig

    @staticmethod
    def create(
        unet_cfg: UNetConfig | None = None,
        with_spatial: bool = False,
        seed: int = 0,
    ) -> "OccupancyModel":
        cfg = unet_cfg if unet_cfg is not None else UNetConfig()
        encoder = UNet3D(cfg)
        decoder = DecoderMLP(cfg.out_channels)
        spatial = SpatialEmbeddings(cfg.out_channels) if with_spatial else None
        model = OccupancyModel(encoder, decoder, spatial, cfg)
        init_parameters(encoder, seed)
        init_parameters(decoder, seed + 1)
        if spatial is not None:
            init_parameters(spatial, seed + 2)
        return model

    @property
    def feature_dim(self) -> int:
        return self.unet_cfg.out_channels

    def modules_by_prefix(self) -> dict[str, nn.Module]:
        out = {"encoder": self.encoder, "decoder": self.decoder}
        if self.spatial is not None:
            out["spatial"] = self.spatial
        return out

    def named_parameters(self) -> list[tuple[str, nn.Parameter]]:
        out = []
        for prefix, module in self.modules_by_prefix().items():
            for name, p in module.named_parameters():
                out.append((f"{prefix}.{name}", p))
        return out

    def parameters(self) -> list[nn.Parameter]:
        return [p for _, p in self.named_parameters()]

    def eval_mode(self) -> "OccupancyModel":
        for module in self.modules_by_prefix().values():
            module.eval()
        return self

    def encode_tensor(self, rvox: torch.Tensor) -> torch.Tensor:
        """(B, in_channels, rx, ry, rz) -> (B, D, rx, ry, rz), differentiable."""
        return self.encoder(rvox)

    def encode(self, rvox: FeatureVolume) -> FeatureVolume:
        x = torch.from_numpy(rvox.data).unsqueeze(0)
        with torch.no_grad():
            z = self.encoder(x)[0]
        return FeatureVolume(rvox.spec, z.numpy())

    def sample_features(
        self, z: torch.Tensor, queries: torch.Tensor, spec: GridSpec
    ) -> torch.Tensor:
        return trilinear_sample_tensor(z, queries, spec)


def encode(rvox: FeatureVolume, model: OccupancyModel) -> FeatureVolume:
    return model.encode(rvox)


def decode_occupancy(features, decoder: DecoderMLP) -> np.ndarray:
    """N x D features -> N occupancy probabilities strictly in (0, 1)."""
    dtype = decoder.fc1.weight.dtype
    t = torch.as_tensor(np.asarray(features)).to(dtype)
    with torch.no_grad():
        probs = decoder(t)
    return probs.numpy()


# ---------------------------------------------------------------------------
# SABS checkpoint format


def _write_block(f, name: str, array: np.ndarray) -> None:
    data = np.asarray(array, dtype="<f4")
    shape = data.shape  # before ascontiguousarray, which promotes 0-d to 1-d
    data = np.ascontiguousarray(data)
    encoded = name.encode("utf-8")
    f.write(struct.pack("<I", len(encoded)))
    f.write(encoded)
    f.write(struct.pack("<I", len(shape)))
    f.write(struct.pack(f"<{len(shape)}I", *shape))
    f.write(data.tobytes())


def save_checkpoint(
    path,
    config: dict,
    params: dict[str, np.ndarray],
    opt_state: dict[str, np.ndarray],
    step: int,
    rng_blob: bytes = b"",
) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        config_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(config_bytes)))
        f.write(config_bytes)
        f.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            _write_block(f, name, params[name])
        f.write(struct.pack("<I", len(opt_state)))
        for name in sorted(opt_state):
            _write_block(f, name, opt_state[name])
        f.write(struct.pack("<Q", step))
        f.write(struct.pack("<I", len(rng_blob)))
        f.write(rng_blob)


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]
    opt_state: dict[str, np.ndarray]
    step: int
    rng_blob: bytes


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.raw):
            raise FormatError("truncated checkpoint", offset=self.offset)
        out = self.raw[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def block(self) -> tuple[str, np.ndarray]:
        name = self.take(self.u32()).decode("utf-8")
        ndim = self.u32()
        shape = struct.unpack(f"<{ndim}I", self.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(shape)
        return name, data.copy()


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    r = _Reader(raw)
    r.take(4)
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    config = json.loads(r.take(r.u32()).decode("utf-8"))
    params = dict(r.block() for _ in range(r.u32()))
    opt_state = dict(r.block() for _ in range(r.u32()))
    step = r.u64()
    rng_blob = r.take(r.u32())
    if r.offset != len(raw):
        raise FormatError("trailing bytes in checkpoint", offset=r.offset)
    return Checkpoint(config, params, opt_state, step, rng_blob)


def model_to_param_arrays(model: OccupancyModel) -> dict[str, np.ndarray]:
    return {
        name: p.detach().cpu().numpy().astype(np.float32)
        for name, p in model.named_parameters()
    }


def load_params_into_model(model: OccupancyModel, params: dict[str, np.ndarray]) -> None:
    named = dict(model.named_parameters())
    if set(named) != set(params):
        missing = set(named) ^ set(params)
        raise FormatError(f"checkpoint parameter names mismatch: {sorted(missing)}")
    with torch.no_grad():
        for name, p in named.items():
            arr = params[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise FormatError(
                    f"parameter {name} has shape {arr.shape}, expected {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(arr.astype(np.float32)))


def model_from_checkpoint(ckpt: Checkpoint) -> OccupancyModel:
    cfg = UNetConfig(**ckpt.config["unet"])
    model = OccupancyModel.create(
        cfg, with_spatial=ckpt.config.get("with_spatial", False), seed=0
    )
    load_params_into_model(model, ckpt.params)
    return model
