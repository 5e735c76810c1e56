"""Relevancy-driven 3D scene completion and hidden-object localization.

The pipeline lifts per-pixel relevancy maps into a voxel grid, encodes the
grid with a 3D UNet, and decodes per-point occupancy with a small MLP; a
per-relation embedding table turns paired features into spatial-description
scores.  Synthetic scenes with analytic ground truth stand in for real
sensors, and a deterministic oracle stands in for a vision-language model.
"""

from .errors import ConfigError, ContractViolationError, FormatError, GenerationError
from .geometry import (
    AugmentConfig,
    CameraIntrinsics,
    CameraPose,
    PointCloud,
    SimilarityTransform,
    apply_transform,
    filter_bounds,
    read_depth,
    sample_augmentation,
    unproject_depth,
    write_depth,
)
from .voxel import (
    EMPTY,
    FeatureVolume,
    GridSpec,
    OccupancyGrid,
    SemanticGrid,
    read_volume,
    scatter_max,
    semantic_argmax,
    trilinear_sample,
    voxel_iou,
    write_volume,
)
from .scene import (
    Description,
    DescriptionSample,
    Scene,
    SceneConfig,
    SceneObject,
    SpatialRelation,
    default_class_registry,
    generate_descriptions,
    generate_scene,
    label_spatial_relation,
    occupancy_query,
    read_scene,
    render_depth,
    synonym_table,
    write_scene,
)
from .relevancy import (
    CropSchedule,
    NoiseConfig,
    OracleRelevancyProvider,
    RelevancyMap,
    RelevancyProvider,
    RmapFileProvider,
    aggregate_crops,
    aggregate_variants,
    make_crop_schedule,
    oracle_relevancy,
    project_relevancy,
    read_rmap,
    write_rmap,
)
from .network import (
    DecoderMLP,
    OccupancyModel,
    SpatialEmbeddings,
    UNet3D,
    UNetConfig,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    spatial_similarity,
)
from .data import View, ViewRecord, load_dataset, make_dataset, save_dataset
from .tasks import OvsscResult, VoolResult, ovssc_infer, vool_infer, write_ply
from .train import AdamW, TrainConfig, TrainResult, bce_loss, lr_at, train_ovssc, train_vool
from .eval import OvsscReport, Splits, VoolReport, eval_ovssc, eval_vool, make_splits

__version__ = "1.0.0"
