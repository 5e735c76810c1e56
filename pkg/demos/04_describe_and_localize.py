"""Spatial descriptions: ground-truth labeling and learned localization.

Shows the language side of the pipeline: auto-generated "<target> <relation>
<reference>" descriptions with voxel-level ground truth, then a quickly
trained localizer scoring each description (IoU between thresholded
prediction and ground truth). Small budget; expect rough numbers.
"""

import numpy as np

from semscene.data import make_dataset
from semscene.relevancy import OracleRelevancyProvider
from semscene.tasks import vool_infer
from semscene.train import TrainConfig, train
from semscene.voxel import GridSpec, OccupancyGrid, voxel_iou

grid = GridSpec.default(16)
train_set = make_dataset(300, 8, grid=grid)
eval_set = make_dataset(400, 2, grid=grid)
provider = OracleRelevancyProvider(seed=0)

record = eval_set[0]
print("descriptions for one view:")
for sample in record.descriptions:
    d = sample.description
    tag = " [target hidden]" if sample.hidden_target else ""
    print(f"  {d.target_label} {d.relation.value} {d.ref_label}: "
          f"{int(sample.positives.sum())} positive voxels{tag}")

cfg = TrainConfig(
    task="vool",
    epochs=6,
    grid_resolution=16,
    unet_levels=2,
    unet_base_channels=8,
    feature_dim=8,
    points_per_cloud=2048,
    query_points=4096,
    pos_weight=3.0,
    seed=0,
)
result = train(train_set, cfg, provider)
print(f"\ntrained {result.step} steps, loss {result.metrics[0]['loss']:.3f} "
      f"-> {result.metrics[-1]['loss']:.3f}\n")

for sample in record.descriptions[:4]:
    out = vool_infer(record.view, sample.description, provider, result.model, grid)
    truth = OccupancyGrid(grid, sample.positives.reshape(grid.resolution))
    iou = voxel_iou(out.occupancy, truth)
    d = sample.description
    print(f"  {d.target_label} {d.relation.value} {d.ref_label}: IoU {iou:.3f}")
