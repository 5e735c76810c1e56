"""Train a small completion model and run open-vocabulary inference.

Uses the standard 32^3 grid but a small scene budget (12 scenes, 16
epochs) so the demo finishes in a few minutes; the printed IoU is modest
compared to a full training run.
"""

import numpy as np

from semscene.data import make_dataset
from semscene.eval import eval_ovssc
from semscene.relevancy import OracleRelevancyProvider
from semscene.tasks import ovssc_infer
from semscene.train import TrainConfig, train
from semscene.voxel import GridSpec

grid = GridSpec.default()
cfg = TrainConfig(
    task="ovssc",
    epochs=16,
    points_per_cloud=4096,
    query_points=8192,
    seed=0,
)
train_set = make_dataset(100, 12, grid=grid)
eval_set = make_dataset(200, 4, grid=grid)
provider = OracleRelevancyProvider(seed=0)

result = train(train_set, cfg, provider)
print(f"trained {result.step} steps, loss {result.metrics[0]['loss']:.3f} "
      f"-> {result.metrics[-1]['loss']:.3f}")

report = eval_ovssc(eval_set, result.model, provider, grid, split="demo")
print(f"mean IoU on unseen rooms: {report.mean_iou:.3f}")
for label, iou in sorted(report.per_class_iou.items()):
    print(f"  {label:>16}: {iou:.3f}")

# single-view inference: one forward pass per label, then semantic argmax
view = eval_set[0].view
labels = view.class_labels()
out = ovssc_infer(view, labels, provider, result.model, grid)
counts = {
    label: int((out.semantic.data == i).sum())
    for i, label in enumerate(labels)
}
print(f"per-class voxel counts for one view: {counts}")
