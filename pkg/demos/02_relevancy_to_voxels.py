"""From a language label to a voxel feature volume.

Asks the relevancy provider for a per-pixel map of one class label, lifts the
map through the depth image into a relevancy-valued point cloud, and
scatter-maxes it into the 32^3 grid the encoder consumes.
"""

import numpy as np

from semscene.data import make_view
from semscene.relevancy import OracleRelevancyProvider, project_relevancy
from semscene.geometry import filter_bounds
from semscene.scene import SceneConfig, generate_scene
from semscene.voxel import GridSpec, scatter_max

rng = np.random.default_rng(11)
scene = generate_scene(rng, SceneConfig())
view = make_view(scene, "demo_view", rng)
labels = sorted({o.class_label for o in scene.objects if not o.hidden})
print(f"visible classes: {labels}")

provider = OracleRelevancyProvider(seed=0)
grid = GridSpec.default()
for label in labels:
    (rmap,) = provider.relevancy(view, [label])
    cloud = filter_bounds(
        project_relevancy(rmap, view.depth, view.intrinsics, view.pose), grid
    )
    vol = scatter_max(cloud, grid)
    occupied = int((vol.data[0] > 0).sum())
    print(
        f"{label:>16}: map peak {rmap.values.max():.3f}, "
        f"{cloud.positions.shape[0]:6d} points -> {occupied:5d} voxels, "
        f"voxel peak {vol.data[0].max():.3f}"
    )
