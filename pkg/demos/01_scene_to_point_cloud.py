"""Generate a synthetic room, render a depth view, and lift it to a point cloud.

Walks the front half of the pipeline: procedural scene -> ray-cast depth +
instance mask -> unprojection into world space -> grid-bounds filter.
Exports the cloud as ASCII PLY next to this script.
"""

from pathlib import Path

import numpy as np

from semscene.data import default_intrinsics, make_view
from semscene.geometry import filter_bounds, unproject_depth
from semscene.scene import SceneConfig, generate_scene
from semscene.tasks import write_ply
from semscene.voxel import GridSpec

rng = np.random.default_rng(7)
scene = generate_scene(rng, SceneConfig())
print(f"scene has {len(scene.objects)} objects:")
for obj in scene.objects:
    tag = " (hidden)" if obj.hidden else ""
    print(f"  - {obj.class_label}{tag}")

view = make_view(scene, "demo_view", rng)
valid = view.depth > 0
print(f"depth image {view.depth.shape}, {valid.mean():.0%} pixels hit geometry")

# the instance mask doubles as a per-point feature channel here
cloud = unproject_depth(view.depth, view.intrinsics, view.pose,
                        (view.mask >= 0).astype(np.float32))
cloud = filter_bounds(cloud, GridSpec.default())
print(f"{cloud.positions.shape[0]} points inside the grid bounds")

out = Path(__file__).parent / "scene_cloud.ply"
write_ply(out, cloud.positions, cloud.features[:, 0])
print(f"wrote {out}")
