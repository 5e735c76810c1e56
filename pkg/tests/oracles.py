"""Independent brute-force reference implementations used to validate the
library kernels.  These are deliberately written in a different style (python
loops, math module) than the vectorized library code so a shared bug is
unlikely."""

from __future__ import annotations

import math

import numpy as np


def scatter_max_oracle(positions, features, spec):
    """Per-voxel max via an explicit loop over points."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    channels = features.shape[1] if features.size else max(1, features.shape[-1])
    data = np.zeros((channels,) + tuple(spec.resolution), dtype=np.float64)
    edge = (np.asarray(spec.upper) - np.asarray(spec.lower)) / np.asarray(spec.resolution)
    for p, f in zip(positions, features):
        idx = []
        for axis in range(3):
            i = int(math.floor((p[axis] - spec.lower[axis]) / edge[axis]))
            i = min(i, spec.resolution[axis] - 1)
            idx.append(i)
        for c in range(channels):
            val = np.float32(f[c])
            if val > data[(c, *idx)]:
                data[(c, *idx)] = val
    return data.astype(np.float32)


def trilinear_oracle(vol_data, queries, spec):
    """Per-point trilinear interpolation with zero padding, python loops."""
    vol = np.asarray(vol_data, dtype=np.float64)
    channels = vol.shape[0]
    res = tuple(spec.resolution)
    edge = (np.asarray(spec.upper) - np.asarray(spec.lower)) / np.asarray(res)
    out = np.zeros((len(queries), channels))
    for n, q in enumerate(np.asarray(queries, dtype=np.float64)):
        g = [(q[a] - spec.lower[a]) / edge[a] - 0.5 for a in range(3)]
        base = [math.floor(v) for v in g]
        frac = [g[a] - base[a] for a in range(3)]
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    ix, iy, iz = base[0] + dx, base[1] + dy, base[2] + dz
                    if not (0 <= ix < res[0] and 0 <= iy < res[1] and 0 <= iz < res[2]):
                        continue
                    w = (
                        (frac[0] if dx else 1 - frac[0])
                        * (frac[1] if dy else 1 - frac[1])
                        * (frac[2] if dz else 1 - frac[2])
                    )
                    for c in range(channels):
                        out[n, c] += w * vol[c, ix, iy, iz]
    return out


def iou_oracle(a, b):
    inter = 0
    union = 0
    for x, y in zip(np.asarray(a).reshape(-1), np.asarray(b).reshape(-1)):
        if x and y:
            inter += 1
        if x or y:
            union += 1
    return 1.0 if union == 0 else inter / union


def argmax_oracle(stack, c):
    """stack: (K, rx, ry, rz) probabilities -> int labels, -1 below c."""
    stack = np.asarray(stack)
    k, rx, ry, rz = stack.shape
    out = np.empty((rx, ry, rz), dtype=np.int64)
    for i in range(rx):
        for j in range(ry):
            for l in range(rz):
                best, best_k = -1.0, -1
                for kk in range(k):
                    if stack[kk, i, j, l] > best:
                        best, best_k = stack[kk, i, j, l], kk
                out[i, j, l] = best_k if best >= c else -1
    return out


def filter_bounds_oracle(positions, lower, upper):
    keep = []
    for n, p in enumerate(positions):
        ok = True
        for a in range(3):
            if not (lower[a] <= p[a] < upper[a]):
                ok = False
        if ok:
            keep.append(n)
    return keep


def central_difference_grad(fn, x, h=1e-3):
    """Gradient of scalar fn at float64 x via central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


# ---------------------------------------------------------------------------
# spatial-relation rule oracle (independent of the library implementation)

_COS45 = math.cos(math.pi / 4)


def _obj_aabb(obj):
    los = []
    his = []
    for prim in obj.primitives:
        lo, hi = prim.aabb()
        los.append(lo)
        his.append(hi)
    return np.min(los, axis=0), np.max(his, axis=0)


def _obj_radius(obj):
    lo, hi = _obj_aabb(obj)
    return 0.5 * math.sqrt(sum((hi[a] - lo[a]) ** 2 for a in range(3)))


def _obj_center(obj):
    lo, hi = _obj_aabb(obj)
    return [(lo[a] + hi[a]) / 2 for a in range(3)]


def _matches(obj, label):
    names = [obj.class_label.lower()] + [s.lower() for s in obj.synonyms]
    return label.strip().lower() in names


def relation_oracle(scene, pose, desc, points, kappa=0.5):
    """Point-by-point re-evaluation of the relation rules."""
    relation = desc.relation.value
    refs = [
        o for o in scene.objects if not o.hidden and _matches(o, desc.ref_label)
    ]
    points = np.asarray(points, dtype=np.float64)
    out = np.zeros(len(points), dtype=bool)
    if not refs:
        return out

    if relation in ("on_top_of", "inside"):
        attr = "on_top_region" if relation == "on_top_of" else "inside_region"
        for n, p in enumerate(points):
            for obj in refs:
                region = getattr(obj, attr)
                if region is None:
                    continue
                if all(region.lower[a] <= p[a] <= region.upper[a] for a in range(3)):
                    out[n] = True
        return out

    right = pose.rotation[:, 0]
    forward = pose.rotation[:, 2]

    def horiz(v):
        n = math.hypot(v[0], v[1])
        return [v[0] / n, v[1] / n, 0.0]

    directions = {
        "left_of": [-c for c in horiz(right)],
        "right_of": horiz(right),
        "in_front_of": [-c for c in horiz(forward)],
        "behind": horiz(forward),
    }
    opposite = {
        "left_of": "right_of",
        "right_of": "left_of",
        "behind": "in_front_of",
        "in_front_of": "behind",
    }

    targets = [o for o in scene.objects if _matches(o, desc.target_label)]
    pool = targets if targets else list(scene.objects)
    r_t = sum(_obj_radius(o) for o in pool) / len(pool)

    def point_in_cone(p, direction):
        for obj in refs:
            c = _obj_center(obj)
            d = [p[a] - c[a] for a in range(3)]
            dist = math.sqrt(sum(x * x for x in d))
            if dist <= 0:
                continue
            cos = sum(d[a] * direction[a] for a in range(3)) / dist
            reach = (1 + kappa) * (r_t + _obj_radius(obj))
            if cos >= _COS45 and dist <= reach:
                return True
        return False

    # ambiguous points (also satisfying the opposite direction) are negative
    for n, p in enumerate(points):
        if point_in_cone(p, directions[relation]) and not point_in_cone(
            p, directions[opposite[relation]]
        ):
            out[n] = True
    return out


def schedule_covers_all_pixels(schedule):
    """Every pixel covered at every scale, by direct painting."""
    for scale in schedule.scales:
        canvas = np.zeros((schedule.height, schedule.width), dtype=bool)
        for w in scale.windows:
            canvas[w.y : w.y + w.size, w.x : w.x + w.size] = True
        if not canvas.all():
            return False
    return True
