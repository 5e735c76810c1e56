"""Regenerate the cross-implementation aggregation fixtures.

Inputs are synthetic float32 per-window maps in schedule order
(scale-major, windows y-then-x with the edge-flush window last); golden
outputs are produced by the voxel pipeline's compositing routines, which
define the normative accumulation order. Run from this directory:

    python3 make_fixtures.py
"""

import struct
from pathlib import Path

import numpy as np

from semscene.relevancy import (
    RelevancyMap,
    aggregate_crops,
    aggregate_variants,
    make_crop_schedule,
    write_rmap,
)

HERE = Path(__file__).parent

AGGF_MAGIC = b"AGGF"
VARF_MAGIC = b"VARF"
VERSION = 1


def write_crops_fixture(path, windows, height, width):
    with open(path, "wb") as f:
        f.write(AGGF_MAGIC)
        f.write(struct.pack("<IIII", VERSION, height, width, len(windows)))
        for window, values in windows:
            f.write(struct.pack("<III", window.x, window.y, window.size))
            f.write(np.asarray(values, dtype="<f4").tobytes())


def write_variants_fixture(path, maps, flipped, height, width):
    with open(path, "wb") as f:
        f.write(VARF_MAGIC)
        f.write(struct.pack("<IIII", VERSION, height, width, len(maps)))
        for values, flip in zip(maps, flipped):
            f.write(struct.pack("<B", 1 if flip else 0))
            f.write(np.asarray(values, dtype="<f4").tobytes())


def main():
    rng = np.random.default_rng(20240823)
    size = 64
    schedule = make_crop_schedule(size, size, scale_divisors=(1, 2, 4))
    windows = []
    for scale in schedule.scales:
        for window in scale.windows:
            values = rng.uniform(0, 2, size=(window.size, window.size)).astype(np.float32)
            windows.append((window, values))
    golden = aggregate_crops(windows, schedule, label="golden")
    write_crops_fixture(HERE / "agg_crops_input.aggf", windows, size, size)
    write_rmap(HERE / "agg_crops_golden.rmap", [golden])

    variant_maps = [
        rng.uniform(0, 1.5, size=(size, size)).astype(np.float32) for _ in range(6)
    ]
    flipped = [False, True, False, True, True, False]
    golden_variants = aggregate_variants(variant_maps, flipped, label="golden")
    write_variants_fixture(HERE / "agg_variants_input.varf", variant_maps, flipped, size, size)
    write_rmap(HERE / "agg_variants_golden.rmap", [golden_variants])
    print("fixtures written to", HERE)


if __name__ == "__main__":
    main()
