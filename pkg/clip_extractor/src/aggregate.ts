/**
 * Per-window map compositing: per-pixel mean within each scale, then the
 * mean across scales.
 *
 * Every arithmetic step is performed in IEEE float32 (via Math.fround) in a
 * fixed order — scale-major, windows in their submitted order — so the
 * result is bit-identical to the voxel pipeline's composition of the same
 * windows.
 */

import { CropSchedule, CropWindow } from "./schedule.js";

export interface WindowMap {
  window: CropWindow;
  /** window.size x window.size row-major values. */
  values: Float32Array;
}

export function aggregateCrops(maps: WindowMap[], schedule: CropSchedule): Float32Array {
  const { width, height } = schedule;
  const bySize = new Map<number, WindowMap[]>();
  for (const scale of schedule.scales) {
    if (!bySize.has(scale.size)) bySize.set(scale.size, []);
  }
  for (const m of maps) {
    if (m.values.length !== m.window.size * m.window.size) {
      throw new Error(`window map length ${m.values.length} does not match size ${m.window.size}`);
    }
    const bucket = bySize.get(m.window.size);
    if (!bucket) throw new Error(`window size ${m.window.size} is not part of the schedule`);
    bucket.push(m);
  }

  const total = new Float32Array(width * height);
  const nScales = Math.fround(schedule.scales.length);
  for (const scale of schedule.scales) {
    const acc = new Float32Array(width * height);
    const count = new Float32Array(width * height);
    for (const { window, values } of bySize.get(scale.size)!) {
      for (let r = 0; r < window.size; r++) {
        const dst = (window.y + r) * width + window.x;
        const src = r * window.size;
        for (let c = 0; c < window.size; c++) {
          acc[dst + c] = Math.fround(acc[dst + c] + values[src + c]);
          count[dst + c] = Math.fround(count[dst + c] + 1);
        }
      }
    }
    for (let i = 0; i < total.length; i++) {
      if (count[i] === 0) throw new Error(`scale ${scale.size} leaves pixels uncovered`);
      total[i] = Math.fround(total[i] + Math.fround(acc[i] / count[i]));
    }
  }
  const out = new Float32Array(width * height);
  for (let i = 0; i < total.length; i++) {
    out[i] = Math.max(Math.fround(total[i] / nScales), 0);
  }
  return out;
}

/**
 * Mean across augmentation variants; horizontally flipped variants are
 * un-flipped first. Accumulation is float32 in submission order.
 */
export function aggregateVariants(
  maps: Float32Array[],
  flipped: boolean[],
  width: number,
  height: number,
): Float32Array {
  if (maps.length === 0 || maps.length !== flipped.length) {
    throw new Error("need one flip flag per variant map");
  }
  const acc = new Float32Array(width * height);
  const n = Math.fround(maps.length);
  for (let v = 0; v < maps.length; v++) {
    const m = maps[v];
    if (m.length !== width * height) throw new Error("variant map dimensions differ");
    if (flipped[v]) {
      for (let r = 0; r < height; r++) {
        for (let c = 0; c < width; c++) {
          const i = r * width + c;
          acc[i] = Math.fround(acc[i] + m[r * width + (width - 1 - c)]);
        }
      }
    } else {
      for (let i = 0; i < acc.length; i++) acc[i] = Math.fround(acc[i] + m[i]);
    }
  }
  const out = new Float32Array(width * height);
  for (let i = 0; i < acc.length; i++) out[i] = Math.fround(acc[i] / n);
  return out;
}
