/**
 * Sliding-window crop schedule; semantics are the cross-implementation
 * contract shared with the voxel pipeline's relevancy module: size_k =
 * floor(h / divisor_k), stride = floor(size * strideFraction) (minimum 1),
 * window positions stepped from 0 plus an edge-flush position per axis,
 * windows ordered y-then-x within a scale.
 */

export interface CropWindow {
  x: number;
  y: number;
  size: number;
}

export interface ScaleWindows {
  size: number;
  stride: number;
  windows: CropWindow[];
}

export interface CropSchedule {
  width: number;
  height: number;
  scales: ScaleWindows[];
}

export function makeCropSchedule(
  width: number,
  height: number,
  scaleDivisors: number[] = [1, 2, 3, 4],
  strideFraction = 0.25,
): CropSchedule {
  if (width !== height) throw new Error("crop scheduling expects a square image");
  const h = height;
  const scales: ScaleWindows[] = [];
  for (const divisor of scaleDivisors) {
    if (divisor < 1 || !Number.isInteger(divisor)) throw new Error("scale divisors must be integers >= 1");
    const size = Math.floor(h / divisor);
    if (size < 1) throw new Error(`crop size for divisor ${divisor} is < 1 px`);
    const stride = Math.max(1, Math.floor(size * strideFraction));
    const positions: number[] = [];
    for (let p = 0; p <= h - size; p += stride) positions.push(p);
    if (positions[positions.length - 1] !== h - size) positions.push(h - size);
    const windows: CropWindow[] = [];
    for (const y of positions) {
      for (const x of positions) windows.push({ x, y, size });
    }
    scales.push({ size, stride, windows });
  }
  return { width, height, scales };
}

export function windowCount(schedule: CropSchedule): number {
  return schedule.scales.reduce((acc, s) => acc + s.windows.length, 0);
}
