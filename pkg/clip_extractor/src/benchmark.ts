/**
 * Timing comparison of batched vs naive multi-scale extraction on identical
 * schedules and hardware, reported as seconds per label (mean +/- std over
 * repeats) together with the maximum absolute output difference.
 */

import { performance } from "node:perf_hooks";
import { ExtractConfig } from "./config.js";
import { Image } from "./image.js";
import { extract, extractNaive, loadClip, scheduleFor } from "./extract.js";
import { windowCount } from "./schedule.js";
import { seededRng } from "./weights.js";

export interface BenchmarkStats {
  mean: number;
  std: number;
  samples: number[];
}

export interface BenchmarkReport {
  nLabels: number;
  repeats: number;
  imageSize: number;
  windowsPerVariant: number;
  variants: number;
  batchedSecondsPerLabel: BenchmarkStats;
  naiveSecondsPerLabel: BenchmarkStats;
  speedup: number;
  maxAbsDiff: number;
}

function stats(samples: number[]): BenchmarkStats {
  const mean = samples.reduce((a, b) => a + b, 0) / samples.length;
  const variance = samples.length > 1
    ? samples.reduce((a, b) => a + (b - mean) ** 2, 0) / samples.length
    : 0;
  return { mean, std: Math.sqrt(variance), samples };
}

export function syntheticImage(size: number, seed: number): Image {
  const rng = seededRng(seed);
  const img = new Image(size, size);
  for (let i = 0; i < img.data.length; i++) img.data[i] = rng();
  return img;
}

export function runBenchmark(
  cfg: ExtractConfig,
  nLabels: number,
  repeats: number,
  imageSize: number,
): BenchmarkReport {
  if (nLabels < 1) throw new Error("nLabels must be >= 1");
  if (repeats < 1) throw new Error("repeats must be >= 1");
  const labels = Array.from({ length: nLabels }, (_, i) => `object variant ${i}`);
  const img = syntheticImage(imageSize, cfg.seed + 17);
  const clip = loadClip(cfg);
  const schedule = scheduleFor(img, cfg);

  // warm-up plus output-equality check
  const batchedMaps = extract(img, labels, cfg, clip);
  const naiveMaps = extractNaive(img, labels, cfg, clip);
  let maxAbsDiff = 0;
  for (let li = 0; li < labels.length; li++) {
    const a = batchedMaps[li].values;
    const b = naiveMaps[li].values;
    for (let i = 0; i < a.length; i++) {
      maxAbsDiff = Math.max(maxAbsDiff, Math.abs(a[i] - b[i]));
    }
  }

  const batchedSamples: number[] = [];
  const naiveSamples: number[] = [];
  for (let r = 0; r < repeats; r++) {
    let t0 = performance.now();
    extract(img, labels, cfg, clip);
    batchedSamples.push((performance.now() - t0) / 1000 / nLabels);
    t0 = performance.now();
    extractNaive(img, labels, cfg, clip);
    naiveSamples.push((performance.now() - t0) / 1000 / nLabels);
  }
  const batched = stats(batchedSamples);
  const naive = stats(naiveSamples);
  const flipFactor = cfg.horizontalFlip ? 2 : 1;
  return {
    nLabels,
    repeats,
    imageSize,
    windowsPerVariant: windowCount(schedule),
    variants: Math.max(cfg.rgbAugmentations, 1) * flipFactor,
    batchedSecondsPerLabel: batched,
    naiveSecondsPerLabel: naive,
    speedup: naive.mean / batched.mean,
    maxAbsDiff,
  };
}
