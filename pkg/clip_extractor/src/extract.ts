/**
 * Multi-scale, multi-augmentation relevancy extraction.
 *
 * The batched path encodes each text label once, runs one image-tower
 * forward per (variant, window), and shares that forward across all labels
 * (per-label work is one backward pass). The naive path is the reference
 * loop: one full single-pair relevancy computation per (label, variant,
 * window). Both produce identical maps; the batched path is faster per
 * label because forward and text-encoding work is amortized.
 */

import { ExtractConfig } from "./config.js";
import {
  IDENTITY_JITTER,
  Image,
  RgbJitter,
  applyJitter,
  cropImage,
  flipHorizontal,
  sampleJitter,
} from "./image.js";
import { aggregateCrops, aggregateVariants, WindowMap } from "./aggregate.js";
import {
  Clip,
  cheferRelevancy,
  encodeImageForRelevancy,
  encodeImageJacobian,
  relevancyFromJacobian,
  relevancyFromState,
} from "./relevancy.js";
import { CropSchedule, makeCropSchedule } from "./schedule.js";
import { LabeledMap } from "./rmap.js";
import { loadWeights, seededRng, seededWeights } from "./weights.js";

export interface Variant {
  jitter: RgbJitter;
  flipped: boolean;
}

export function makeVariants(cfg: ExtractConfig): Variant[] {
  const rng = seededRng(cfg.seed);
  const jitters: RgbJitter[] = [];
  if (cfg.rgbAugmentations < 0) throw new Error("rgbAugmentations must be >= 0");
  if (cfg.rgbAugmentations === 0) {
    jitters.push(IDENTITY_JITTER);
  } else {
    for (let i = 0; i < cfg.rgbAugmentations; i++) jitters.push(sampleJitter(rng));
  }
  const variants: Variant[] = [];
  for (const jitter of jitters) {
    variants.push({ jitter, flipped: false });
    if (cfg.horizontalFlip) variants.push({ jitter, flipped: true });
  }
  return variants;
}

export function loadClip(cfg: ExtractConfig): Clip {
  const arrays = cfg.weightsPath
    ? loadWeights(cfg.weightsPath, cfg.model)
    : seededWeights(cfg.model, cfg.weightsSeed);
  return new Clip(arrays, cfg.model);
}

function variantImage(img: Image, variant: Variant): Image {
  let out = applyJitter(img, variant.jitter);
  if (variant.flipped) out = flipHorizontal(out);
  return out;
}

function toWindowMap(values: Float64Array): Float32Array {
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = Math.fround(Math.max(values[i], 0));
  return out;
}

/** Batched extraction: per-label maps with the input image's dimensions. */
export function extract(img: Image, labels: string[], cfg: ExtractConfig, clip?: Clip): LabeledMap[] {
  if (labels.length === 0) throw new Error("labels must be nonempty");
  if (img.width !== img.height) throw new Error("extraction expects a square image");
  const model = clip ?? loadClip(cfg);
  const schedule = makeCropSchedule(img.width, img.height, cfg.scaleDivisors, cfg.strideFraction);
  const variants = makeVariants(cfg);
  const textEmbeddings = labels.map((label) => model.encodeLabel(label, cfg.promptTemplates));

  const variantMaps: Float32Array[][] = labels.map(() => []);
  for (const variant of variants) {
    const vimg = variantImage(img, variant);
    const perLabelWindows: WindowMap[][] = labels.map(() => []);
    // One forward per window, shared across labels. With many labels the
    // per-window backward work is also shared: the label-independent
    // attention Jacobian is computed once (embedDim seed passes) and each
    // label reduces to a linear recombination. Below the break-even label
    // count a plain per-label backward is cheaper.
    const useJacobian = labels.length > cfg.model.embedDim;
    for (const scale of schedule.scales) {
      for (const window of scale.windows) {
        const crop = cropImage(vimg, window.x, window.y, window.size);
        if (useJacobian) {
          const state = encodeImageJacobian(model, crop);
          for (let li = 0; li < labels.length; li++) {
            const map = relevancyFromJacobian(model, state, textEmbeddings[li], window.size);
            perLabelWindows[li].push({ window, values: toWindowMap(map) });
          }
        } else {
          const state = encodeImageForRelevancy(model, crop);
          for (let li = 0; li < labels.length; li++) {
            const map = relevancyFromState(model, state, textEmbeddings[li], window.size);
            perLabelWindows[li].push({ window, values: toWindowMap(map) });
          }
        }
      }
    }
    for (let li = 0; li < labels.length; li++) {
      variantMaps[li].push(aggregateCrops(perLabelWindows[li], schedule));
    }
  }
  const flips = variants.map((v) => v.flipped);
  return labels.map((label, li) => ({
    label,
    width: img.width,
    height: img.height,
    values: aggregateVariants(variantMaps[li], flips, img.width, img.height),
  }));
}

/** Reference loop: independent single-pair relevancy per (label, variant, window). */
export function extractNaive(img: Image, labels: string[], cfg: ExtractConfig, clip?: Clip): LabeledMap[] {
  if (labels.length === 0) throw new Error("labels must be nonempty");
  if (img.width !== img.height) throw new Error("extraction expects a square image");
  const model = clip ?? loadClip(cfg);
  const schedule = makeCropSchedule(img.width, img.height, cfg.scaleDivisors, cfg.strideFraction);
  const variants = makeVariants(cfg);
  const out: LabeledMap[] = [];
  for (const label of labels) {
    const variantMaps: Float32Array[] = [];
    for (const variant of variants) {
      const vimg = variantImage(img, variant);
      const windows: WindowMap[] = [];
      for (const scale of schedule.scales) {
        for (const window of scale.windows) {
          const crop = cropImage(vimg, window.x, window.y, window.size);
          const map = cheferRelevancy(model, crop, label, cfg.promptTemplates);
          windows.push({ window, values: toWindowMap(map) });
        }
      }
      variantMaps.push(aggregateCrops(windows, schedule));
    }
    out.push({
      label,
      width: img.width,
      height: img.height,
      values: aggregateVariants(variantMaps, variants.map((v) => v.flipped), img.width, img.height),
    });
  }
  return out;
}

export function scheduleFor(img: Image, cfg: ExtractConfig): CropSchedule {
  return makeCropSchedule(img.width, img.height, cfg.scaleDivisors, cfg.strideFraction);
}
