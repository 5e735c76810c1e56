/** Model and extraction configuration. */

export interface ModelConfig {
  /** Square input resolution every crop is resized to. */
  imageSize: number;
  patchSize: number;
  width: number;
  layers: number;
  heads: number;
  /** Joint embedding dimension of the image/text projection. */
  embedDim: number;
  textWidth: number;
  textLayers: number;
  textHeads: number;
  contextLength: number;
  vocabSize: number;
}

/** CLIP ViT-B/32 shapes (the only backbone supported). */
export const VIT_B32: ModelConfig = {
  imageSize: 224,
  patchSize: 32,
  width: 768,
  layers: 12,
  heads: 12,
  embedDim: 512,
  textWidth: 512,
  textLayers: 12,
  textHeads: 8,
  contextLength: 77,
  vocabSize: 49408,
};

/** Architecture-identical reduction for CPU-budget tests and benchmarks. */
export const VIT_TINY: ModelConfig = {
  imageSize: 32,
  patchSize: 8,
  width: 64,
  layers: 3,
  heads: 4,
  embedDim: 16,
  textWidth: 32,
  textLayers: 2,
  textHeads: 2,
  contextLength: 16,
  vocabSize: 1024,
};

export interface ExtractConfig {
  scaleDivisors: number[];
  strideFraction: number;
  /** Number of random RGB augmentation variants (in addition to the identity). */
  rgbAugmentations: number;
  horizontalFlip: boolean;
  promptTemplates: string[];
  batchSize: number;
  seed: number;
  model: ModelConfig;
  /** Optional path to a CLPW weights file; seeded random weights otherwise. */
  weightsPath?: string;
  weightsSeed: number;
}

export function defaultExtractConfig(model: ModelConfig = VIT_B32): ExtractConfig {
  return {
    scaleDivisors: [1, 2, 3, 4],
    strideFraction: 0.25,
    rgbAugmentations: 5,
    horizontalFlip: true,
    promptTemplates: ["a photo of a {}"],
    batchSize: 32,
    seed: 0,
    model,
    weightsSeed: 0,
  };
}

/**
 * Benchmark defaults: the reduced model and a two-scale schedule with one
 * augmentation variant, sized so the naive reference loop finishes in
 * minutes on one CPU core. The full-size configuration is available via
 * the regular extract config.
 */
export function benchmarkExtractConfig(): ExtractConfig {
  const cfg = defaultExtractConfig(VIT_TINY);
  cfg.scaleDivisors = [1, 2];
  cfg.rgbAugmentations = 1;
  cfg.horizontalFlip = false;
  return cfg;
}

export function validateModelConfig(cfg: ModelConfig): void {
  if (cfg.imageSize % cfg.patchSize !== 0) {
    throw new Error(`image size ${cfg.imageSize} not divisible by patch size ${cfg.patchSize}`);
  }
  if (cfg.width % cfg.heads !== 0) {
    throw new Error(`width ${cfg.width} not divisible by heads ${cfg.heads}`);
  }
  if (cfg.textWidth % cfg.textHeads !== 0) {
    throw new Error(`text width ${cfg.textWidth} not divisible by heads ${cfg.textHeads}`);
  }
  for (const v of [cfg.layers, cfg.textLayers, cfg.contextLength, cfg.vocabSize, cfg.embedDim]) {
    if (!Number.isInteger(v) || v < 1) throw new Error("model config values must be positive integers");
  }
}
