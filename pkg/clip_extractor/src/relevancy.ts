/**
 * Gradient-weighted attention rollout: the relevancy of each image patch to
 * a text query, computed from the attention maps of the image tower and the
 * gradients of the image-text cosine similarity with respect to them.
 */

import { ModelConfig } from "./config.js";
import { Image, patchify, resizeImage, resizeMap } from "./image.js";
import { AttentionRecord, EncodeCache, ImageEncoder, TextEncoder } from "./model.js";
import { Matrix } from "./tensor.js";
import { applyTemplate, tokenize } from "./tokenizer.js";
import { NamedArrays } from "./weights.js";

export class Clip {
  readonly cfg: ModelConfig;
  readonly image: ImageEncoder;
  readonly text: TextEncoder;

  constructor(arrays: NamedArrays, cfg: ModelConfig) {
    this.cfg = cfg;
    this.image = new ImageEncoder(arrays, cfg);
    this.text = new TextEncoder(arrays, cfg);
  }

  /** Mean of the L2-normalized per-template embeddings. */
  encodeLabel(label: string, templates: string[]): Float64Array {
    if (templates.length === 0) throw new Error("at least one prompt template required");
    const acc = new Float64Array(this.cfg.embedDim);
    for (const template of templates) {
      const { ids, eotIndex } = tokenize(applyTemplate(template, label), this.cfg);
      const emb = this.text.forward(ids, eotIndex);
      let norm = 0;
      for (const v of emb) norm += v * v;
      norm = Math.sqrt(norm);
      for (let i = 0; i < acc.length; i++) acc[i] += emb[i] / norm;
    }
    for (let i = 0; i < acc.length; i++) acc[i] /= templates.length;
    return acc;
  }
}

/** Rollout of one backward pass: R = prod_l (I + mean_h relu(grad * attn)). */
export function attentionRollout(records: AttentionRecord[], tokens: number): Matrix {
  let r = new Matrix(tokens, tokens);
  for (let i = 0; i < tokens; i++) r.set(i, i, 1);
  for (const record of records) {
    if (record.attn.length === 0 || record.grad.length !== record.attn.length) {
      throw new Error("attention record is missing captured maps or gradients");
    }
    const mean = new Matrix(tokens, tokens);
    for (let h = 0; h < record.attn.length; h++) {
      const a = record.attn[h];
      const g = record.grad[h];
      for (let i = 0; i < mean.data.length; i++) {
        const v = a.data[i] * g.data[i];
        if (v > 0) mean.data[i] += v;
      }
    }
    for (let i = 0; i < mean.data.length; i++) mean.data[i] /= record.attn.length;
    const step = new Matrix(tokens, tokens);
    // R <- (I + mean) @ R
    for (let i = 0; i < tokens; i++) {
      for (let j = 0; j < tokens; j++) {
        let s = r.get(i, j);
        for (let k = 0; k < tokens; k++) s += mean.get(i, k) * r.get(k, j);
        step.set(i, j, s);
      }
    }
    r = step;
  }
  return r;
}

/** Patch-token relevancies (class-token row), upsampled to outSize x outSize. */
export function rolloutToMap(encoder: ImageEncoder, records: AttentionRecord[], outSize: number): Float64Array {
  const rollout = attentionRollout(records, encoder.tokens);
  const grid = encoder.gridSize;
  const patchMap = new Float64Array(grid * grid);
  for (let i = 0; i < grid * grid; i++) {
    patchMap[i] = Math.max(rollout.get(0, i + 1), 0);
  }
  return resizeMap(patchMap, grid, grid, outSize, outSize);
}

export interface ForwardState {
  records: AttentionRecord[];
  cache: EncodeCache;
}

/** Forward an already-square image once; reusable across text queries. */
export function encodeImageForRelevancy(clip: Clip, img: Image): ForwardState {
  const resized = img.width === clip.cfg.imageSize && img.height === clip.cfg.imageSize
    ? img
    : resizeImage(img, clip.cfg.imageSize, clip.cfg.imageSize);
  const patches = patchify(resized, clip.cfg.patchSize);
  const records = clip.image.newRecords();
  const { cache } = clip.image.forward(patches, records);
  return { records, cache };
}

/** Per-query backward on a cached forward; cheap relative to re-encoding. */
export function relevancyFromState(
  clip: Clip,
  state: ForwardState,
  textEmbedding: Float64Array,
  outSize: number,
): Float64Array {
  clip.image.backward(state.cache, textEmbedding, state.records);
  return rolloutToMap(clip.image, state.records, outSize);
}

/**
 * Label-independent attention Jacobian of one encoded image: for every
 * (layer, head), the gradients of each joint-embedding coordinate w.r.t.
 * the attention map, stored as an embedDim x T^2 matrix. Any label's
 * attention gradient is then the linear recombination with that label's
 * d(similarity)/d(embedding) — the per-label marginal cost of batched
 * extraction over many labels.
 */
export interface JacobianState {
  attn: Matrix[][]; // [layer][head], T x T
  jacobian: Matrix[][]; // [layer][head], embedDim x T^2
  embedding: Float64Array;
}

export function encodeImageJacobian(clip: Clip, img: Image): JacobianState {
  const state = encodeImageForRelevancy(clip, img);
  const embedDim = clip.cfg.embedDim;
  const tokens = clip.image.tokens;
  const attn = state.records.map((r) => r.attn.map((a) => a.clone()));
  const jacobian = state.records.map((r) =>
    r.attn.map(() => new Matrix(embedDim, tokens * tokens)),
  );
  const seed = new Float64Array(embedDim);
  for (let i = 0; i < embedDim; i++) {
    seed.fill(0);
    seed[i] = 1;
    clip.image.backwardSeed(state.cache, seed, state.records);
    for (let l = 0; l < state.records.length; l++) {
      for (let h = 0; h < state.records[l].grad.length; h++) {
        jacobian[l][h].data.set(state.records[l].grad[h].data, i * tokens * tokens);
      }
    }
  }
  return { attn, jacobian, embedding: state.cache.embedding };
}

export function relevancyFromJacobian(
  clip: Clip,
  state: JacobianState,
  textEmbedding: Float64Array,
  outSize: number,
): Float64Array {
  const dE = ImageEncoder.embeddingGradient(state.embedding, textEmbedding);
  const tokens = clip.image.tokens;
  const records: AttentionRecord[] = state.attn.map((heads, l) => ({
    attn: heads,
    grad: heads.map((_, h) => {
      const flat = new Float64Array(tokens * tokens);
      const jac = state.jacobian[l][h];
      for (let i = 0; i < dE.length; i++) {
        const w = dE[i];
        if (w === 0) continue;
        const row = i * flat.length;
        for (let j = 0; j < flat.length; j++) flat[j] += w * jac.data[row + j];
      }
      return new Matrix(tokens, tokens, flat);
    }),
  }));
  return rolloutToMap(clip.image, records, outSize);
}

/**
 * The single-pair operation: encode the label, encode the image, take
 * gradients, roll out. The map has the input image's dimensions.
 */
export function cheferRelevancy(
  clip: Clip,
  img: Image,
  label: string,
  templates: string[] = ["a photo of a {}"],
): Float64Array {
  if (img.width !== img.height) throw new Error("relevancy expects a square image");
  const textEmbedding = clip.encodeLabel(label, templates);
  const state = encodeImageForRelevancy(clip, img);
  return relevancyFromState(clip, state, textEmbedding, img.width);
}
