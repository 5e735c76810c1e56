/**
 * CLIP dual encoder (ViT image tower + causal text tower) with a manual
 * vector-Jacobian backward pass that exposes the per-layer attention
 * gradients needed for gradient-weighted attention rollout.
 */

import { ModelConfig, validateModelConfig } from "./config.js";
import {
  LayerNormCache,
  LayerNormParams,
  Matrix,
  addBiasInPlace,
  addInPlace,
  dot,
  l2Normalize,
  layerNorm,
  layerNormBackward,
  matmul,
  matmulT,
  matmulTA,
  quickGelu,
  quickGeluBackward,
  softmaxRows,
  softmaxRowsBackward,
} from "./tensor.js";
import { NamedArrays } from "./weights.js";

interface BlockParams {
  ln1: LayerNormParams;
  qkvW: Matrix;
  qkvB: Float64Array;
  outW: Matrix;
  outB: Float64Array;
  ln2: LayerNormParams;
  fcW: Matrix;
  fcB: Float64Array;
  projW: Matrix;
  projB: Float64Array;
}

interface BlockCache {
  input: Matrix;
  ln1: LayerNormCache;
  heads: { q: Matrix; k: Matrix; v: Matrix; attn: Matrix }[];
  merged: Matrix; // concatenated head outputs before the out projection
  afterAttn: Matrix;
  ln2: LayerNormCache;
  mlpPre: Matrix; // fc output before activation
  mlpAct: Matrix;
}

export interface EncodeCache {
  blocks: BlockCache[];
  lnPost: LayerNormCache;
  clsFinal: Matrix; // 1 x width, before ln_post
  embedding: Float64Array; // unnormalized joint embedding
}

/** Per-layer attention state captured for relevancy rollout. */
export interface AttentionRecord {
  /** Softmax outputs, one T x T matrix per head. */
  attn: Matrix[];
  /** d(similarity)/d(attn), filled in by the backward pass. */
  grad: Matrix[];
}

function param(arrays: NamedArrays, name: string): { dims: number[]; data: Float64Array } {
  const p = arrays.get(name);
  if (!p) throw new Error(`missing parameter ${name}`);
  return p;
}

function asMatrix(arrays: NamedArrays, name: string): Matrix {
  const { dims, data } = param(arrays, name);
  if (dims.length !== 2) throw new Error(`${name} is not a matrix`);
  return new Matrix(dims[0], dims[1], data);
}

function asVector(arrays: NamedArrays, name: string): Float64Array {
  const { dims, data } = param(arrays, name);
  if (dims.length !== 1) throw new Error(`${name} is not a vector`);
  return data;
}

function loadBlocks(arrays: NamedArrays, prefix: string, count: number): BlockParams[] {
  const blocks: BlockParams[] = [];
  for (let l = 0; l < count; l++) {
    const p = `${prefix}.blocks.${l}`;
    blocks.push({
      ln1: { gain: asVector(arrays, `${p}.ln1.gain`), bias: asVector(arrays, `${p}.ln1.bias`) },
      qkvW: asMatrix(arrays, `${p}.attn.qkv.weight`),
      qkvB: asVector(arrays, `${p}.attn.qkv.bias`),
      outW: asMatrix(arrays, `${p}.attn.out.weight`),
      outB: asVector(arrays, `${p}.attn.out.bias`),
      ln2: { gain: asVector(arrays, `${p}.ln2.gain`), bias: asVector(arrays, `${p}.ln2.bias`) },
      fcW: asMatrix(arrays, `${p}.mlp.fc.weight`),
      fcB: asVector(arrays, `${p}.mlp.fc.bias`),
      projW: asMatrix(arrays, `${p}.mlp.proj.weight`),
      projB: asVector(arrays, `${p}.mlp.proj.bias`),
    });
  }
  return blocks;
}

function sliceHead(x: Matrix, head: number, headDim: number, offset: number): Matrix {
  const out = new Matrix(x.rows, headDim);
  for (let r = 0; r < x.rows; r++) {
    const src = r * x.cols + offset + head * headDim;
    out.data.set(x.data.subarray(src, src + headDim), r * headDim);
  }
  return out;
}

function writeHead(target: Matrix, source: Matrix, head: number, headDim: number, offset: number): void {
  for (let r = 0; r < source.rows; r++) {
    target.data.set(
      source.data.subarray(r * headDim, (r + 1) * headDim),
      r * target.cols + offset + head * headDim,
    );
  }
}

function blockForward(
  x: Matrix,
  p: BlockParams,
  heads: number,
  record: AttentionRecord | null,
  gates: Matrix[] | null,
  causalMask: boolean,
): { out: Matrix; cache: BlockCache } {
  const width = x.cols;
  const headDim = width / heads;
  const scale = 1 / Math.sqrt(headDim);
  const { out: h, cache: ln1Cache } = layerNorm(x, p.ln1);
  const qkv = matmul(h, p.qkvW);
  addBiasInPlace(qkv, p.qkvB);
  const merged = new Matrix(x.rows, width);
  const headCaches: BlockCache["heads"] = [];
  for (let head = 0; head < heads; head++) {
    const q = sliceHead(qkv, head, headDim, 0);
    const k = sliceHead(qkv, head, headDim, width);
    const v = sliceHead(qkv, head, headDim, 2 * width);
    const scores = matmulT(q, k);
    for (let i = 0; i < scores.data.length; i++) scores.data[i] *= scale;
    if (causalMask) {
      for (let r = 0; r < scores.rows; r++) {
        for (let c = r + 1; c < scores.cols; c++) scores.set(r, c, -1e9);
      }
    }
    let attn = softmaxRows(scores);
    if (gates) {
      const gated = attn.clone();
      const g = gates[head];
      for (let i = 0; i < gated.data.length; i++) gated.data[i] *= g.data[i];
      attn = gated;
    }
    if (record) record.attn.push(attn.clone());
    const o = matmul(attn, v);
    writeHead(merged, o, head, headDim, 0);
    headCaches.push({ q, k, v, attn });
  }
  const attnOut = matmul(merged, p.outW);
  addBiasInPlace(attnOut, p.outB);
  const afterAttn = x.clone();
  addInPlace(afterAttn, attnOut);

  const { out: h2, cache: ln2Cache } = layerNorm(afterAttn, p.ln2);
  const mlpPre = matmul(h2, p.fcW);
  addBiasInPlace(mlpPre, p.fcB);
  const mlpAct = quickGelu(mlpPre);
  const mlpOut = matmul(mlpAct, p.projW);
  addBiasInPlace(mlpOut, p.projB);
  const out = afterAttn.clone();
  addInPlace(out, mlpOut);
  return {
    out,
    cache: { input: x, ln1: ln1Cache, heads: headCaches, merged, afterAttn, ln2: ln2Cache, mlpPre, mlpAct },
  };
}

/**
 * Backward through one block given d(similarity)/d(block output); returns
 * d/d(block input) and stores d/d(attention) into the record.
 */
function blockBackward(
  dOut: Matrix,
  p: BlockParams,
  cache: BlockCache,
  heads: number,
  record: AttentionRecord | null,
): Matrix {
  const width = dOut.cols;
  const headDim = width / heads;
  const scale = 1 / Math.sqrt(headDim);

  // mlp branch
  const dMlpAct = matmulT(dOut, p.projW);
  const dMlpPre = quickGeluBackward(dMlpAct, cache.mlpPre);
  const dH2 = matmulT(dMlpPre, p.fcW);
  const dAfterAttn = layerNormBackward(dH2, p.ln2, cache.ln2);
  addInPlace(dAfterAttn, dOut); // residual

  // attention branch
  const dMerged = matmulT(dAfterAttn, p.outW);
  const dQkv = new Matrix(dOut.rows, 3 * width);
  for (let head = 0; head < heads; head++) {
    const dO = sliceHead(dMerged, head, headDim, 0);
    const { q, k, v, attn } = cache.heads[head];
    const dAttn = matmulT(dO, v);
    if (record) record.grad.push(dAttn.clone());
    const dV = matmulTA(attn, dO);
    const dScores = softmaxRowsBackward(dAttn, attn);
    for (let i = 0; i < dScores.data.length; i++) dScores.data[i] *= scale;
    const dQ = matmul(dScores, k);
    const dK = matmulTA(dScores, q);
    writeHead(dQkv, dQ, head, headDim, 0);
    writeHead(dQkv, dK, head, headDim, width);
    writeHead(dQkv, dV, head, headDim, 2 * width);
  }
  const dH = matmulT(dQkv, p.qkvW);
  const dX = layerNormBackward(dH, p.ln1, cache.ln1);
  addInPlace(dX, dAfterAttn); // residual
  return dX;
}

export class ImageEncoder {
  readonly cfg: ModelConfig;
  readonly gridSize: number;
  readonly tokens: number;
  private readonly patchW: Matrix;
  private readonly clsEmbed: Float64Array;
  private readonly posEmbed: Matrix;
  private readonly lnPre: LayerNormParams;
  private readonly blocks: BlockParams[];
  private readonly lnPost: LayerNormParams;
  private readonly proj: Matrix;

  constructor(arrays: NamedArrays, cfg: ModelConfig) {
    validateModelConfig(cfg);
    this.cfg = cfg;
    this.gridSize = cfg.imageSize / cfg.patchSize;
    this.tokens = this.gridSize * this.gridSize + 1;
    this.patchW = asMatrix(arrays, "visual.patch_embed.weight");
    this.clsEmbed = asVector(arrays, "visual.class_embedding");
    this.posEmbed = asMatrix(arrays, "visual.positional_embedding");
    this.lnPre = { gain: asVector(arrays, "visual.ln_pre.gain"), bias: asVector(arrays, "visual.ln_pre.bias") };
    this.blocks = loadBlocks(arrays, "visual", cfg.layers);
    this.lnPost = { gain: asVector(arrays, "visual.ln_post.gain"), bias: asVector(arrays, "visual.ln_post.bias") };
    this.proj = asMatrix(arrays, "visual.proj");
  }

  /**
   * patches: (tokens - 1) x (patchSize^2 * 3), channel-major within a patch,
   * patch order row-major over the grid.
   */
  forward(
    patches: Matrix,
    records: AttentionRecord[] | null = null,
    gates: Matrix[][] | null = null,
  ): { embedding: Float64Array; cache: EncodeCache } {
    if (patches.rows !== this.tokens - 1 || patches.cols !== this.patchW.rows) {
      throw new Error(
        `patch matrix ${patches.rows}x${patches.cols} does not match config ` +
          `(${this.tokens - 1}x${this.patchW.rows})`,
      );
    }
    const embedded = matmul(patches, this.patchW);
    const x = new Matrix(this.tokens, this.cfg.width);
    x.data.set(this.clsEmbed, 0);
    x.data.set(embedded.data, this.cfg.width);
    addInPlace(x, this.posEmbed);
    let { out: current } = layerNorm(x, this.lnPre);
    const blockCaches: BlockCache[] = [];
    for (let l = 0; l < this.blocks.length; l++) {
      const record = records ? records[l] : null;
      const { out, cache } = blockForward(
        current, this.blocks[l], this.cfg.heads, record, gates ? gates[l] : null, false,
      );
      blockCaches.push(cache);
      current = out;
    }
    const cls = new Matrix(1, this.cfg.width, current.data.slice(0, this.cfg.width));
    const { out: clsNorm, cache: lnPostCache } = layerNorm(cls, this.lnPost);
    const embedding = matmul(clsNorm, this.proj).data;
    return { embedding, cache: { blocks: blockCaches, lnPost: lnPostCache, clsFinal: cls, embedding } };
  }

  /**
   * d(cosine similarity)/d(embedding) for the cached unnormalized embedding.
   */
  static embeddingGradient(embedding: Float64Array, textEmbedding: Float64Array): Float64Array {
    const tHat = l2Normalize(textEmbedding);
    let norm = 0;
    for (const v of embedding) norm += v * v;
    norm = Math.sqrt(norm);
    const eHat = new Float64Array(embedding.length);
    for (let i = 0; i < embedding.length; i++) eHat[i] = embedding[i] / norm;
    const cos = dot(eHat, tHat);
    const dE = new Float64Array(embedding.length);
    for (let i = 0; i < embedding.length; i++) dE[i] = (tHat[i] - cos * eHat[i]) / norm;
    return dE;
  }

  /**
   * Backward pass of cosine similarity between the cached embedding and
   * textEmbedding; fills records[l].grad with d(similarity)/d(attention).
   */
  backward(cache: EncodeCache, textEmbedding: Float64Array, records: AttentionRecord[]): void {
    this.backwardSeed(cache, ImageEncoder.embeddingGradient(cache.embedding, textEmbedding), records);
  }

  /**
   * Backward pass from an arbitrary gradient w.r.t. the unnormalized joint
   * embedding; fills records[l].grad.
   */
  backwardSeed(cache: EncodeCache, dE: Float64Array, records: AttentionRecord[]): void {
    if (records.length !== this.blocks.length) {
      throw new Error("one attention record per block required");
    }
    const dClsNorm = matmulT(new Matrix(1, dE.length, Float64Array.from(dE)), this.proj);
    const dCls = layerNormBackward(dClsNorm, this.lnPost, cache.lnPost);
    let dX = new Matrix(this.tokens, this.cfg.width);
    dX.data.set(dCls.data, 0);
    for (let l = this.blocks.length - 1; l >= 0; l--) {
      records[l].grad = [];
      dX = blockBackward(dX, this.blocks[l], cache.blocks[l], this.cfg.heads, records[l]);
    }
  }

  newRecords(): AttentionRecord[] {
    return this.blocks.map(() => ({ attn: [], grad: [] }));
  }
}

export class TextEncoder {
  readonly cfg: ModelConfig;
  private readonly tokenEmbed: Matrix;
  private readonly posEmbed: Matrix;
  private readonly blocks: BlockParams[];
  private readonly lnFinal: LayerNormParams;
  private readonly proj: Matrix;

  constructor(arrays: NamedArrays, cfg: ModelConfig) {
    validateModelConfig(cfg);
    this.cfg = cfg;
    this.tokenEmbed = asMatrix(arrays, "text.token_embedding");
    this.posEmbed = asMatrix(arrays, "text.positional_embedding");
    this.blocks = loadBlocks(arrays, "text", cfg.textLayers);
    this.lnFinal = { gain: asVector(arrays, "text.ln_final.gain"), bias: asVector(arrays, "text.ln_final.bias") };
    this.proj = asMatrix(arrays, "text.proj");
  }

  /** Token ids (already padded/truncated to contextLength) to joint embedding. */
  forward(tokenIds: number[], eotIndex: number): Float64Array {
    const n = this.cfg.contextLength;
    if (tokenIds.length !== n) throw new Error(`expected ${n} token ids, got ${tokenIds.length}`);
    if (eotIndex < 0 || eotIndex >= n) throw new Error("eot index out of range");
    const x = new Matrix(n, this.cfg.textWidth);
    for (let i = 0; i < n; i++) {
      const id = tokenIds[i];
      if (id < 0 || id >= this.cfg.vocabSize) throw new Error(`token id ${id} out of vocabulary`);
      x.data.set(
        this.tokenEmbed.data.subarray(id * this.cfg.textWidth, (id + 1) * this.cfg.textWidth),
        i * this.cfg.textWidth,
      );
    }
    addInPlace(x, this.posEmbed);
    let current = x;
    for (const block of this.blocks) {
      current = blockForward(current, block, this.cfg.textHeads, null, null, true).out;
    }
    const { out: normed } = layerNorm(current, this.lnFinal);
    const eot = new Matrix(1, this.cfg.textWidth,
      normed.data.slice(eotIndex * this.cfg.textWidth, (eotIndex + 1) * this.cfg.textWidth));
    return matmul(eot, this.proj).data;
  }
}

export function cosineSimilarity(a: Float64Array, b: Float64Array): number {
  return dot(l2Normalize(a), l2Normalize(b));
}
