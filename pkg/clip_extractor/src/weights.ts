/**
 * Model parameters: seeded initialization and CLPW binary serialization.
 *
 * CLPW format: magic "CLPW", version u32, count u32, then per array:
 * [name_len u32, name UTF-8, ndim u32, dims u32..., values f32 LE].
 */

import { readFileSync, writeFileSync, renameSync } from "node:fs";
import { ModelConfig, validateModelConfig } from "./config.js";

const CLPW_MAGIC = "CLPW";
const CLPW_VERSION = 1;

export type NamedArrays = Map<string, { dims: number[]; data: Float64Array }>;

/** sfc32 PRNG; fully determined by the four seed words. */
export function sfc32(a: number, b: number, c: number, d: number): () => number {
  return () => {
    a |= 0; b |= 0; c |= 0; d |= 0;
    const t = (a + b | 0) + d | 0;
    d = d + 1 | 0;
    a = b ^ b >>> 9;
    b = c + (c << 3) | 0;
    c = c << 21 | c >>> 11;
    c = c + t | 0;
    return (t >>> 0) / 4294967296;
  };
}

export function seededRng(seed: number): () => number {
  // splitmix32 expansion of the scalar seed into sfc32 state
  let s = seed >>> 0;
  const next = () => {
    s = (s + 0x9e3779b9) | 0;
    let z = s >>> 0;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad) >>> 0;
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97) >>> 0;
    return (z ^ (z >>> 15)) >>> 0;
  };
  const rng = sfc32(next(), next(), next(), next());
  for (let i = 0; i < 12; i++) rng();
  return rng;
}

function gaussianPairs(rng: () => number): () => number {
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    while (u === 0) u = rng();
    v = rng();
    const r = Math.sqrt(-2 * Math.log(u));
    spare = r * Math.sin(2 * Math.PI * v);
    return r * Math.cos(2 * Math.PI * v);
  };
}

function size(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

/** Shape table for a CLIP dual encoder of the given configuration. */
export function parameterShapes(cfg: ModelConfig): Map<string, number[]> {
  validateModelConfig(cfg);
  const shapes = new Map<string, number[]>();
  const patchDim = cfg.patchSize * cfg.patchSize * 3;
  const tokens = (cfg.imageSize / cfg.patchSize) ** 2 + 1;
  shapes.set("visual.patch_embed.weight", [patchDim, cfg.width]);
  shapes.set("visual.class_embedding", [cfg.width]);
  shapes.set("visual.positional_embedding", [tokens, cfg.width]);
  shapes.set("visual.ln_pre.gain", [cfg.width]);
  shapes.set("visual.ln_pre.bias", [cfg.width]);
  for (let l = 0; l < cfg.layers; l++) {
    addBlockShapes(shapes, `visual.blocks.${l}`, cfg.width);
  }
  shapes.set("visual.ln_post.gain", [cfg.width]);
  shapes.set("visual.ln_post.bias", [cfg.width]);
  shapes.set("visual.proj", [cfg.width, cfg.embedDim]);

  shapes.set("text.token_embedding", [cfg.vocabSize, cfg.textWidth]);
  shapes.set("text.positional_embedding", [cfg.contextLength, cfg.textWidth]);
  for (let l = 0; l < cfg.textLayers; l++) {
    addBlockShapes(shapes, `text.blocks.${l}`, cfg.textWidth);
  }
  shapes.set("text.ln_final.gain", [cfg.textWidth]);
  shapes.set("text.ln_final.bias", [cfg.textWidth]);
  shapes.set("text.proj", [cfg.textWidth, cfg.embedDim]);
  return shapes;
}

function addBlockShapes(shapes: Map<string, number[]>, prefix: string, width: number): void {
  shapes.set(`${prefix}.ln1.gain`, [width]);
  shapes.set(`${prefix}.ln1.bias`, [width]);
  shapes.set(`${prefix}.attn.qkv.weight`, [width, 3 * width]);
  shapes.set(`${prefix}.attn.qkv.bias`, [3 * width]);
  shapes.set(`${prefix}.attn.out.weight`, [width, width]);
  shapes.set(`${prefix}.attn.out.bias`, [width]);
  shapes.set(`${prefix}.ln2.gain`, [width]);
  shapes.set(`${prefix}.ln2.bias`, [width]);
  shapes.set(`${prefix}.mlp.fc.weight`, [width, 4 * width]);
  shapes.set(`${prefix}.mlp.fc.bias`, [4 * width]);
  shapes.set(`${prefix}.mlp.proj.weight`, [4 * width, width]);
  shapes.set(`${prefix}.mlp.proj.bias`, [width]);
}

/**
 * Deterministic scaled-Gaussian initialization keyed on the seed.
 *
 * Stands in when no pretrained CLPW file is supplied: every structural and
 * timing property of extraction is weight-independent, so tests and
 * benchmarks run against these weights.
 */
export function seededWeights(cfg: ModelConfig, seed: number): NamedArrays {
  const gauss = gaussianPairs(seededRng(seed));
  const out: NamedArrays = new Map();
  for (const [name, dims] of parameterShapes(cfg)) {
    const data = new Float64Array(size(dims));
    const fanIn = dims.length > 1 ? dims[0] : dims[0];
    const scale = name.endsWith(".bias") || name.includes("ln")
      ? 0.02
      : 1 / Math.sqrt(fanIn);
    for (let i = 0; i < data.length; i++) data[i] = gauss() * scale;
    if (name.endsWith(".gain")) {
      for (let i = 0; i < data.length; i++) data[i] = 1 + 0.02 * data[i];
    }
    out.set(name, { dims, data });
  }
  return out;
}

export function saveWeights(path: string, arrays: NamedArrays): void {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(12);
  header.write(CLPW_MAGIC, 0, "ascii");
  header.writeUInt32LE(CLPW_VERSION, 4);
  header.writeUInt32LE(arrays.size, 8);
  chunks.push(header);
  for (const [name, { dims, data }] of arrays) {
    const nameBytes = Buffer.from(name, "utf-8");
    const rec = Buffer.alloc(4 + nameBytes.length + 4 + 4 * dims.length);
    let off = 0;
    rec.writeUInt32LE(nameBytes.length, off); off += 4;
    nameBytes.copy(rec, off); off += nameBytes.length;
    rec.writeUInt32LE(dims.length, off); off += 4;
    for (const d of dims) { rec.writeUInt32LE(d, off); off += 4; }
    chunks.push(rec);
    const values = Buffer.alloc(4 * data.length);
    for (let i = 0; i < data.length; i++) values.writeFloatLE(Math.fround(data[i]), 4 * i);
    chunks.push(values);
  }
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, Buffer.concat(chunks));
  renameSync(tmp, path);
}

export function loadWeights(path: string, cfg: ModelConfig): NamedArrays {
  const raw = readFileSync(path);
  if (raw.length < 12 || raw.toString("ascii", 0, 4) !== CLPW_MAGIC) {
    throw new Error(`${path}: bad CLPW magic`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== CLPW_VERSION) throw new Error(`${path}: unsupported CLPW version ${version}`);
  const count = raw.readUInt32LE(8);
  const expected = parameterShapes(cfg);
  const out: NamedArrays = new Map();
  let off = 12;
  for (let i = 0; i < count; i++) {
    const nameLen = raw.readUInt32LE(off); off += 4;
    const name = raw.toString("utf-8", off, off + nameLen); off += nameLen;
    const ndim = raw.readUInt32LE(off); off += 4;
    const dims: number[] = [];
    for (let d = 0; d < ndim; d++) { dims.push(raw.readUInt32LE(off)); off += 4; }
    const n = size(dims);
    const data = new Float64Array(n);
    for (let j = 0; j < n; j++) data[j] = raw.readFloatLE(off + 4 * j);
    off += 4 * n;
    out.set(name, { dims, data });
  }
  for (const [name, dims] of expected) {
    const got = out.get(name);
    if (!got) throw new Error(`${path}: missing parameter ${name}`);
    if (got.dims.length !== dims.length || got.dims.some((d, i) => d !== dims[i])) {
      throw new Error(`${path}: parameter ${name} has shape [${got.dims}], expected [${dims}]`);
    }
  }
  if (out.size !== expected.size) throw new Error(`${path}: unexpected extra parameters`);
  return out;
}
