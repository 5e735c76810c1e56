import { describe, expect, it } from "vitest";
import { VIT_TINY } from "../src/config.js";
import { patchify } from "../src/image.js";
import { ImageEncoder, TextEncoder, cosineSimilarity } from "../src/model.js";
import { Matrix, l2Normalize, dot } from "../src/tensor.js";
import { tokenize } from "../src/tokenizer.js";
import { seededRng, seededWeights } from "../src/weights.js";
import { syntheticImage } from "../src/benchmark.js";

const CFG = VIT_TINY;
const WEIGHTS = seededWeights(CFG, 7);

function encoderInput() {
  const img = syntheticImage(CFG.imageSize, 3);
  return patchify(img, CFG.patchSize);
}

function randomEmbedding(seed: number): Float64Array {
  const rng = seededRng(seed);
  return Float64Array.from({ length: CFG.embedDim }, () => 2 * rng() - 1);
}

describe("image encoder", () => {
  it("is deterministic and produces the configured embedding width", () => {
    const enc = new ImageEncoder(WEIGHTS, CFG);
    const patches = encoderInput();
    const a = enc.forward(patches).embedding;
    const b = enc.forward(patches).embedding;
    expect(a.length).toBe(CFG.embedDim);
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it("captures one attention record per layer with one map per head", () => {
    const enc = new ImageEncoder(WEIGHTS, CFG);
    const records = enc.newRecords();
    const { cache } = enc.forward(encoderInput(), records);
    expect(records.length).toBe(CFG.layers);
    for (const r of records) {
      expect(r.attn.length).toBe(CFG.heads);
      for (const a of r.attn) {
        expect(a.rows).toBe(enc.tokens);
        expect(a.cols).toBe(enc.tokens);
      }
    }
    enc.backward(cache, randomEmbedding(5), records);
    for (const r of records) expect(r.grad.length).toBe(CFG.heads);
  });

  it("rejects patch matrices of the wrong shape", () => {
    const enc = new ImageEncoder(WEIGHTS, CFG);
    expect(() => enc.forward(new Matrix(3, 5))).toThrow(/does not match config/);
  });

  // The attention gradients are checked against finite differences by
  // inserting multiplicative gates G on each softmax output: at G = 1 the
  // forward pass is unchanged and d(similarity)/dG equals the captured
  // attention gradient entry.
  it("attention gradients match finite differences through gates", () => {
    const enc = new ImageEncoder(WEIGHTS, CFG);
    const patches = encoderInput();
    const text = randomEmbedding(9);
    const tHat = l2Normalize(text);

    const records = enc.newRecords();
    const { cache } = enc.forward(patches, records);
    enc.backward(cache, text, records);

    const unitGates = (): Matrix[][] =>
      Array.from({ length: CFG.layers }, () =>
        Array.from({ length: CFG.heads }, () => {
          const g = new Matrix(enc.tokens, enc.tokens);
          g.data.fill(1);
          return g;
        }),
      );
    const similarityWithGates = (gates: Matrix[][]): number => {
      const { embedding } = enc.forward(patches, null, gates);
      return dot(l2Normalize(embedding), tHat);
    };

    const h = 1e-5;
    const rng = seededRng(21);
    let checked = 0;
    let maxRel = 0;
    while (checked < 24) {
      const l = Math.floor(rng() * CFG.layers);
      const hd = Math.floor(rng() * CFG.heads);
      const idx = Math.floor(rng() * enc.tokens * enc.tokens);
      // d(similarity)/dG at G = 1 is the attention gradient times the
      // (ungated) attention value that the gate scales.
      const analytic = records[l].grad[hd].data[idx] * records[l].attn[hd].data[idx];
      const gates = unitGates();
      gates[l][hd].data[idx] = 1 + h;
      const plus = similarityWithGates(gates);
      gates[l][hd].data[idx] = 1 - h;
      const minus = similarityWithGates(gates);
      const fd = (plus - minus) / (2 * h);
      const scale = Math.max(Math.abs(fd), Math.abs(analytic));
      if (scale < 1e-7) continue; // below finite-difference resolution
      maxRel = Math.max(maxRel, Math.abs(fd - analytic) / scale);
      checked += 1;
    }
    expect(maxRel).toBeLessThan(1e-4);
  });

  it("embeddingGradient matches finite differences of the cosine", () => {
    const rng = seededRng(31);
    const e = Float64Array.from({ length: CFG.embedDim }, () => 2 * rng() - 1);
    const t = Float64Array.from({ length: CFG.embedDim }, () => 2 * rng() - 1);
    const dE = ImageEncoder.embeddingGradient(e, t);
    const cos = (v: Float64Array) => dot(l2Normalize(v), l2Normalize(t));
    const h = 1e-6;
    for (let i = 0; i < e.length; i++) {
      const orig = e[i];
      e[i] = orig + h;
      const plus = cos(e);
      e[i] = orig - h;
      const minus = cos(e);
      e[i] = orig;
      expect(dE[i]).toBeCloseTo((plus - minus) / (2 * h), 6);
    }
  });
});

describe("text encoder", () => {
  it("is causal: padding after the end token never changes the embedding", () => {
    const enc = new TextEncoder(WEIGHTS, CFG);
    const { ids, eotIndex } = tokenize("a photo of a mug", CFG);
    const base = enc.forward(ids, eotIndex);
    const altered = ids.slice();
    for (let i = eotIndex + 1; i < altered.length; i++) altered[i] = 3 + i; // arbitrary ids
    const after = enc.forward(altered, eotIndex);
    for (let i = 0; i < base.length; i++) {
      expect(after[i]).toBeCloseTo(base[i], 12);
    }
  });

  it("different labels produce different embeddings", () => {
    const enc = new TextEncoder(WEIGHTS, CFG);
    const a = tokenize("red mug", CFG);
    const b = tokenize("blue chair", CFG);
    const ea = enc.forward(a.ids, a.eotIndex);
    const eb = enc.forward(b.ids, b.eotIndex);
    expect(cosineSimilarity(ea, eb)).toBeLessThan(0.9999);
  });

  it("validates token ids and eot index", () => {
    const enc = new TextEncoder(WEIGHTS, CFG);
    expect(() => enc.forward([1, 2], 1)).toThrow(/token ids/);
    const { ids } = tokenize("mug", CFG);
    expect(() => enc.forward(ids, CFG.contextLength)).toThrow(/eot index/);
    const bad = ids.slice();
    bad[0] = CFG.vocabSize;
    expect(() => enc.forward(bad, 2)).toThrow(/vocabulary/);
  });
});
