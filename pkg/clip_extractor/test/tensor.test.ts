import { describe, expect, it } from "vitest";
import {
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
} from "../src/tensor.js";
import { seededRng } from "../src/weights.js";

function randomMatrix(rows: number, cols: number, rng: () => number): Matrix {
  const m = new Matrix(rows, cols);
  for (let i = 0; i < m.data.length; i++) m.data[i] = 2 * rng() - 1;
  return m;
}

function naiveMatmul(a: Matrix, b: Matrix): Matrix {
  const out = new Matrix(a.rows, b.cols);
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < b.cols; j++) {
      let s = 0;
      for (let k = 0; k < a.cols; k++) s += a.get(i, k) * b.get(k, j);
      out.set(i, j, s);
    }
  }
  return out;
}

function maxAbsDiff(a: Float64Array, b: Float64Array): number {
  let d = 0;
  for (let i = 0; i < a.length; i++) d = Math.max(d, Math.abs(a[i] - b[i]));
  return d;
}

function transpose(a: Matrix): Matrix {
  const out = new Matrix(a.cols, a.rows);
  for (let i = 0; i < a.rows; i++) for (let j = 0; j < a.cols; j++) out.set(j, i, a.get(i, j));
  return out;
}

describe("matrix products", () => {
  const rng = seededRng(11);

  it("matmul matches the triple-loop definition", () => {
    for (let trial = 0; trial < 20; trial++) {
      const m = 1 + Math.floor(rng() * 6);
      const k = 1 + Math.floor(rng() * 6);
      const n = 1 + Math.floor(rng() * 6);
      const a = randomMatrix(m, k, rng);
      const b = randomMatrix(k, n, rng);
      expect(maxAbsDiff(matmul(a, b).data, naiveMatmul(a, b).data)).toBeLessThan(1e-12);
    }
  });

  it("matmulT(a, b) equals a @ transpose(b)", () => {
    for (let trial = 0; trial < 20; trial++) {
      const a = randomMatrix(1 + Math.floor(rng() * 5), 1 + Math.floor(rng() * 5), rng);
      const b = randomMatrix(1 + Math.floor(rng() * 5), a.cols, rng);
      expect(maxAbsDiff(matmulT(a, b).data, naiveMatmul(a, transpose(b)).data)).toBeLessThan(1e-12);
    }
  });

  it("matmulTA(a, b) equals transpose(a) @ b", () => {
    for (let trial = 0; trial < 20; trial++) {
      const a = randomMatrix(1 + Math.floor(rng() * 5), 1 + Math.floor(rng() * 5), rng);
      const b = randomMatrix(a.rows, 1 + Math.floor(rng() * 5), rng);
      expect(maxAbsDiff(matmulTA(a, b).data, naiveMatmul(transpose(a), b).data)).toBeLessThan(1e-12);
    }
  });

  it("rejects mismatched shapes", () => {
    expect(() => matmul(new Matrix(2, 3), new Matrix(2, 3))).toThrow(/shape/);
    expect(() => matmulT(new Matrix(2, 3), new Matrix(4, 2))).toThrow(/shape/);
    expect(() => matmulTA(new Matrix(2, 3), new Matrix(3, 2))).toThrow(/shape/);
  });
});

describe("element-wise helpers", () => {
  it("addInPlace and addBiasInPlace add what they claim", () => {
    const a = new Matrix(2, 3, Float64Array.from([1, 2, 3, 4, 5, 6]));
    addInPlace(a, new Matrix(2, 3, Float64Array.from([10, 10, 10, 20, 20, 20])));
    expect(Array.from(a.data)).toEqual([11, 12, 13, 24, 25, 26]);
    addBiasInPlace(a, Float64Array.from([1, 2, 3]));
    expect(Array.from(a.data)).toEqual([12, 14, 16, 25, 27, 29]);
  });

  it("l2Normalize yields a unit vector and rejects zero input", () => {
    const v = l2Normalize(Float64Array.from([3, 4]));
    expect(v[0]).toBeCloseTo(0.6, 12);
    expect(v[1]).toBeCloseTo(0.8, 12);
    expect(dot(v, v)).toBeCloseTo(1, 12);
    expect(() => l2Normalize(new Float64Array(4))).toThrow(/zero vector/);
  });
});

describe("layer norm", () => {
  const rng = seededRng(12);

  it("centers and scales rows with unit gain and zero bias", () => {
    const x = randomMatrix(4, 16, rng);
    const p = { gain: new Float64Array(16).fill(1), bias: new Float64Array(16) };
    const { out } = layerNorm(x, p);
    for (let r = 0; r < out.rows; r++) {
      let mu = 0;
      let varSum = 0;
      for (let c = 0; c < out.cols; c++) mu += out.get(r, c);
      mu /= out.cols;
      for (let c = 0; c < out.cols; c++) varSum += (out.get(r, c) - mu) ** 2;
      expect(mu).toBeCloseTo(0, 10);
      // variance is 1 up to the epsilon regularizer
      expect(varSum / out.cols).toBeCloseTo(1, 3);
    }
  });

  it("backward matches central finite differences", () => {
    const x = randomMatrix(3, 8, rng);
    const p = {
      gain: Float64Array.from({ length: 8 }, () => 0.5 + rng()),
      bias: Float64Array.from({ length: 8 }, () => rng() - 0.5),
    };
    const dOut = randomMatrix(3, 8, rng);
    const { cache } = layerNorm(x, p);
    const dx = layerNormBackward(dOut, p, cache);
    const h = 1e-6;
    for (let i = 0; i < x.data.length; i += 5) {
      const orig = x.data[i];
      x.data[i] = orig + h;
      const plus = layerNorm(x, p).out;
      x.data[i] = orig - h;
      const minus = layerNorm(x, p).out;
      x.data[i] = orig;
      let fd = 0;
      for (let j = 0; j < plus.data.length; j++) {
        fd += dOut.data[j] * (plus.data[j] - minus.data[j]);
      }
      fd /= 2 * h;
      expect(dx.data[i]).toBeCloseTo(fd, 5);
    }
  });
});

describe("softmax", () => {
  const rng = seededRng(13);

  it("rows are positive and sum to one, and large inputs do not overflow", () => {
    const x = randomMatrix(3, 7, rng);
    x.data[0] = 1e4;
    const a = softmaxRows(x);
    for (let r = 0; r < a.rows; r++) {
      let s = 0;
      for (let c = 0; c < a.cols; c++) {
        expect(a.get(r, c)).toBeGreaterThanOrEqual(0);
        s += a.get(r, c);
      }
      expect(s).toBeCloseTo(1, 12);
    }
  });

  it("backward matches central finite differences", () => {
    const x = randomMatrix(2, 6, rng);
    const dA = randomMatrix(2, 6, rng);
    const a = softmaxRows(x);
    const dx = softmaxRowsBackward(dA, a);
    const h = 1e-6;
    for (let i = 0; i < x.data.length; i++) {
      const orig = x.data[i];
      x.data[i] = orig + h;
      const plus = softmaxRows(x);
      x.data[i] = orig - h;
      const minus = softmaxRows(x);
      x.data[i] = orig;
      let fd = 0;
      for (let j = 0; j < plus.data.length; j++) {
        fd += dA.data[j] * (plus.data[j] - minus.data[j]);
      }
      fd /= 2 * h;
      expect(dx.data[i]).toBeCloseTo(fd, 6);
    }
  });
});

describe("quick gelu", () => {
  const rng = seededRng(14);

  it("matches x * sigmoid(1.702 x) and its finite-difference derivative", () => {
    const x = randomMatrix(2, 10, rng);
    const y = quickGelu(x);
    for (let i = 0; i < x.data.length; i++) {
      const v = x.data[i];
      expect(y.data[i]).toBeCloseTo(v / (1 + Math.exp(-1.702 * v)), 12);
    }
    const dOut = randomMatrix(2, 10, rng);
    const dx = quickGeluBackward(dOut, x);
    const h = 1e-6;
    for (let i = 0; i < x.data.length; i++) {
      const v = x.data[i];
      const f = (t: number) => t / (1 + Math.exp(-1.702 * t));
      const fd = dOut.data[i] * ((f(v + h) - f(v - h)) / (2 * h));
      expect(dx.data[i]).toBeCloseTo(fd, 6);
    }
  });
});
