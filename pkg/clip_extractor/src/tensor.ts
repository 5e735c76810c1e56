/**
 * Minimal dense-math kernels on Float64Array.
 *
 * All model math runs in 64-bit; only the final map compositing (see
 * aggregate.ts) is done in 32-bit, where bit-reproducibility across
 * implementations matters.
 */

export class Matrix {
  readonly rows: number;
  readonly cols: number;
  readonly data: Float64Array;

  constructor(rows: number, cols: number, data?: Float64Array) {
    if (rows < 0 || cols < 0 || !Number.isInteger(rows) || !Number.isInteger(cols)) {
      throw new Error(`invalid matrix shape ${rows}x${cols}`);
    }
    this.rows = rows;
    this.cols = cols;
    this.data = data ?? new Float64Array(rows * cols);
    if (this.data.length !== rows * cols) {
      throw new Error(`data length ${this.data.length} != ${rows}x${cols}`);
    }
  }

  get(r: number, c: number): number {
    return this.data[r * this.cols + c];
  }

  set(r: number, c: number, v: number): void {
    this.data[r * this.cols + c] = v;
  }

  clone(): Matrix {
    return new Matrix(this.rows, this.cols, this.data.slice());
  }

  static zeros(rows: number, cols: number): Matrix {
    return new Matrix(rows, cols);
  }
}

/** out = a @ b, with a (m x k) and b (k x n). */
export function matmul(a: Matrix, b: Matrix): Matrix {
  if (a.cols !== b.rows) {
    throw new Error(`matmul shape mismatch: ${a.rows}x${a.cols} @ ${b.rows}x${b.cols}`);
  }
  const m = a.rows, k = a.cols, n = b.cols;
  const out = new Matrix(m, n);
  const ad = a.data, bd = b.data, od = out.data;
  for (let i = 0; i < m; i++) {
    const arow = i * k;
    const orow = i * n;
    for (let p = 0; p < k; p++) {
      const av = ad[arow + p];
      if (av === 0) continue;
      const brow = p * n;
      for (let j = 0; j < n; j++) {
        od[orow + j] += av * bd[brow + j];
      }
    }
  }
  return out;
}

/** out = a @ b^T, with a (m x k) and b (n x k). */
export function matmulT(a: Matrix, b: Matrix): Matrix {
  if (a.cols !== b.cols) {
    throw new Error(`matmulT shape mismatch: ${a.rows}x${a.cols} @ (${b.rows}x${b.cols})^T`);
  }
  const m = a.rows, k = a.cols, n = b.rows;
  const out = new Matrix(m, n);
  const ad = a.data, bd = b.data, od = out.data;
  for (let i = 0; i < m; i++) {
    const arow = i * k;
    for (let j = 0; j < n; j++) {
      const brow = j * k;
      let s = 0;
      for (let p = 0; p < k; p++) s += ad[arow + p] * bd[brow + p];
      od[i * n + j] = s;
    }
  }
  return out;
}

/** out = a^T @ b, with a (k x m) and b (k x n). */
export function matmulTA(a: Matrix, b: Matrix): Matrix {
  if (a.rows !== b.rows) {
    throw new Error(`matmulTA shape mismatch: (${a.rows}x${a.cols})^T @ ${b.rows}x${b.cols}`);
  }
  const k = a.rows, m = a.cols, n = b.cols;
  const out = new Matrix(m, n);
  const ad = a.data, bd = b.data, od = out.data;
  for (let p = 0; p < k; p++) {
    const arow = p * m;
    const brow = p * n;
    for (let i = 0; i < m; i++) {
      const av = ad[arow + i];
      if (av === 0) continue;
      const orow = i * n;
      for (let j = 0; j < n; j++) od[orow + j] += av * bd[brow + j];
    }
  }
  return out;
}

export function addInPlace(a: Matrix, b: Matrix): void {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("addInPlace shape mismatch");
  for (let i = 0; i < a.data.length; i++) a.data[i] += b.data[i];
}

export function addBiasInPlace(a: Matrix, bias: Float64Array): void {
  if (bias.length !== a.cols) throw new Error("bias length mismatch");
  for (let r = 0; r < a.rows; r++) {
    const row = r * a.cols;
    for (let c = 0; c < a.cols; c++) a.data[row + c] += bias[c];
  }
}

export interface LayerNormParams {
  gain: Float64Array;
  bias: Float64Array;
}

export interface LayerNormCache {
  input: Matrix;
  normalized: Matrix; // x-hat before gain/bias
  invStd: Float64Array; // per row
}

const LN_EPS = 1e-5;

export function layerNorm(x: Matrix, p: LayerNormParams): { out: Matrix; cache: LayerNormCache } {
  const d = x.cols;
  if (p.gain.length !== d || p.bias.length !== d) throw new Error("layernorm param width mismatch");
  const out = new Matrix(x.rows, d);
  const normalized = new Matrix(x.rows, d);
  const invStd = new Float64Array(x.rows);
  for (let r = 0; r < x.rows; r++) {
    const row = r * d;
    let mu = 0;
    for (let c = 0; c < d; c++) mu += x.data[row + c];
    mu /= d;
    let varSum = 0;
    for (let c = 0; c < d; c++) {
      const v = x.data[row + c] - mu;
      varSum += v * v;
    }
    const inv = 1 / Math.sqrt(varSum / d + LN_EPS);
    invStd[r] = inv;
    for (let c = 0; c < d; c++) {
      const xh = (x.data[row + c] - mu) * inv;
      normalized.data[row + c] = xh;
      out.data[row + c] = xh * p.gain[c] + p.bias[c];
    }
  }
  return { out, cache: { input: x, normalized, invStd } };
}

/** Gradient w.r.t. the layer-norm input (parameters are frozen at inference). */
export function layerNormBackward(dOut: Matrix, p: LayerNormParams, cache: LayerNormCache): Matrix {
  const d = dOut.cols;
  const dx = new Matrix(dOut.rows, d);
  for (let r = 0; r < dOut.rows; r++) {
    const row = r * d;
    let meanG = 0;
    let meanGX = 0;
    for (let c = 0; c < d; c++) {
      const g = dOut.data[row + c] * p.gain[c];
      meanG += g;
      meanGX += g * cache.normalized.data[row + c];
    }
    meanG /= d;
    meanGX /= d;
    const inv = cache.invStd[r];
    for (let c = 0; c < d; c++) {
      const g = dOut.data[row + c] * p.gain[c];
      dx.data[row + c] = (g - meanG - cache.normalized.data[row + c] * meanGX) * inv;
    }
  }
  return dx;
}

/** Row-wise softmax. */
export function softmaxRows(x: Matrix): Matrix {
  const out = new Matrix(x.rows, x.cols);
  for (let r = 0; r < x.rows; r++) {
    const row = r * x.cols;
    let max = -Infinity;
    for (let c = 0; c < x.cols; c++) max = Math.max(max, x.data[row + c]);
    let sum = 0;
    for (let c = 0; c < x.cols; c++) {
      const e = Math.exp(x.data[row + c] - max);
      out.data[row + c] = e;
      sum += e;
    }
    for (let c = 0; c < x.cols; c++) out.data[row + c] /= sum;
  }
  return out;
}

/** d(softmax)/d(input) given the softmax output a and upstream gradient da. */
export function softmaxRowsBackward(dA: Matrix, a: Matrix): Matrix {
  const out = new Matrix(dA.rows, dA.cols);
  for (let r = 0; r < dA.rows; r++) {
    const row = r * dA.cols;
    let dot = 0;
    for (let c = 0; c < dA.cols; c++) dot += dA.data[row + c] * a.data[row + c];
    for (let c = 0; c < dA.cols; c++) {
      out.data[row + c] = a.data[row + c] * (dA.data[row + c] - dot);
    }
  }
  return out;
}

const QUICK_GELU_SLOPE = 1.702;

export function quickGelu(x: Matrix): Matrix {
  const out = new Matrix(x.rows, x.cols);
  for (let i = 0; i < x.data.length; i++) {
    const v = x.data[i];
    out.data[i] = v / (1 + Math.exp(-QUICK_GELU_SLOPE * v));
  }
  return out;
}

export function quickGeluBackward(dOut: Matrix, x: Matrix): Matrix {
  const out = new Matrix(x.rows, x.cols);
  for (let i = 0; i < x.data.length; i++) {
    const v = x.data[i];
    const s = 1 / (1 + Math.exp(-QUICK_GELU_SLOPE * v));
    out.data[i] = dOut.data[i] * (s + v * QUICK_GELU_SLOPE * s * (1 - s));
  }
  return out;
}

export function l2Normalize(v: Float64Array): Float64Array {
  let n = 0;
  for (const x of v) n += x * x;
  n = Math.sqrt(n);
  if (n === 0) throw new Error("cannot normalize a zero vector");
  const out = new Float64Array(v.length);
  for (let i = 0; i < v.length; i++) out[i] = v[i] / n;
  return out;
}

export function dot(a: Float64Array, b: Float64Array): number {
  if (a.length !== b.length) throw new Error("dot length mismatch");
  let s = 0;
  for (let i = 0; i < a.length; i++) s += a[i] * b[i];
  return s;
}
