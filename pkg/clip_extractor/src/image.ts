/**
 * Image container plus the preprocessing used around the encoder: crops,
 * bilinear resize, horizontal flip, RGB jitter, normalization, patch
 * extraction, and PPM (P6) file I/O.
 */

import { readFileSync, writeFileSync, renameSync } from "node:fs";
import { Matrix } from "./tensor.js";

/** Row-major interleaved RGB in [0, 1]. */
export class Image {
  readonly width: number;
  readonly height: number;
  readonly data: Float64Array; // length 3 * width * height, RGB per pixel

  constructor(width: number, height: number, data?: Float64Array) {
    this.width = width;
    this.height = height;
    this.data = data ?? new Float64Array(3 * width * height);
    if (this.data.length !== 3 * width * height) {
      throw new Error(`image buffer length ${this.data.length} != 3*${width}*${height}`);
    }
  }

  clone(): Image {
    return new Image(this.width, this.height, this.data.slice());
  }
}

export function cropImage(img: Image, x: number, y: number, size: number): Image {
  if (x < 0 || y < 0 || x + size > img.width || y + size > img.height) {
    throw new Error(`crop [${x},${y}]+${size} exceeds ${img.width}x${img.height}`);
  }
  const out = new Image(size, size);
  for (let r = 0; r < size; r++) {
    const src = 3 * ((y + r) * img.width + x);
    out.data.set(img.data.subarray(src, src + 3 * size), 3 * r * size);
  }
  return out;
}

/** Bilinear resample with pixel-center alignment. */
export function resizeImage(img: Image, width: number, height: number): Image {
  const out = new Image(width, height);
  const sx = img.width / width;
  const sy = img.height / height;
  for (let r = 0; r < height; r++) {
    const fy = Math.min(Math.max((r + 0.5) * sy - 0.5, 0), img.height - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const wy = fy - y0;
    for (let c = 0; c < width; c++) {
      const fx = Math.min(Math.max((c + 0.5) * sx - 0.5, 0), img.width - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const wx = fx - x0;
      for (let ch = 0; ch < 3; ch++) {
        const p00 = img.data[3 * (y0 * img.width + x0) + ch];
        const p01 = img.data[3 * (y0 * img.width + x1) + ch];
        const p10 = img.data[3 * (y1 * img.width + x0) + ch];
        const p11 = img.data[3 * (y1 * img.width + x1) + ch];
        out.data[3 * (r * width + c) + ch] =
          (1 - wy) * ((1 - wx) * p00 + wx * p01) + wy * ((1 - wx) * p10 + wx * p11);
      }
    }
  }
  return out;
}

/** Bilinear resample of a single-channel map (same sampling as resizeImage). */
export function resizeMap(values: Float64Array, srcW: number, srcH: number, width: number, height: number): Float64Array {
  if (values.length !== srcW * srcH) throw new Error("map size mismatch");
  const out = new Float64Array(width * height);
  const sx = srcW / width;
  const sy = srcH / height;
  for (let r = 0; r < height; r++) {
    const fy = Math.min(Math.max((r + 0.5) * sy - 0.5, 0), srcH - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, srcH - 1);
    const wy = fy - y0;
    for (let c = 0; c < width; c++) {
      const fx = Math.min(Math.max((c + 0.5) * sx - 0.5, 0), srcW - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, srcW - 1);
      const wx = fx - x0;
      out[r * width + c] =
        (1 - wy) * ((1 - wx) * values[y0 * srcW + x0] + wx * values[y0 * srcW + x1]) +
        wy * ((1 - wx) * values[y1 * srcW + x0] + wx * values[y1 * srcW + x1]);
    }
  }
  return out;
}

export function flipHorizontal(img: Image): Image {
  const out = new Image(img.width, img.height);
  for (let r = 0; r < img.height; r++) {
    for (let c = 0; c < img.width; c++) {
      const src = 3 * (r * img.width + (img.width - 1 - c));
      const dst = 3 * (r * img.width + c);
      out.data[dst] = img.data[src];
      out.data[dst + 1] = img.data[src + 1];
      out.data[dst + 2] = img.data[src + 2];
    }
  }
  return out;
}

export function flipMapHorizontal(values: Float64Array, width: number, height: number): Float64Array {
  const out = new Float64Array(values.length);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      out[r * width + c] = values[r * width + (width - 1 - c)];
    }
  }
  return out;
}

export interface RgbJitter {
  brightness: number; // multiplicative
  contrast: number; // multiplicative around the mean
  saturation: number; // multiplicative toward luma
}

/** Draw a jitter with each factor in [1-strength, 1+strength]. */
export function sampleJitter(rng: () => number, strength = 0.2): RgbJitter {
  const draw = () => 1 + strength * (2 * rng() - 1);
  return { brightness: draw(), contrast: draw(), saturation: draw() };
}

export function applyJitter(img: Image, jitter: RgbJitter): Image {
  const out = img.clone();
  const n = img.width * img.height;
  let mean = 0;
  for (const v of out.data) mean += v;
  mean /= out.data.length;
  for (let i = 0; i < n; i++) {
    const base = 3 * i;
    let r = out.data[base] * jitter.brightness;
    let g = out.data[base + 1] * jitter.brightness;
    let b = out.data[base + 2] * jitter.brightness;
    r = mean + (r - mean) * jitter.contrast;
    g = mean + (g - mean) * jitter.contrast;
    b = mean + (b - mean) * jitter.contrast;
    const luma = 0.299 * r + 0.587 * g + 0.114 * b;
    r = luma + (r - luma) * jitter.saturation;
    g = luma + (g - luma) * jitter.saturation;
    b = luma + (b - luma) * jitter.saturation;
    out.data[base] = Math.min(Math.max(r, 0), 1);
    out.data[base + 1] = Math.min(Math.max(g, 0), 1);
    out.data[base + 2] = Math.min(Math.max(b, 0), 1);
  }
  return out;
}

export const IDENTITY_JITTER: RgbJitter = { brightness: 1, contrast: 1, saturation: 1 };

const CLIP_MEAN = [0.48145466, 0.4578275, 0.40821073];
const CLIP_STD = [0.26862954, 0.26130258, 0.27577711];

/**
 * Normalize and cut a square image into the patch matrix the encoder
 * consumes: one row per patch (row-major over the grid), channel-major
 * within the patch.
 */
export function patchify(img: Image, patchSize: number): Matrix {
  if (img.width !== img.height || img.width % patchSize !== 0) {
    throw new Error(`cannot patchify ${img.width}x${img.height} with patch ${patchSize}`);
  }
  const grid = img.width / patchSize;
  const patchDim = 3 * patchSize * patchSize;
  const out = new Matrix(grid * grid, patchDim);
  for (let py = 0; py < grid; py++) {
    for (let px = 0; px < grid; px++) {
      const row = (py * grid + px) * patchDim;
      let idx = 0;
      for (let ch = 0; ch < 3; ch++) {
        for (let r = 0; r < patchSize; r++) {
          for (let c = 0; c < patchSize; c++) {
            const v = img.data[3 * ((py * patchSize + r) * img.width + px * patchSize + c) + ch];
            out.data[row + idx] = (v - CLIP_MEAN[ch]) / CLIP_STD[ch];
            idx += 1;
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PPM (P6) I/O

export function readPpm(path: string): Image {
  const raw = readFileSync(path);
  if (raw.toString("ascii", 0, 2) !== "P6") throw new Error(`${path}: not a P6 PPM file`);
  let off = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (off < raw.length && /\s/.test(String.fromCharCode(raw[off]))) off++;
    if (raw[off] === 0x23) { // comment
      while (off < raw.length && raw[off] !== 0x0a) off++;
      continue;
    }
    let start = off;
    while (off < raw.length && !/\s/.test(String.fromCharCode(raw[off]))) off++;
    fields.push(parseInt(raw.toString("ascii", start, off), 10));
  }
  off++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (!(width > 0) || !(height > 0) || !(maxval > 0) || maxval > 255) {
    throw new Error(`${path}: unsupported PPM header`);
  }
  if (raw.length - off < 3 * width * height) throw new Error(`${path}: truncated PPM payload`);
  const img = new Image(width, height);
  for (let i = 0; i < 3 * width * height; i++) img.data[i] = raw[off + i] / maxval;
  return img;
}

export function writePpm(path: string, img: Image): void {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "ascii");
  const body = Buffer.alloc(3 * img.width * img.height);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.min(255, Math.max(0, Math.round(img.data[i] * 255)));
  }
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, Buffer.concat([header, body]));
  renameSync(tmp, path);
}
