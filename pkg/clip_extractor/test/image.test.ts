import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";
import {
  IDENTITY_JITTER,
  Image,
  applyJitter,
  cropImage,
  flipHorizontal,
  flipMapHorizontal,
  patchify,
  readPpm,
  resizeImage,
  resizeMap,
  sampleJitter,
  writePpm,
} from "../src/image.js";
import { seededRng } from "../src/weights.js";
import { syntheticImage } from "../src/benchmark.js";

const tmp = mkdtempSync(join(tmpdir(), "imgtest-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

describe("crop and flip", () => {
  it("cropImage extracts the exact sub-rectangle", () => {
    const img = syntheticImage(8, 1);
    const crop = cropImage(img, 2, 3, 4);
    for (let r = 0; r < 4; r++) {
      for (let c = 0; c < 4; c++) {
        for (let ch = 0; ch < 3; ch++) {
          expect(crop.data[3 * (r * 4 + c) + ch]).toBe(img.data[3 * ((3 + r) * 8 + 2 + c) + ch]);
        }
      }
    }
    expect(() => cropImage(img, 6, 0, 4)).toThrow(/exceeds/);
  });

  it("flipHorizontal is an involution and mirrors columns", () => {
    const img = syntheticImage(6, 2);
    const flipped = flipHorizontal(img);
    expect(flipped.data[0]).toBe(img.data[3 * 5]);
    const twice = flipHorizontal(flipped);
    expect(Array.from(twice.data)).toEqual(Array.from(img.data));
  });

  it("flipMapHorizontal mirrors single-channel maps", () => {
    const values = Float64Array.from([1, 2, 3, 4, 5, 6]);
    const flipped = flipMapHorizontal(values, 3, 2);
    expect(Array.from(flipped)).toEqual([3, 2, 1, 6, 5, 4]);
  });
});

describe("resize", () => {
  it("is the identity at the native size", () => {
    const img = syntheticImage(8, 3);
    const same = resizeImage(img, 8, 8);
    for (let i = 0; i < img.data.length; i++) expect(same.data[i]).toBeCloseTo(img.data[i], 12);
  });

  it("preserves constant images at any size", () => {
    const img = new Image(5, 5);
    img.data.fill(0.25);
    const up = resizeImage(img, 13, 13);
    for (const v of up.data) expect(v).toBeCloseTo(0.25, 12);
  });

  it("resizeMap interpolates within the input range", () => {
    const rng = seededRng(4);
    const src = Float64Array.from({ length: 16 }, () => rng());
    const min = Math.min(...src);
    const max = Math.max(...src);
    const out = resizeMap(src, 4, 4, 11, 11);
    for (const v of out) {
      expect(v).toBeGreaterThanOrEqual(min - 1e-12);
      expect(v).toBeLessThanOrEqual(max + 1e-12);
    }
  });
});

describe("jitter", () => {
  it("the identity jitter only clamps", () => {
    const img = syntheticImage(6, 5);
    const out = applyJitter(img, IDENTITY_JITTER);
    for (let i = 0; i < img.data.length; i++) expect(out.data[i]).toBeCloseTo(img.data[i], 12);
  });

  it("sampled jitters stay within the strength band and outputs stay in [0, 1]", () => {
    const rng = seededRng(6);
    for (let trial = 0; trial < 10; trial++) {
      const j = sampleJitter(rng, 0.2);
      for (const f of [j.brightness, j.contrast, j.saturation]) {
        expect(f).toBeGreaterThanOrEqual(0.8);
        expect(f).toBeLessThanOrEqual(1.2);
      }
      const out = applyJitter(syntheticImage(5, trial), j);
      for (const v of out.data) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
      }
    }
  });
});

describe("patchify", () => {
  it("produces one normalized row per patch, channel-major", () => {
    const img = new Image(4, 4);
    // distinct channel values so the layout is observable
    for (let i = 0; i < 16; i++) {
      img.data[3 * i] = 0.9;
      img.data[3 * i + 1] = 0.5;
      img.data[3 * i + 2] = 0.1;
    }
    const patches = patchify(img, 2);
    expect(patches.rows).toBe(4);
    expect(patches.cols).toBe(12);
    // first 4 entries of a row are the R channel, then G, then B
    expect(patches.get(0, 0)).toBeCloseTo((0.9 - 0.48145466) / 0.26862954, 6);
    expect(patches.get(0, 4)).toBeCloseTo((0.5 - 0.4578275) / 0.26130258, 6);
    expect(patches.get(0, 8)).toBeCloseTo((0.1 - 0.40821073) / 0.27577711, 6);
  });

  it("rejects non-square and indivisible inputs", () => {
    expect(() => patchify(new Image(4, 6), 2)).toThrow(/patchify/);
    expect(() => patchify(new Image(6, 6), 4)).toThrow(/patchify/);
  });
});

describe("ppm io", () => {
  it("round-trips within 8-bit quantization", () => {
    const img = syntheticImage(9, 7);
    const path = join(tmp, "roundtrip.ppm");
    writePpm(path, img);
    const back = readPpm(path);
    expect(back.width).toBe(9);
    expect(back.height).toBe(9);
    for (let i = 0; i < img.data.length; i++) {
      expect(Math.abs(back.data[i] - img.data[i])).toBeLessThanOrEqual(0.5 / 255 + 1e-9);
    }
  });

  it("rejects non-P6 files", () => {
    const path = join(tmp, "bad.ppm");
    writePpm(path, new Image(2, 2));
    const raw = readFileSync(path);
    raw[0] = "P".charCodeAt(0);
    raw[1] = "3".charCodeAt(0);
    writeFileSync(path, raw);
    expect(() => readPpm(path)).toThrow(/not a P6/);
  });
});
