import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";
import { VIT_TINY } from "../src/config.js";
import { loadWeights, parameterShapes, saveWeights, seededRng, seededWeights } from "../src/weights.js";

const tmp = mkdtempSync(join(tmpdir(), "weightstest-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

describe("seeded rng", () => {
  it("is deterministic per seed and distinct across seeds", () => {
    const a = seededRng(42);
    const b = seededRng(42);
    const c = seededRng(43);
    const sa = Array.from({ length: 8 }, a);
    const sb = Array.from({ length: 8 }, b);
    const sc = Array.from({ length: 8 }, c);
    expect(sa).toEqual(sb);
    expect(sa).not.toEqual(sc);
    for (const v of sa) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(1);
    }
  });
});

describe("seeded weights", () => {
  it("covers every parameter in the shape table with the declared shape", () => {
    const shapes = parameterShapes(VIT_TINY);
    const arrays = seededWeights(VIT_TINY, 0);
    expect(arrays.size).toBe(shapes.size);
    for (const [name, dims] of shapes) {
      const got = arrays.get(name)!;
      expect(got.dims).toEqual(dims);
      expect(got.data.length).toBe(dims.reduce((x, y) => x * y, 1));
    }
  });

  it("is reproducible per seed", () => {
    const a = seededWeights(VIT_TINY, 5);
    const b = seededWeights(VIT_TINY, 5);
    for (const [name, arr] of a) {
      expect(Array.from(arr.data)).toEqual(Array.from(b.get(name)!.data));
    }
  });

  it("layer-norm gains are near one", () => {
    const arrays = seededWeights(VIT_TINY, 0);
    for (const v of arrays.get("visual.ln_pre.gain")!.data) {
      expect(Math.abs(v - 1)).toBeLessThan(0.2);
    }
  });
});

describe("clpw io", () => {
  it("round-trips at float32 precision", () => {
    const arrays = seededWeights(VIT_TINY, 9);
    const path = join(tmp, "w.clpw");
    saveWeights(path, arrays);
    const back = loadWeights(path, VIT_TINY);
    expect(back.size).toBe(arrays.size);
    for (const [name, arr] of arrays) {
      const got = back.get(name)!;
      expect(got.dims).toEqual(arr.dims);
      for (let i = 0; i < arr.data.length; i++) {
        expect(got.data[i]).toBe(Math.fround(arr.data[i]));
      }
    }
  });

  it("rejects files with missing or misshapen parameters", () => {
    const arrays = seededWeights(VIT_TINY, 9);
    const missing = new Map(arrays);
    missing.delete("visual.proj");
    const p1 = join(tmp, "missing.clpw");
    saveWeights(p1, missing);
    expect(() => loadWeights(p1, VIT_TINY)).toThrow(/missing parameter visual.proj/);

    const misshapen = new Map(arrays);
    misshapen.set("visual.proj", { dims: [2, 2], data: new Float64Array(4) });
    const p2 = join(tmp, "shape.clpw");
    saveWeights(p2, misshapen);
    expect(() => loadWeights(p2, VIT_TINY)).toThrow(/expected/);
  });
});
