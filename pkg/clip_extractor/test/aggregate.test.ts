import { describe, expect, it } from "vitest";
import { WindowMap, aggregateCrops, aggregateVariants } from "../src/aggregate.js";
import { CropSchedule, makeCropSchedule } from "../src/schedule.js";
import { seededRng } from "../src/weights.js";

function randomWindows(schedule: CropSchedule, seed: number): WindowMap[] {
  const rng = seededRng(seed);
  const out: WindowMap[] = [];
  for (const scale of schedule.scales) {
    for (const window of scale.windows) {
      const values = new Float32Array(window.size * window.size);
      for (let i = 0; i < values.length; i++) values[i] = Math.fround(2 * rng());
      out.push({ window, values });
    }
  }
  return out;
}

describe("aggregateCrops", () => {
  it("preserves constant maps exactly", () => {
    const schedule = makeCropSchedule(32, 32, [1, 2]);
    const maps = randomWindows(schedule, 1).map((m) => ({
      window: m.window,
      values: new Float32Array(m.values.length).fill(0.625),
    }));
    const out = aggregateCrops(maps, schedule);
    for (const v of out) expect(v).toBe(0.625);
  });

  it("matches a float64 reference within float32 rounding", () => {
    const schedule = makeCropSchedule(32, 32, [1, 2, 4]);
    const maps = randomWindows(schedule, 2);
    const out = aggregateCrops(maps, schedule);

    const { width, height } = schedule;
    const reference = new Float64Array(width * height);
    for (const scale of schedule.scales) {
      const acc = new Float64Array(width * height);
      const count = new Float64Array(width * height);
      for (const { window, values } of maps) {
        if (window.size !== scale.size) continue;
        for (let r = 0; r < window.size; r++) {
          for (let c = 0; c < window.size; c++) {
            const i = (window.y + r) * width + window.x + c;
            acc[i] += values[r * window.size + c];
            count[i] += 1;
          }
        }
      }
      for (let i = 0; i < reference.length; i++) reference[i] += acc[i] / count[i];
    }
    for (let i = 0; i < out.length; i++) {
      expect(Math.abs(out[i] - reference[i] / schedule.scales.length)).toBeLessThan(1e-4);
    }
  });

  it("is bit-reproducible for a fixed window order", () => {
    const schedule = makeCropSchedule(48, 48, [1, 3]);
    const maps = randomWindows(schedule, 3);
    const a = aggregateCrops(maps, schedule);
    const b = aggregateCrops(maps, schedule);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it("rejects uncovered pixels, foreign sizes, and shape mismatches", () => {
    const schedule = makeCropSchedule(32, 32, [1, 2]);
    const maps = randomWindows(schedule, 4);
    expect(() => aggregateCrops(maps.slice(0, maps.length - 1), schedule)).toThrow(/uncovered/);
    expect(() =>
      aggregateCrops([{ window: { x: 0, y: 0, size: 7 }, values: new Float32Array(49) }], schedule),
    ).toThrow(/not part of the schedule/);
    const bad = [...maps];
    bad[0] = { window: bad[0].window, values: new Float32Array(4) };
    expect(() => aggregateCrops(bad, schedule)).toThrow(/does not match size/);
  });
});

describe("aggregateVariants", () => {
  it("averages variants and un-flips flipped ones", () => {
    const w = 3;
    const plain = Float32Array.from([1, 2, 3, 4, 5, 6, 7, 8, 9]);
    const mirrored = Float32Array.from([3, 2, 1, 6, 5, 4, 9, 8, 7]);
    const out = aggregateVariants([plain, mirrored], [false, true], w, w);
    for (let i = 0; i < out.length; i++) expect(out[i]).toBe(plain[i]);
  });

  it("a single unflipped variant passes through unchanged", () => {
    const rng = seededRng(5);
    const m = new Float32Array(16);
    for (let i = 0; i < m.length; i++) m[i] = Math.fround(rng());
    const out = aggregateVariants([m], [false], 4, 4);
    expect(Array.from(out)).toEqual(Array.from(m));
  });

  it("rejects mismatched inputs", () => {
    expect(() => aggregateVariants([], [], 2, 2)).toThrow(/flip flag/);
    expect(() => aggregateVariants([new Float32Array(4)], [false, true], 2, 2)).toThrow(/flip flag/);
    expect(() => aggregateVariants([new Float32Array(5)], [false], 2, 2)).toThrow(/dimensions/);
  });
});
