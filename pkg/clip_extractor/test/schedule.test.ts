import { describe, expect, it } from "vitest";
import { makeCropSchedule, windowCount } from "../src/schedule.js";

describe("crop schedule", () => {
  it("produces the documented sizes and strides for a 896 px image", () => {
    const s = makeCropSchedule(896, 896);
    expect(s.scales.map((x) => x.size)).toEqual([896, 448, 298, 224]);
    expect(s.scales.map((x) => x.stride)).toEqual([224, 112, 74, 56]);
  });

  it("covers every pixel at every scale", () => {
    for (const size of [64, 97, 224]) {
      const s = makeCropSchedule(size, size, [1, 2, 3]);
      for (const scale of s.scales) {
        const covered = new Uint8Array(size * size);
        for (const w of scale.windows) {
          expect(w.x + w.size).toBeLessThanOrEqual(size);
          expect(w.y + w.size).toBeLessThanOrEqual(size);
          for (let r = 0; r < w.size; r++) {
            covered.fill(1, (w.y + r) * size + w.x, (w.y + r) * size + w.x + w.size);
          }
        }
        expect(covered.every((v) => v === 1)).toBe(true);
      }
    }
  });

  it("orders windows y-then-x with edge-flush positions appended last", () => {
    const s = makeCropSchedule(10, 10, [2], 0.3); // size 5, stride 1 -> positions 0..5
    const positions = [0, 1, 2, 3, 4, 5];
    const expected: Array<[number, number]> = [];
    for (const y of positions) for (const x of positions) expected.push([x, y]);
    expect(s.scales[0].windows.map((w) => [w.x, w.y])).toEqual(expected);

    // stride that does not divide evenly: flush position is appended after the stepped ones
    const s2 = makeCropSchedule(10, 10, [2], 0.4); // size 5, stride 2 -> 0,2,4 then flush 5
    const pos2 = [...new Set(s2.scales[0].windows.map((w) => w.x))];
    expect(pos2).toEqual([0, 2, 4, 5]);
  });

  it("rejects invalid inputs", () => {
    expect(() => makeCropSchedule(8, 10)).toThrow(/square/);
    expect(() => makeCropSchedule(8, 8, [0])).toThrow(/divisors/);
    expect(() => makeCropSchedule(2, 2, [4])).toThrow(/< 1 px/);
  });

  it("windowCount totals across scales", () => {
    const s = makeCropSchedule(64, 64, [1, 2]);
    expect(windowCount(s)).toBe(1 + 25);
  });
});
