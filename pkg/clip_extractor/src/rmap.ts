/**
 * RMAP binary relevancy-map files: magic "RMAP", version u32, H u32, W u32,
 * K u32, then K records of [label_len u32, label UTF-8, H*W f32 LE
 * row-major]. The same format the voxel pipeline reads.
 */

import { readFileSync, writeFileSync, renameSync } from "node:fs";

export const RMAP_VERSION = 1;
const RMAP_MAGIC = "RMAP";

export interface LabeledMap {
  label: string;
  width: number;
  height: number;
  values: Float32Array;
}

export function writeRmap(path: string, maps: LabeledMap[]): void {
  if (maps.length === 0) throw new Error("RMAP files must contain at least one map");
  const { width, height } = maps[0];
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(20);
  header.write(RMAP_MAGIC, 0, "ascii");
  header.writeUInt32LE(RMAP_VERSION, 4);
  header.writeUInt32LE(height, 8);
  header.writeUInt32LE(width, 12);
  header.writeUInt32LE(maps.length, 16);
  chunks.push(header);
  for (const m of maps) {
    if (m.width !== width || m.height !== height) {
      throw new Error("all maps in one RMAP file share dims");
    }
    if (m.values.length !== width * height) throw new Error("map length does not match dims");
    for (const v of m.values) {
      if (!Number.isFinite(v) || v < 0) throw new Error("relevancy values must be finite and >= 0");
    }
    const labelBytes = Buffer.from(m.label, "utf-8");
    const lenBuf = Buffer.alloc(4);
    lenBuf.writeUInt32LE(labelBytes.length, 0);
    chunks.push(lenBuf, labelBytes);
    const body = Buffer.alloc(4 * m.values.length);
    for (let i = 0; i < m.values.length; i++) body.writeFloatLE(m.values[i], 4 * i);
    chunks.push(body);
  }
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, Buffer.concat(chunks));
  renameSync(tmp, path);
}

export function readRmap(path: string): LabeledMap[] {
  const raw = readFileSync(path);
  if (raw.length < 4 || raw.toString("ascii", 0, 4) !== RMAP_MAGIC) {
    throw new Error(`${path}: bad RMAP magic at offset 0`);
  }
  if (raw.length < 20) throw new Error(`${path}: truncated RMAP header`);
  const version = raw.readUInt32LE(4);
  if (version !== RMAP_VERSION) throw new Error(`${path}: unsupported RMAP version ${version}`);
  const height = raw.readUInt32LE(8);
  const width = raw.readUInt32LE(12);
  const count = raw.readUInt32LE(16);
  if (count === 0) throw new Error(`${path}: RMAP file declares zero maps at offset 16`);
  let off = 20;
  const maps: LabeledMap[] = [];
  for (let i = 0; i < count; i++) {
    if (off + 4 > raw.length) throw new Error(`${path}: truncated record header at offset ${off}`);
    const labelLen = raw.readUInt32LE(off);
    off += 4;
    if (off + labelLen + 4 * width * height > raw.length) {
      throw new Error(`${path}: truncated record at offset ${off}`);
    }
    const label = raw.toString("utf-8", off, off + labelLen);
    off += labelLen;
    const values = new Float32Array(width * height);
    for (let j = 0; j < values.length; j++) values[j] = raw.readFloatLE(off + 4 * j);
    off += 4 * width * height;
    maps.push({ label, width, height, values });
  }
  if (off !== raw.length) throw new Error(`${path}: trailing bytes after last record at offset ${off}`);
  return maps;
}
