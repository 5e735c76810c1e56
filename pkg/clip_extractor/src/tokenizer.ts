/**
 * Deterministic word-hash tokenizer.
 *
 * Without a pretrained vocabulary there is nothing for byte-pair merges to
 * recover, so text is lowercased, split on non-alphanumerics, and each word
 * is hashed into the configured vocabulary. Ids 0/1/2 are reserved for
 * pad/start/end. The mapping is stable across runs and platforms.
 */

import { ModelConfig } from "./config.js";

export const PAD_TOKEN = 0;
export const START_TOKEN = 1;
export const END_TOKEN = 2;
const RESERVED = 3;

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export function wordId(word: string, vocabSize: number): number {
  if (vocabSize <= RESERVED) throw new Error("vocabulary too small for reserved tokens");
  return RESERVED + (fnv1a(word) % (vocabSize - RESERVED));
}

export interface Tokenized {
  ids: number[];
  eotIndex: number;
}

export function tokenize(text: string, cfg: ModelConfig): Tokenized {
  const words = text
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((w) => w.length > 0);
  const body = words.map((w) => wordId(w, cfg.vocabSize));
  const maxBody = cfg.contextLength - 2;
  const truncated = body.slice(0, maxBody);
  const ids = [START_TOKEN, ...truncated, END_TOKEN];
  const eotIndex = ids.length - 1;
  while (ids.length < cfg.contextLength) ids.push(PAD_TOKEN);
  return { ids, eotIndex };
}

export function applyTemplate(template: string, label: string): string {
  if (!template.includes("{}")) throw new Error(`prompt template ${JSON.stringify(template)} has no {} slot`);
  return template.replaceAll("{}", label);
}
