#!/usr/bin/env node
/**
 * Command-line entry points:
 *   extract   --image in.ppm --labels-file labels.txt --out maps.rmap [--config cfg.json]
 *   benchmark --n-labels N --repeats R --report report.json [--config cfg.json]
 *
 * Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
 */

import { readFileSync, writeFileSync, renameSync } from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import {
  ExtractConfig,
  ModelConfig,
  VIT_B32,
  VIT_TINY,
  benchmarkExtractConfig,
  defaultExtractConfig,
} from "./config.js";
import { readPpm } from "./image.js";
import { extract } from "./extract.js";
import { writeRmap } from "./rmap.js";
import { runBenchmark } from "./benchmark.js";

class UsageError extends Error {}

function loadConfig(path: string | undefined, model: ModelConfig): ExtractConfig {
  const base = defaultExtractConfig(model);
  if (!path) return base;
  let parsed: Record<string, unknown>;
  try {
    parsed = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new UsageError(`cannot read config ${path}: ${(err as Error).message}`);
  }
  const merged: ExtractConfig = { ...base };
  for (const [key, value] of Object.entries(parsed)) {
    if (key === "model") {
      merged.model = { ...merged.model, ...(value as Partial<ModelConfig>) };
    } else if (key in base) {
      (merged as unknown as Record<string, unknown>)[key] = value;
    } else {
      throw new UsageError(`unknown config key ${JSON.stringify(key)}`);
    }
  }
  return merged;
}

function atomicWriteJson(path: string, payload: unknown): void {
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, JSON.stringify(payload, null, 1) + "\n");
  renameSync(tmp, path);
}

function pickModel(name: string): ModelConfig {
  if (name === "vit-b32") return VIT_B32;
  if (name === "vit-tiny") return VIT_TINY;
  throw new UsageError(`unknown model ${JSON.stringify(name)} (expected vit-b32 or vit-tiny)`);
}

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .scriptName("clip-extractor")
    .strict()
    .fail((msg, err) => {
      if (err instanceof UsageError) {
        console.error(`error: ${err.message}`);
        process.exit(2);
      }
      if (msg) {
        console.error(`error: ${msg}`);
        process.exit(2);
      }
      console.error(`error: ${err?.message ?? "unknown failure"}`);
      process.exit(1);
    })
    .command(
      "extract",
      "compute per-label relevancy maps for an image and write an RMAP file",
      (y) =>
        y
          .option("image", { type: "string", demandOption: true })
          .option("labels-file", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("config", { type: "string" })
          .option("model", { type: "string", default: "vit-b32" }),
      (argv) => {
        const cfg = loadConfig(argv.config, pickModel(argv.model));
        const labels = readFileSync(argv["labels-file"], "utf-8")
          .split("\n")
          .map((l) => l.trim())
          .filter((l) => l.length > 0);
        if (labels.length === 0) throw new UsageError("labels file contains no labels");
        const img = readPpm(argv.image);
        const maps = extract(img, labels, cfg);
        writeRmap(argv.out, maps);
        console.log(`wrote ${maps.length} maps (${img.width}x${img.height}) to ${argv.out}`);
      },
    )
    .command(
      "benchmark",
      "time batched vs naive extraction and write a JSON report",
      (y) =>
        y
          .option("n-labels", { type: "number", default: 100 })
          .option("repeats", { type: "number", default: 1 })
          .option("report", { type: "string", demandOption: true })
          .option("config", { type: "string" })
          .option("model", { type: "string", default: "vit-tiny" })
          .option("image-size", { type: "number", default: 64 }),
      (argv) => {
        const base = argv.config ? loadConfig(argv.config, pickModel(argv.model)) : benchmarkExtractConfig();
        const cfg = argv.config ? base : { ...base, model: pickModel(argv.model) };
        if (!Number.isInteger(argv["n-labels"]) || argv["n-labels"] < 1) {
          throw new UsageError("--n-labels must be a positive integer");
        }
        if (!Number.isInteger(argv.repeats) || argv.repeats < 1) {
          throw new UsageError("--repeats must be a positive integer");
        }
        const report = runBenchmark(cfg, argv["n-labels"], argv.repeats, argv["image-size"]);
        atomicWriteJson(argv.report, report);
        console.log(
          `naive ${report.naiveSecondsPerLabel.mean.toFixed(3)} s/label, ` +
            `batched ${report.batchedSecondsPerLabel.mean.toFixed(3)} s/label, ` +
            `speedup ${report.speedup.toFixed(2)}x, max |diff| ${report.maxAbsDiff.toExponential(2)}`,
        );
      },
    )
    .demandCommand(1, "specify a command: extract or benchmark")
    .parseAsync();
}

main().catch((err) => {
  if (err instanceof UsageError) {
    console.error(`error: ${err.message}`);
    process.exit(2);
  }
  console.error(`error: ${err?.message ?? err}`);
  process.exit(1);
});
