#!/usr/bin/env node
/**
 * cipherfit-extract: turn labeled image datasets into feature/label files
 * for the encrypted trainer.
 *
 *   extract  run a backbone over a local dataset, write .btft + .btlb
 *   verify   independently re-parse an emitted pair and sanity-check it
 *
 * Exit codes: 0 success, 2 usage or bad job parameters, 3 missing or
 * malformed dataset/input files, 4 verification failure, 1 anything else.
 */

import { pathToFileURL } from "node:url";

import { loadGraphBackbone, StubBackbone, type Backbone } from "./backbone.js";
import { DATASET_NAMES, DatasetError, SPLIT_NAMES } from "./datasets.js";
import { ExtractionError, parseJob, runExtraction } from "./extract.js";
import { FormatError } from "./formats.js";
import { VerifyError, verifyPair } from "./verify.js";

class UsageError extends Error {
  override name = "UsageError";
}

const USAGE = `usage: cipherfit-extract <command> [options]

commands:
  extract   --dataset NAME --source DIR --out-dir DIR [options]
  verify    --features FILE --labels FILE

extract options:
  --dataset NAME     one of: ${DATASET_NAMES.join(", ")}
  --split NAME       one of: ${SPLIT_NAMES.join(", ")} (default train)
  --source DIR       directory holding the dataset's published files
  --out-dir DIR      where to write <dataset>-<split>-features.btft/.btlb
  --model-dir DIR    converted backbone checkpoint (model.json + shards)
  --stub             use the deterministic stand-in backbone instead
  --model-id NAME    backbone identifier (default deit-base-distilled-patch16-224)
  --batch N          images per backbone call (default 16)
  --cap N            take only the first N samples
  --tokens MODE      mean | class | concat (default mean)

This tool is offline: it never downloads datasets or weights. Place the
dataset under --source, and either pass --model-dir with a converted
checkpoint or opt into --stub explicitly.`;

interface Flags {
  [key: string]: string | boolean;
}

function parseFlags(argv: string[], boolFlags: Set<string>): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new UsageError(`unexpected argument ${JSON.stringify(arg)}`);
    }
    const name = arg.slice(2);
    if (boolFlags.has(name)) {
      flags[name] = true;
      continue;
    }
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new UsageError(`flag --${name} needs a value`);
    }
    flags[name] = value;
    i++;
  }
  return flags;
}

function requireString(flags: Flags, name: string): string {
  const v = flags[name];
  if (typeof v !== "string") {
    throw new UsageError(`missing required flag --${name}`);
  }
  return v;
}

function optionalInt(flags: Flags, name: string): number | undefined {
  const v = flags[name];
  if (v === undefined) return undefined;
  const n = Number(v);
  if (typeof v !== "string" || !Number.isInteger(n)) {
    throw new UsageError(`--${name} needs an integer, got ${JSON.stringify(v)}`);
  }
  return n;
}

async function chooseBackbone(
  flags: Flags,
  modelId: string,
): Promise<Backbone> {
  const stub = flags["stub"] === true;
  const modelDir = flags["model-dir"];
  if (stub && modelDir !== undefined) {
    throw new UsageError("--stub and --model-dir are mutually exclusive");
  }
  if (stub) return new StubBackbone();
  if (typeof modelDir === "string") {
    return loadGraphBackbone(modelDir, modelId);
  }
  throw new UsageError(
    "no backbone selected: this tool cannot download pretrained weights, " +
      "so pass --model-dir with a converted checkpoint, or --stub to use " +
      "the deterministic stand-in",
  );
}

async function cmdExtract(argv: string[]): Promise<number> {
  const flags = parseFlags(argv, new Set(["stub"]));
  const known = new Set([
    "dataset", "split", "source", "out-dir", "model-dir", "stub",
    "model-id", "batch", "cap", "tokens",
  ]);
  for (const name of Object.keys(flags)) {
    if (!known.has(name)) throw new UsageError(`unknown flag --${name}`);
  }

  const job = parseJob({
    dataset: requireString(flags, "dataset"),
    split: flags["split"],
    source: requireString(flags, "source"),
    outDir: requireString(flags, "out-dir"),
    modelId: flags["model-id"],
    batchSize: optionalInt(flags, "batch"),
    cap: optionalInt(flags, "cap") ?? null,
    tokens: flags["tokens"],
  });
  const backbone = await chooseBackbone(flags, job.modelId);

  const result = await runExtraction(job, backbone);
  process.stdout.write(
    `extracted ${result.rows} rows x ${result.featureDim} features ` +
      `(${result.classCount} classes) with ${result.backboneId}\n` +
      `features: ${result.featurePath}\n` +
      `labels:   ${result.labelPath}\n`,
  );
  return 0;
}

function cmdVerify(argv: string[]): number {
  const flags = parseFlags(argv, new Set());
  for (const name of Object.keys(flags)) {
    if (name !== "features" && name !== "labels") {
      throw new UsageError(`unknown flag --${name}`);
    }
  }
  const report = verifyPair(
    requireString(flags, "features"),
    requireString(flags, "labels"),
  );
  const counts = report.histogram
    .map((n, c) => `${c}:${n}`)
    .join(" ");
  process.stdout.write(
    `ok: ${report.rows} rows x ${report.featureDim} features, ` +
      `${report.classCount} classes\n` +
      `labels per class: ${counts}\n` +
      `value range: [${report.valueMin.toPrecision(6)}, ` +
      `${report.valueMax.toPrecision(6)}]\n`,
  );
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "extract":
        return await cmdExtract(rest);
      case "verify":
        return cmdVerify(rest);
      case "--help":
      case "-h":
      case "help":
      case undefined:
        process.stdout.write(USAGE + "\n");
        return command === undefined ? 2 : 0;
      default:
        throw new UsageError(`unknown command ${JSON.stringify(command)}`);
    }
  } catch (err) {
    const label = command ?? "cipherfit-extract";
    if (err instanceof UsageError || err instanceof ExtractionError) {
      process.stderr.write(`cipherfit-extract ${label}: ${err.message}\n`);
      return 2;
    }
    if (
      err instanceof DatasetError ||
      err instanceof FormatError ||
      (err instanceof Error && "code" in err && err.code === "ENOENT")
    ) {
      process.stderr.write(`cipherfit-extract ${label}: ${err.message}\n`);
      return 3;
    }
    if (err instanceof VerifyError) {
      process.stderr.write(`cipherfit-extract ${label}: ${err.message}\n`);
      return 4;
    }
    if (err instanceof Error) {
      process.stderr.write(`cipherfit-extract ${label}: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(entry).href) {
  process.exit(await main(process.argv.slice(2)));
}
