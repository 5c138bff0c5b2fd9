/**
 * Extraction pipeline: turn a labeled image dataset into a feature table
 * (.btft) and label list (.btlb) that the encrypted-training CLI accepts
 * as-is. Images are preprocessed to the backbone's expected tensor form,
 * run through it in batches, and the returned summary tokens are fused
 * into one fixed-width row per image.
 *
 * Output files are written atomically (temp file in the destination
 * directory, then rename) so a crash never leaves a half-written table.
 */

import { mkdirSync, renameSync, rmSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { z } from "zod";

import {
  DEFAULT_MODEL_ID,
  featureWidth,
  fuseTokens,
  type Backbone,
  type TokenMode,
} from "./backbone.js";
import {
  DATASET_NAMES,
  SPLIT_NAMES,
  loadSplit,
  type Sample,
} from "./datasets.js";
import { featureFileBytes, labelFileBytes } from "./formats.js";
import { preprocess } from "./preprocess.js";

export class ExtractionError extends Error {
  override name = "ExtractionError";
}

export const ExtractionJobSchema = z.object({
  dataset: z.enum(DATASET_NAMES),
  split: z.enum(SPLIT_NAMES).default("train"),
  source: z.string().min(1),
  outDir: z.string().min(1),
  modelId: z.string().min(1).default(DEFAULT_MODEL_ID),
  batchSize: z.number().int().min(1).max(1024).default(16),
  cap: z.number().int().min(1).nullable().default(null),
  tokens: z.enum(["mean", "class", "concat"]).default("mean"),
});

export type ExtractionJob = z.infer<typeof ExtractionJobSchema>;

export interface ExtractionResult {
  featurePath: string;
  labelPath: string;
  rows: number;
  featureDim: number;
  classCount: number;
  backboneId: string;
}

export function parseJob(raw: unknown): ExtractionJob {
  const parsed = ExtractionJobSchema.safeParse(raw);
  if (!parsed.success) {
    const first = parsed.error.issues[0];
    throw new ExtractionError(
      `invalid job: ${first.path.join(".") || "(root)"}: ${first.message}`,
    );
  }
  return parsed.data;
}

export function writeFileAtomic(path: string, bytes: Uint8Array): void {
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, bytes);
  try {
    renameSync(tmp, path);
  } catch (err) {
    rmSync(tmp, { force: true });
    throw err;
  }
}

export interface SampleRunOptions {
  batchSize: number;
  tokens: TokenMode;
}

/**
 * Core loop shared by every entry point: preprocess, run the backbone in
 * batches, fuse tokens, then write both files atomically.
 */
export async function extractFromSamples(
  samples: Sample[],
  classCount: number,
  backbone: Backbone,
  options: SampleRunOptions,
  paths: { features: string; labels: string },
): Promise<ExtractionResult> {
  if (!samples.length) {
    throw new ExtractionError("no samples to extract");
  }
  const width = featureWidth(backbone.hiddenSize, options.tokens);
  const rows = new Float32Array(samples.length * width);
  const labels: number[] = [];

  for (let start = 0; start < samples.length; start += options.batchSize) {
    const batch = samples.slice(start, start + options.batchSize);
    const tensors = batch.map((s) => preprocess(s.image()));
    const pairs = await backbone.tokens(tensors);
    if (pairs.length !== batch.length) {
      throw new ExtractionError(
        `backbone returned ${pairs.length} token pairs for a batch of ` +
          `${batch.length}`,
      );
    }
    pairs.forEach((pair, i) => {
      if (
        pair.classToken.length !== backbone.hiddenSize ||
        pair.distillToken.length !== backbone.hiddenSize
      ) {
        throw new ExtractionError(
          `backbone token width ${pair.classToken.length}/` +
            `${pair.distillToken.length}, expected ${backbone.hiddenSize}`,
        );
      }
      rows.set(fuseTokens(pair, options.tokens), (start + i) * width);
    });
    batch.forEach((s) => labels.push(s.label));
  }

  const featureBytes = featureFileBytes(rows, "f32", [samples.length, width]);
  const labelBytes = labelFileBytes(labels, classCount);
  writeFileAtomic(paths.features, featureBytes);
  writeFileAtomic(paths.labels, labelBytes);

  return {
    featurePath: paths.features,
    labelPath: paths.labels,
    rows: samples.length,
    featureDim: width,
    classCount,
    backboneId: backbone.id,
  };
}

export async function runExtraction(
  job: ExtractionJob,
  backbone: Backbone,
): Promise<ExtractionResult> {
  const split = loadSplit(job.dataset, job.source, job.split);
  let samples = split.samples;
  if (job.cap !== null) {
    if (job.cap > samples.length) {
      throw new ExtractionError(
        `cap ${job.cap} exceeds the ${samples.length} samples in ` +
          `${job.dataset}/${job.split}`,
      );
    }
    samples = samples.slice(0, job.cap);
  }
  mkdirSync(job.outDir, { recursive: true });
  const stem = `${job.dataset}-${job.split}`;
  return extractFromSamples(
    samples,
    split.classCount,
    backbone,
    { batchSize: job.batchSize, tokens: job.tokens },
    {
      features: join(job.outDir, `${stem}-features.btft`),
      labels: join(job.outDir, `${stem}-labels.btlb`),
    },
  );
}
