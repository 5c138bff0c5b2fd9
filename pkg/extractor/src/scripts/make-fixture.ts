/**
 * Regenerate the committed cross-language fixture: four deterministic
 * synthetic images pushed through the real extraction pipeline with the
 * deterministic stand-in backbone, plus an expected.json snapshot
 * (feature values, labels, and file digests) that the Python side's
 * round-trip test checks against byte for byte.
 */

import { createHash } from "node:crypto";
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { StubBackbone } from "../backbone.js";
import type { Sample } from "../datasets.js";
import { extractFromSamples } from "../extract.js";
import { parseFeatureFile, parseLabelFile } from "../formats.js";
import type { RawImage } from "../preprocess.js";

const FIXTURE_LABELS = [3, 7, 1, 0];
const CLASS_COUNT = 10;

function syntheticImage(seed: number): RawImage {
  const side = 28;
  const pixels = new Uint8Array(side * side);
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      pixels[y * side + x] = (x * 7 + y * 13 + seed * 37) & 0xff;
    }
  }
  return { width: side, height: side, channels: 1, pixels };
}

async function run(): Promise<void> {
  const here = dirname(fileURLToPath(import.meta.url));
  const fixtureDir = join(here, "..", "..", "fixtures");
  mkdirSync(fixtureDir, { recursive: true });

  const samples: Sample[] = FIXTURE_LABELS.map((label, i) => ({
    label,
    image: () => syntheticImage(i),
  }));

  const featurePath = join(fixtureDir, "sample-features.btft");
  const labelPath = join(fixtureDir, "sample-labels.btlb");
  const result = await extractFromSamples(
    samples,
    CLASS_COUNT,
    new StubBackbone(),
    { batchSize: 2, tokens: "mean" },
    { features: featurePath, labels: labelPath },
  );

  // snapshot what actually landed on disk, not the in-memory copy
  const featureBytes = readFileSync(featurePath);
  const labelBytes = readFileSync(labelPath);
  const table = parseFeatureFile(featureBytes);
  const list = parseLabelFile(labelBytes);

  const features: number[][] = [];
  for (let r = 0; r < table.rows; r++) {
    features.push(Array.from(table.data.subarray(r * table.cols, (r + 1) * table.cols)));
  }

  const expected = {
    shape: [table.rows, table.cols],
    class_count: list.classCount,
    labels: Array.from(list.labels),
    feature_sha256: createHash("sha256").update(featureBytes).digest("hex"),
    label_sha256: createHash("sha256").update(labelBytes).digest("hex"),
    backbone: result.backboneId,
    tokens: "mean",
    features,
  };
  writeFileSync(
    join(fixtureDir, "expected.json"),
    JSON.stringify(expected, null, 2) + "\n",
  );

  process.stdout.write(
    `wrote ${result.rows}x${result.featureDim} fixture to ${fixtureDir}\n` +
      `feature sha256 ${expected.feature_sha256}\n` +
      `label   sha256 ${expected.label_sha256}\n`,
  );
}

await run();
