/**
 * Post-extraction verification: re-read the emitted files with the
 * independent parsers (not the writer's buffers), then check that the
 * pair is trainable — matching row counts, finite values, at least two
 * classes actually present, no label outside the declared range (the
 * parser enforces that last one).
 */

import { readFileSync } from "node:fs";

import { parseFeatureFile, parseLabelFile } from "./formats.js";

export class VerifyError extends Error {
  override name = "VerifyError";
}

export interface VerifyReport {
  rows: number;
  featureDim: number;
  classCount: number;
  histogram: number[];
  valueMin: number;
  valueMax: number;
}

export function verifyPair(
  featurePath: string,
  labelPath: string,
): VerifyReport {
  const table = parseFeatureFile(readFileSync(featurePath));
  const list = parseLabelFile(readFileSync(labelPath));

  if (table.rows !== list.labels.length) {
    throw new VerifyError(
      `${table.rows} feature rows vs ${list.labels.length} labels`,
    );
  }
  if (table.rows === 0) {
    throw new VerifyError("feature table is empty");
  }

  let min = Infinity;
  let max = -Infinity;
  for (let i = 0; i < table.data.length; i++) {
    const v = table.data[i];
    if (!Number.isFinite(v)) {
      const row = Math.floor(i / table.cols);
      const col = i % table.cols;
      throw new VerifyError(`non-finite feature value at row ${row} col ${col}`);
    }
    if (v < min) min = v;
    if (v > max) max = v;
  }

  const histogram = new Array<number>(list.classCount).fill(0);
  for (const label of list.labels) histogram[label]++;
  const present = histogram.filter((n) => n > 0).length;
  if (present < 2) {
    throw new VerifyError(
      `only ${present} class(es) present; a classifier needs at least 2`,
    );
  }

  return {
    rows: table.rows,
    featureDim: table.cols,
    classCount: list.classCount,
    histogram,
    valueMin: min,
    valueMax: max,
  };
}
