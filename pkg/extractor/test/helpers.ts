import { writeFileSync } from "node:fs";
import { join } from "node:path";
import { gzipSync } from "node:zlib";

import type { RawImage } from "../src/preprocess.js";

export function idxImageBytes(images: RawImage[]): Buffer {
  const { width, height } = images[0];
  const head = Buffer.alloc(16);
  head.writeUInt32BE(0x00000803, 0);
  head.writeUInt32BE(images.length, 4);
  head.writeUInt32BE(height, 8);
  head.writeUInt32BE(width, 12);
  return Buffer.concat([head, ...images.map((i) => Buffer.from(i.pixels))]);
}

export function idxLabelBytes(labels: number[]): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(0x00000801, 0);
  head.writeUInt32BE(labels.length, 4);
  return Buffer.concat([head, Buffer.from(labels)]);
}

export function grayImage(seed: number, side = 28): RawImage {
  const pixels = new Uint8Array(side * side);
  for (let i = 0; i < pixels.length; i++) pixels[i] = (i + seed * 17) & 0xff;
  return { width: side, height: side, channels: 1, pixels };
}

export function writeMnistDir(
  dir: string,
  labels: number[],
  opts: { gz?: boolean; split?: "train" | "test" } = {},
): void {
  const stem = (opts.split ?? "train") === "train" ? "train" : "t10k";
  const images = idxImageBytes(labels.map((_, i) => grayImage(i)));
  const lab = idxLabelBytes(labels);
  if (opts.gz) {
    writeFileSync(join(dir, `${stem}-images-idx3-ubyte.gz`), gzipSync(images));
    writeFileSync(join(dir, `${stem}-labels-idx1-ubyte.gz`), gzipSync(lab));
  } else {
    writeFileSync(join(dir, `${stem}-images-idx3-ubyte`), images);
    writeFileSync(join(dir, `${stem}-labels-idx1-ubyte`), lab);
  }
}
