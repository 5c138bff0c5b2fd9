/**
 * Local dataset readers. Every loader consumes the dataset's canonical
 * on-disk form from a `--source` directory and yields samples in a
 * deterministic order; nothing here touches the network (this is an
 * offline tool; see the CLI's error message for where files must live).
 *
 *   mnist      IDX image/label pairs (optionally .gz)
 *   cifar10    binary batch files (one label byte + 3072 planar RGB bytes)
 *   dermamnist the published .npz bundle of uint8 arrays
 *   facemask   annotated-box archive: images/ + annotations/*.xml; each
 *              labeled box becomes one cropped sample (3 classes)
 */

import { existsSync, readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { gunzipSync, inflateRawSync } from "node:zlib";

import jpeg from "jpeg-js";
import { PNG } from "pngjs";

import type { RawImage } from "./preprocess.js";

export class DatasetError extends Error {
  override name = "DatasetError";
}

export interface Sample {
  label: number;
  /** decode lazily so capped jobs never touch unused files */
  image: () => RawImage;
}

export interface LoadedSplit {
  classCount: number;
  classNames: string[];
  samples: Sample[];
}

export const DATASET_NAMES = [
  "mnist",
  "cifar10",
  "dermamnist",
  "facemask",
] as const;
export type DatasetName = (typeof DATASET_NAMES)[number];

export const SPLIT_NAMES = ["train", "val", "test"] as const;
export type SplitName = (typeof SPLIT_NAMES)[number];

export function loadSplit(
  dataset: DatasetName,
  source: string,
  split: SplitName,
): LoadedSplit {
  switch (dataset) {
    case "mnist":
      return loadMnist(source, split);
    case "cifar10":
      return loadCifar10(source, split);
    case "dermamnist":
      return loadDermamnist(source, split);
    case "facemask":
      return loadFacemask(source, split);
    default:
      throw new DatasetError(`unknown dataset ${JSON.stringify(dataset)}`);
  }
}

function readMaybeGz(dir: string, name: string): Buffer {
  const plain = join(dir, name);
  if (existsSync(plain)) return readFileSync(plain);
  const gz = plain + ".gz";
  if (existsSync(gz)) return gunzipSync(readFileSync(gz));
  throw new DatasetError(
    `missing dataset file ${plain} (or ${name}.gz); this tool is offline - ` +
      "place the dataset's published files under --source first",
  );
}

// -- IDX ------------------------------------------------------------------------

export function parseIdxImages(buf: Buffer): RawImage[] {
  if (buf.length < 16 || buf.readUInt32BE(0) !== 0x00000803) {
    throw new DatasetError(
      "IDX image file: bad magic (want 0x00000803 u8 rank-3)",
    );
  }
  const count = buf.readUInt32BE(4);
  const height = buf.readUInt32BE(8);
  const width = buf.readUInt32BE(12);
  const need = 16 + count * height * width;
  if (buf.length !== need) {
    throw new DatasetError(
      `IDX image file: holds ${buf.length} bytes, header needs ${need}`,
    );
  }
  const out: RawImage[] = [];
  for (let i = 0; i < count; i++) {
    const start = 16 + i * height * width;
    out.push({
      width,
      height,
      channels: 1,
      pixels: Uint8Array.prototype.slice.call(
        buf, start, start + height * width,
      ),
    });
  }
  return out;
}

export function parseIdxLabels(buf: Buffer): Uint8Array {
  if (buf.length < 8 || buf.readUInt32BE(0) !== 0x00000801) {
    throw new DatasetError(
      "IDX label file: bad magic (want 0x00000801 u8 rank-1)",
    );
  }
  const count = buf.readUInt32BE(4);
  if (buf.length !== 8 + count) {
    throw new DatasetError(
      `IDX label file: holds ${buf.length} bytes, header needs ${8 + count}`,
    );
  }
  return Uint8Array.prototype.slice.call(buf, 8);
}

function loadMnist(source: string, split: SplitName): LoadedSplit {
  if (split === "val") {
    throw new DatasetError(
      "mnist publishes train/test only; derive validation downstream",
    );
  }
  const stem = split === "train" ? "train" : "t10k";
  const images = parseIdxImages(readMaybeGz(source, `${stem}-images-idx3-ubyte`));
  const labels = parseIdxLabels(readMaybeGz(source, `${stem}-labels-idx1-ubyte`));
  if (images.length !== labels.length) {
    throw new DatasetError(
      `mnist ${split}: ${images.length} images vs ${labels.length} labels`,
    );
  }
  return {
    classCount: 10,
    classNames: [...Array(10).keys()].map(String),
    samples: images.map((img, i) => ({ label: labels[i], image: () => img })),
  };
}

// -- CIFAR-10 binary batches ------------------------------------------------------

const CIFAR_SIDE = 32;
const CIFAR_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

export function parseCifarBatch(buf: Buffer): Sample[] {
  if (buf.length === 0 || buf.length % CIFAR_RECORD !== 0) {
    throw new DatasetError(
      `cifar10 batch: ${buf.length} bytes is not a multiple of ` +
        `${CIFAR_RECORD}-byte records`,
    );
  }
  const out: Sample[] = [];
  for (let off = 0; off < buf.length; off += CIFAR_RECORD) {
    const label = buf[off];
    if (label > 9) {
      throw new DatasetError(`cifar10 batch: label ${label} > 9 at ${off}`);
    }
    const base = off + 1;
    out.push({
      label,
      image: () => {
        // stored as three planar channels; emit interleaved HWC
        const pixels = new Uint8Array(3 * CIFAR_SIDE * CIFAR_SIDE);
        for (let p = 0; p < CIFAR_SIDE * CIFAR_SIDE; p++) {
          pixels[p * 3] = buf[base + p];
          pixels[p * 3 + 1] = buf[base + 1024 + p];
          pixels[p * 3 + 2] = buf[base + 2048 + p];
        }
        return { width: CIFAR_SIDE, height: CIFAR_SIDE, channels: 3, pixels };
      },
    });
  }
  return out;
}

function loadCifar10(source: string, split: SplitName): LoadedSplit {
  if (split === "val") {
    throw new DatasetError(
      "cifar10 publishes train/test only; derive validation downstream",
    );
  }
  const names =
    split === "train"
      ? [1, 2, 3, 4, 5].map((i) => `data_batch_${i}.bin`)
      : ["test_batch.bin"];
  const samples = names.flatMap((name) =>
    parseCifarBatch(readMaybeGz(source, name)),
  );
  return {
    classCount: 10,
    classNames: [
      "airplane", "automobile", "bird", "cat", "deer",
      "dog", "frog", "horse", "ship", "truck",
    ],
    samples,
  };
}

// -- npz bundle (zip of .npy arrays) ----------------------------------------------

interface NpyArray {
  shape: number[];
  data: Uint8Array;
}

export function parseNpy(buf: Buffer): NpyArray {
  if (buf.length < 10 || buf.toString("latin1", 0, 6) !== "\x93NUMPY") {
    throw new DatasetError("npy: bad magic");
  }
  const major = buf.readUInt8(6);
  const headerLen =
    major === 1 ? buf.readUInt16LE(8) : buf.readUInt32LE(8);
  const headerEnd = (major === 1 ? 10 : 12) + headerLen;
  const header = buf.toString("latin1", major === 1 ? 10 : 12, headerEnd);
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new DatasetError(`npy: unparseable header ${JSON.stringify(header)}`);
  }
  if (descr !== "|u1" && descr !== "<u1") {
    throw new DatasetError(
      `npy: dtype ${descr} unsupported (dataset bundles are uint8)`,
    );
  }
  if (fortran !== "False") {
    throw new DatasetError("npy: fortran-order arrays unsupported");
  }
  const shape = shapeText
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length)
    .map(Number);
  const count = shape.reduce((a, b) => a * b, 1);
  if (buf.length !== headerEnd + count) {
    throw new DatasetError(
      `npy: payload ${buf.length - headerEnd} bytes, shape needs ${count}`,
    );
  }
  return { shape, data: Uint8Array.prototype.slice.call(buf, headerEnd) };
}

export function parseNpz(buf: Buffer): Map<string, NpyArray> {
  // end-of-central-directory: scan back over the (<=64KiB) trailing comment
  let eocd = -1;
  const floor = Math.max(0, buf.length - 65557);
  for (let i = buf.length - 22; i >= floor; i--) {
    if (buf.readUInt32LE(i) === 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw new DatasetError("npz: no zip end-of-directory marker");
  const entryCount = buf.readUInt16LE(eocd + 10);
  let off = buf.readUInt32LE(eocd + 16);

  const out = new Map<string, NpyArray>();
  for (let e = 0; e < entryCount; e++) {
    if (buf.readUInt32LE(off) !== 0x02014b50) {
      throw new DatasetError(`npz: bad central directory entry at ${off}`);
    }
    const method = buf.readUInt16LE(off + 10);
    const compressed = buf.readUInt32LE(off + 20);
    const nameLen = buf.readUInt16LE(off + 28);
    const extraLen = buf.readUInt16LE(off + 30);
    const commentLen = buf.readUInt16LE(off + 32);
    const localOff = buf.readUInt32LE(off + 42);
    const name = buf.toString("latin1", off + 46, off + 46 + nameLen);
    off += 46 + nameLen + extraLen + commentLen;

    if (buf.readUInt32LE(localOff) !== 0x04034b50) {
      throw new DatasetError(`npz: bad local header for ${name}`);
    }
    const localName = buf.readUInt16LE(localOff + 26);
    const localExtra = buf.readUInt16LE(localOff + 28);
    const dataOff = localOff + 30 + localName + localExtra;
    const raw = buf.subarray(dataOff, dataOff + compressed);
    let plain: Buffer;
    if (method === 0) plain = Buffer.from(raw);
    else if (method === 8) plain = inflateRawSync(raw);
    else {
      throw new DatasetError(`npz: compression method ${method} unsupported`);
    }
    if (!name.endsWith(".npy")) continue;
    out.set(name.slice(0, -4), parseNpy(plain));
  }
  return out;
}

const DERMA_CLASSES = [
  "actinic-keratoses", "basal-cell-carcinoma", "benign-keratosis",
  "dermatofibroma", "melanoma", "nevus", "vascular-lesion",
];

function loadDermamnist(source: string, split: SplitName): LoadedSplit {
  const bundle = parseNpz(readMaybeGz(source, "dermamnist.npz"));
  const images = bundle.get(`${split}_images`);
  const labels = bundle.get(`${split}_labels`);
  if (!images || !labels) {
    throw new DatasetError(
      `dermamnist.npz lacks ${split}_images/${split}_labels ` +
        `(has ${[...bundle.keys()].sort().join(", ")})`,
    );
  }
  const [count, height, width] = images.shape;
  const channels = images.shape.length === 4 ? images.shape[3] : 1;
  if (channels !== 1 && channels !== 3) {
    throw new DatasetError(`dermamnist: ${channels}-channel images unsupported`);
  }
  const flatLabels = labels.data;
  if (flatLabels.length !== count) {
    throw new DatasetError(
      `dermamnist ${split}: ${count} images vs ${flatLabels.length} labels`,
    );
  }
  const planeSize = height * width * channels;
  const samples: Sample[] = [];
  for (let i = 0; i < count; i++) {
    const label = flatLabels[i];
    if (label >= DERMA_CLASSES.length) {
      throw new DatasetError(`dermamnist: label ${label} out of range`);
    }
    samples.push({
      label,
      image: () => ({
        width,
        height,
        channels: channels as 1 | 3,
        pixels: images.data.slice(i * planeSize, (i + 1) * planeSize),
      }),
    });
  }
  return {
    classCount: DERMA_CLASSES.length,
    classNames: DERMA_CLASSES,
    samples,
  };
}

// -- annotated-box archive ---------------------------------------------------------

export const FACEMASK_CLASSES = [
  "with_mask",
  "without_mask",
  "mask_weared_incorrect",
];

interface Box {
  name: string;
  xmin: number;
  ymin: number;
  xmax: number;
  ymax: number;
}

export function parseAnnotationXml(xml: string): { filename: string; boxes: Box[] } {
  const filename = /<filename>\s*([^<]+?)\s*<\/filename>/.exec(xml)?.[1];
  if (!filename) throw new DatasetError("annotation: missing <filename>");
  const boxes: Box[] = [];
  for (const m of xml.matchAll(/<object>([\s\S]*?)<\/object>/g)) {
    const block = m[1];
    const name = /<name>\s*([^<]+?)\s*<\/name>/.exec(block)?.[1];
    const nums = ["xmin", "ymin", "xmax", "ymax"].map((tag) => {
      const v = new RegExp(`<${tag}>\\s*(\\d+)\\s*</${tag}>`).exec(block)?.[1];
      if (v === undefined) {
        throw new DatasetError(`annotation ${filename}: box lacks <${tag}>`);
      }
      return parseInt(v, 10);
    });
    if (!name) {
      throw new DatasetError(`annotation ${filename}: box lacks <name>`);
    }
    boxes.push({
      name, xmin: nums[0], ymin: nums[1], xmax: nums[2], ymax: nums[3],
    });
  }
  return { filename, boxes };
}

function stripAlpha(width: number, height: number, rgba: Uint8Array): RawImage {
  const pixels = new Uint8Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    pixels[p * 3] = rgba[p * 4];
    pixels[p * 3 + 1] = rgba[p * 4 + 1];
    pixels[p * 3 + 2] = rgba[p * 4 + 2];
  }
  return { width, height, channels: 3, pixels };
}

export function decodeImageFile(path: string): RawImage {
  const buf = readFileSync(path);
  if (buf.length >= 8 && buf.readUInt32BE(0) === 0x89504e47) {
    const png = PNG.sync.read(buf);
    return stripAlpha(png.width, png.height, new Uint8Array(png.data));
  }
  if (buf.length >= 2 && buf[0] === 0xff && buf[1] === 0xd8) {
    const img = jpeg.decode(buf, { useTArray: true });
    return stripAlpha(img.width, img.height, img.data);
  }
  throw new DatasetError(`${path}: neither PNG nor JPEG`);
}

export function cropImage(img: RawImage, box: Box): RawImage {
  const x0 = Math.max(0, Math.min(box.xmin, img.width - 1));
  const y0 = Math.max(0, Math.min(box.ymin, img.height - 1));
  const x1 = Math.max(x0 + 1, Math.min(box.xmax, img.width));
  const y1 = Math.max(y0 + 1, Math.min(box.ymax, img.height));
  const w = x1 - x0;
  const h = y1 - y0;
  const pixels = new Uint8Array(w * h * img.channels);
  for (let y = 0; y < h; y++) {
    const srcStart = ((y0 + y) * img.width + x0) * img.channels;
    pixels.set(
      img.pixels.subarray(srcStart, srcStart + w * img.channels),
      y * w * img.channels,
    );
  }
  return { width: w, height: h, channels: img.channels, pixels };
}

function loadFacemask(source: string, split: SplitName): LoadedSplit {
  if (split !== "train") {
    throw new DatasetError(
      "the annotated-box archive ships unsplit; extract split=train and " +
        "let the trainer derive validation/test partitions",
    );
  }
  const annotationDir = join(source, "annotations");
  const imageDir = join(source, "images");
  if (!existsSync(annotationDir) || !existsSync(imageDir)) {
    throw new DatasetError(
      `facemask source needs ${annotationDir} and ${imageDir}; this tool ` +
        "is offline - place the archive's contents under --source first",
    );
  }
  const samples: Sample[] = [];
  const files = readdirSync(annotationDir)
    .filter((f) => f.endsWith(".xml"))
    .sort();
  for (const file of files) {
    const { filename, boxes } = parseAnnotationXml(
      readFileSync(join(annotationDir, file), "utf-8"),
    );
    for (const box of boxes) {
      const label = FACEMASK_CLASSES.indexOf(box.name);
      if (label < 0) {
        throw new DatasetError(
          `annotation ${file}: unknown class ${JSON.stringify(box.name)}`,
        );
      }
      samples.push({
        label,
        image: () => cropImage(decodeImageFile(join(imageDir, filename)), box),
      });
    }
  }
  if (!samples.length) {
    throw new DatasetError(`no annotated boxes found under ${annotationDir}`);
  }
  return { classCount: 3, classNames: FACEMASK_CLASSES, samples };
}
