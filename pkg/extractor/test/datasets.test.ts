import { mkdtempSync, readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { PNG } from "pngjs";
import { describe, expect, it } from "vitest";

import {
  DatasetError,
  cropImage,
  loadSplit,
  parseAnnotationXml,
  parseCifarBatch,
  parseIdxImages,
  parseIdxLabels,
  parseNpy,
  parseNpz,
} from "../src/datasets.js";
import type { RawImage } from "../src/preprocess.js";
import {
  grayImage,
  idxImageBytes,
  idxLabelBytes,
  writeMnistDir,
} from "./helpers.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const FIXTURES = join(HERE, "fixtures");

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "extractor-test-"));
}

describe("mnist (IDX)", () => {
  it("loads images and labels in file order", () => {
    const dir = tmp();
    writeMnistDir(dir, [4, 0, 9]);
    const split = loadSplit("mnist", dir, "train");
    expect(split.classCount).toBe(10);
    expect(split.samples.map((s) => s.label)).toEqual([4, 0, 9]);
    const img = split.samples[1].image();
    expect(img.width).toBe(28);
    expect(img.channels).toBe(1);
    expect(img.pixels[0]).toBe(17); // seed 1 pattern
  });

  it("falls back to gzipped files", () => {
    const dir = tmp();
    writeMnistDir(dir, [1, 2], { gz: true });
    const split = loadSplit("mnist", dir, "train");
    expect(split.samples.map((s) => s.label)).toEqual([1, 2]);
  });

  it("reads the test split from the t10k files", () => {
    const dir = tmp();
    writeMnistDir(dir, [7], { split: "test" });
    expect(loadSplit("mnist", dir, "test").samples[0].label).toBe(7);
  });

  it("rejects the val split with an explanation", () => {
    expect(() => loadSplit("mnist", tmp(), "val")).toThrow(/train\/test only/);
  });

  it("rejects bad magic and size mismatches", () => {
    expect(() => parseIdxImages(Buffer.alloc(16))).toThrow(/bad magic/);
    expect(() => parseIdxLabels(Buffer.alloc(8))).toThrow(/bad magic/);
    const short = idxImageBytes([grayImage(0)]).subarray(0, 100);
    expect(() => parseIdxImages(Buffer.from(short))).toThrow(/header needs/);
  });

  it("rejects image/label count mismatches", () => {
    const dir = tmp();
    writeFileSync(
      join(dir, "train-images-idx3-ubyte"),
      idxImageBytes([grayImage(0), grayImage(1)]),
    );
    writeFileSync(join(dir, "train-labels-idx1-ubyte"), idxLabelBytes([5]));
    expect(() => loadSplit("mnist", dir, "train")).toThrow(/2 images vs 1 labels/);
  });

  it("names the missing file when the source is empty", () => {
    expect(() => loadSplit("mnist", tmp(), "train")).toThrow(
      /train-images-idx3-ubyte/,
    );
  });
});

describe("cifar10 (binary batches)", () => {
  function record(label: number, fill: [number, number, number]): Buffer {
    const rec = Buffer.alloc(3073);
    rec[0] = label;
    rec.fill(fill[0], 1, 1025);
    rec.fill(fill[1], 1025, 2049);
    rec.fill(fill[2], 2049, 3073);
    return rec;
  }

  it("converts planar storage to interleaved pixels", () => {
    const samples = parseCifarBatch(
      Buffer.concat([record(3, [10, 20, 30]), record(8, [1, 2, 3])]),
    );
    expect(samples.map((s) => s.label)).toEqual([3, 8]);
    const img = samples[0].image();
    expect(img.width).toBe(32);
    expect(img.channels).toBe(3);
    expect([img.pixels[0], img.pixels[1], img.pixels[2]]).toEqual([10, 20, 30]);
    expect(img.pixels[3 * 1023 + 1]).toBe(20);
  });

  it("loads train batches 1-5 in order and the test batch", () => {
    const dir = tmp();
    for (let b = 1; b <= 5; b++) {
      writeFileSync(join(dir, `data_batch_${b}.bin`), record(b, [0, 0, 0]));
    }
    writeFileSync(join(dir, "test_batch.bin"), record(9, [0, 0, 0]));
    expect(
      loadSplit("cifar10", dir, "train").samples.map((s) => s.label),
    ).toEqual([1, 2, 3, 4, 5]);
    expect(loadSplit("cifar10", dir, "test").samples.map((s) => s.label)).toEqual([9]);
  });

  it("rejects ragged batch files and bad labels", () => {
    expect(() => parseCifarBatch(Buffer.alloc(3072))).toThrow(/3073-byte records/);
    const bad = record(13, [0, 0, 0]);
    expect(() => parseCifarBatch(bad)).toThrow(/label 13/);
  });
});

describe("dermamnist (npz)", () => {
  it.each(["tiny-derma.npz", "tiny-derma-compressed.npz"])(
    "parses the numpy-written bundle %s",
    (name) => {
      const dir = tmp();
      writeFileSync(join(dir, "dermamnist.npz"), readFileSync(join(FIXTURES, name)));
      const split = loadSplit("dermamnist", dir, "train");
      expect(split.classCount).toBe(7);
      expect(split.samples.map((s) => s.label)).toEqual([3, 3, 3, 1, 1, 3]);
      const img = split.samples[0].image();
      expect([img.width, img.height, img.channels]).toEqual([28, 28, 3]);
      expect([img.pixels[0], img.pixels[1], img.pixels[2]]).toEqual([95, 130, 194]);
      expect(Array.from(img.pixels.slice(-3))).toEqual([197, 180, 109]);
    },
  );

  it("selects val and test splits", () => {
    const dir = tmp();
    writeFileSync(
      join(dir, "dermamnist.npz"),
      readFileSync(join(FIXTURES, "tiny-derma.npz")),
    );
    expect(loadSplit("dermamnist", dir, "val").samples.map((s) => s.label)).toEqual(
      [3, 3, 2],
    );
    expect(loadSplit("dermamnist", dir, "test").samples.map((s) => s.label)).toEqual(
      [0, 3, 2],
    );
  });

  it("lists available keys when a split is missing", () => {
    const bundle = parseNpz(readFileSync(join(FIXTURES, "tiny-derma.npz")));
    expect([...bundle.keys()].sort()).toEqual([
      "test_images", "test_labels", "train_images", "train_labels",
      "val_images", "val_labels",
    ]);
  });

  it("rejects non-u8 and fortran-order arrays", () => {
    const head = "\x93NUMPY\x01\x00";
    const make = (dict: string, payload: number) => {
      let text = dict;
      const total = 8 + 2 + text.length;
      const pad = (16 - ((total + 1) % 16)) % 16;
      text = text + " ".repeat(pad) + "\n";
      const buf = Buffer.alloc(10 + text.length + payload);
      buf.write(head, 0, "latin1");
      buf.writeUInt16LE(text.length, 8);
      buf.write(text, 10, "latin1");
      return buf;
    };
    expect(() =>
      parseNpy(make("{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }", 8)),
    ).toThrow(/dtype <f8 unsupported/);
    expect(() =>
      parseNpy(make("{'descr': '|u1', 'fortran_order': True, 'shape': (1,), }", 1)),
    ).toThrow(/fortran-order/);
    expect(() => parseNpy(Buffer.from("not numpy data"))).toThrow(/bad magic/);
  });

  it("rejects buffers without a zip directory", () => {
    expect(() => parseNpz(Buffer.alloc(64))).toThrow(/end-of-directory/);
  });
});

describe("facemask (annotated boxes)", () => {
  function pngBytes(width: number, height: number): Buffer {
    const png = new PNG({ width, height });
    for (let p = 0; p < width * height; p++) {
      png.data[p * 4] = p & 0xff; // R encodes the pixel index
      png.data[p * 4 + 1] = 60;
      png.data[p * 4 + 2] = 70;
      png.data[p * 4 + 3] = 255;
    }
    return PNG.sync.write(png);
  }

  function annotation(filename: string, objects: [string, number[]][]): string {
    const parts = objects.map(
      ([name, [xmin, ymin, xmax, ymax]]) => `
  <object>
    <name>${name}</name>
    <bndbox><xmin>${xmin}</xmin><ymin>${ymin}</ymin><xmax>${xmax}</xmax><ymax>${ymax}</ymax></bndbox>
  </object>`,
    );
    return `<annotation>\n  <filename>${filename}</filename>${parts.join("")}\n</annotation>\n`;
  }

  function vocDir(): string {
    const dir = tmp();
    mkdirSync(join(dir, "images"));
    mkdirSync(join(dir, "annotations"));
    writeFileSync(join(dir, "images", "scene0.png"), pngBytes(10, 8));
    writeFileSync(
      join(dir, "annotations", "scene0.xml"),
      annotation("scene0.png", [
        ["with_mask", [2, 1, 6, 5]],
        ["without_mask", [0, 0, 3, 3]],
      ]),
    );
    return dir;
  }

  it("yields one labeled crop per annotated box", () => {
    const split = loadSplit("facemask", vocDir(), "train");
    expect(split.classCount).toBe(3);
    expect(split.samples.map((s) => s.label)).toEqual([0, 1]);
    const crop = split.samples[0].image();
    expect([crop.width, crop.height]).toEqual([4, 4]);
    // crop starts at (x=2, y=1) of a 10-wide index-patterned image;
    // red encodes the source pixel index, green is constant 60
    expect(crop.pixels[0]).toBe((1 * 10 + 2) & 0xff);
    expect(crop.pixels[1]).toBe(60);
    expect(crop.pixels[3]).toBe((1 * 10 + 3) & 0xff);
  });

  it("orders samples by annotation filename", () => {
    const dir = vocDir();
    writeFileSync(join(dir, "images", "alpha.png"), pngBytes(6, 6));
    writeFileSync(
      join(dir, "annotations", "alpha.xml"),
      annotation("alpha.png", [["mask_weared_incorrect", [0, 0, 4, 4]]]),
    );
    const labels = loadSplit("facemask", dir, "train").samples.map((s) => s.label);
    expect(labels).toEqual([2, 0, 1]); // alpha.xml sorts before scene0.xml
  });

  it("rejects unknown class names", () => {
    const dir = vocDir();
    writeFileSync(
      join(dir, "annotations", "zz.xml"),
      annotation("scene0.png", [["hat", [0, 0, 2, 2]]]),
    );
    expect(() => loadSplit("facemask", dir, "train")).toThrow(/unknown class "hat"/);
  });

  it("only offers the unsplit archive as train", () => {
    expect(() => loadSplit("facemask", vocDir(), "test")).toThrow(/unsplit/);
  });

  it("explains missing directories", () => {
    expect(() => loadSplit("facemask", tmp(), "train")).toThrow(/offline/);
  });

  it("parses annotation XML strictly", () => {
    expect(() => parseAnnotationXml("<annotation></annotation>")).toThrow(
      /missing <filename>/,
    );
    expect(() =>
      parseAnnotationXml(
        "<annotation><filename>x.png</filename><object><name>with_mask</name>" +
          "<bndbox><xmin>1</xmin></bndbox></object></annotation>",
      ),
    ).toThrow(/lacks <ymin>/);
  });

  it("clamps out-of-bounds boxes instead of failing", () => {
    const img: RawImage = {
      width: 4,
      height: 4,
      channels: 1,
      pixels: Uint8Array.from({ length: 16 }, (_, i) => i),
    };
    const crop = cropImage(img, {
      name: "with_mask", xmin: 2, ymin: 2, xmax: 99, ymax: 99,
    });
    expect([crop.width, crop.height]).toEqual([2, 2]);
    expect(Array.from(crop.pixels)).toEqual([10, 11, 14, 15]);
  });
});

describe("loadSplit dispatch", () => {
  it("rejects unknown datasets", () => {
    expect(() =>
      loadSplit("imagenet" as never, tmp(), "train"),
    ).toThrow(DatasetError);
  });
});
