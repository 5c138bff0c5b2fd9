/**
 * Binary feature/label containers consumed by the training toolkit.
 *
 * Both formats are little-endian with a 4-byte magic and a u16 version:
 *
 *   features  "BTFT" | version u16 | rows u64 | cols u32 | dtype u8 (1=f32, 2=f64)
 *             | stats u8 (0/1) | [means f64*cols | stds f64*cols] | payload
 *   labels    "BTLB" | version u16 | rows u64 | class_count u32 | payload u16*rows
 *
 * Writers emit the exact byte layout the Python side reads; readers are an
 * independent implementation used by `verify` (they share no code with the
 * writers) and reject wrong magic, unknown versions, truncation, and
 * trailing bytes, reporting the offending byte offset.
 */

export const FEATURE_MAGIC = "BTFT";
export const LABEL_MAGIC = "BTLB";
export const FORMAT_VERSION = 1;

export class FormatError extends Error {
  override name = "FormatError";
}

export interface Standardization {
  means: Float64Array;
  stds: Float64Array;
}

export type FeatureDtype = "f32" | "f64";

const DTYPE_CODES: Record<FeatureDtype, number> = { f32: 1, f64: 2 };

// -- writers -----------------------------------------------------------------

export function featureFileBytes(
  features: Float32Array | Float64Array | number[][],
  dtype: FeatureDtype = "f32",
  shape?: [number, number],
  stats: Standardization | null = null,
): Buffer {
  let rows: number;
  let cols: number;
  let flat: Float64Array;
  if (Array.isArray(features)) {
    rows = features.length;
    cols = rows > 0 ? features[0].length : 0;
    flat = new Float64Array(rows * cols);
    for (let r = 0; r < rows; r++) {
      if (features[r].length !== cols) {
        throw new FormatError(
          `feature matrix is ragged: row ${r} has ${features[r].length} ` +
            `values, want ${cols}`,
        );
      }
      flat.set(features[r], r * cols);
    }
  } else {
    if (!shape) {
      throw new FormatError("flat feature arrays need an explicit shape");
    }
    [rows, cols] = shape;
    if (features.length !== rows * cols) {
      throw new FormatError(
        `feature payload holds ${features.length} values, ` +
          `shape says ${rows * cols}`,
      );
    }
    flat = Float64Array.from(features);
  }

  const code = DTYPE_CODES[dtype];
  const head = Buffer.alloc(4 + 2 + 8 + 4 + 1);
  head.write(FEATURE_MAGIC, 0, "ascii");
  head.writeUInt16LE(FORMAT_VERSION, 4);
  head.writeBigUInt64LE(BigInt(rows), 6);
  head.writeUInt32LE(cols, 14);
  head.writeUInt8(code, 18);

  const body = Buffer.alloc(rows * cols * (dtype === "f32" ? 4 : 8));
  for (let i = 0; i < flat.length; i++) {
    if (dtype === "f32") body.writeFloatLE(Math.fround(flat[i]), i * 4);
    else body.writeDoubleLE(flat[i], i * 8);
  }
  return Buffer.concat([head, statsBytes(stats, cols), body]);
}

export function labelFileBytes(
  labels: ArrayLike<number>,
  classCount: number,
): Buffer {
  if (classCount < 1 || classCount > 0xffff) {
    throw new FormatError(`class count ${classCount} outside u16 range`);
  }
  const head = Buffer.alloc(4 + 2 + 8 + 4);
  head.write(LABEL_MAGIC, 0, "ascii");
  head.writeUInt16LE(FORMAT_VERSION, 4);
  head.writeBigUInt64LE(BigInt(labels.length), 6);
  head.writeUInt32LE(classCount, 14);
  const body = Buffer.alloc(labels.length * 2);
  for (let i = 0; i < labels.length; i++) {
    const v = labels[i];
    if (!Number.isInteger(v) || v < 0 || v >= classCount) {
      throw new FormatError(
        `label values must lie in [0, ${classCount}), found ${v} at row ${i}`,
      );
    }
    body.writeUInt16LE(v, i * 2);
  }
  return Buffer.concat([head, body]);
}

function statsBytes(stats: Standardization | null, cols: number): Buffer {
  if (stats === null) return Buffer.from([0]);
  if (stats.means.length !== cols || stats.stds.length !== cols) {
    throw new FormatError(
      `standardization stats sized ${stats.means.length}, want ${cols}`,
    );
  }
  const out = Buffer.alloc(1 + 16 * cols);
  out.writeUInt8(1, 0);
  for (let i = 0; i < cols; i++) {
    out.writeDoubleLE(stats.means[i], 1 + i * 8);
    out.writeDoubleLE(stats.stds[i], 1 + (cols + i) * 8);
  }
  return out;
}

// -- independent readers -------------------------------------------------------

class Cursor {
  off = 0;
  constructor(
    private buf: Buffer,
    private what: string,
  ) {}

  take(n: number): Buffer {
    if (this.off + n > this.buf.length) {
      throw new FormatError(
        `${this.what}: truncated at byte ${this.off} ` +
          `(needed ${n} more, have ${this.buf.length - this.off})`,
      );
    }
    const piece = this.buf.subarray(this.off, this.off + n);
    this.off += n;
    return piece;
  }

  u8(): number {
    return this.take(1).readUInt8(0);
  }

  u16(): number {
    return this.take(2).readUInt16LE(0);
  }

  u32(): number {
    return this.take(4).readUInt32LE(0);
  }

  u64(): number {
    const big = this.take(8).readBigUInt64LE(0);
    if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new FormatError(`${this.what}: count ${big} too large`);
    }
    return Number(big);
  }

  done(): void {
    if (this.off !== this.buf.length) {
      throw new FormatError(
        `${this.what}: ${this.buf.length - this.off} trailing byte(s) ` +
          `at byte ${this.off}`,
      );
    }
  }

  header(magic: string): void {
    const got = this.take(4).toString("latin1");
    if (got !== magic) {
      throw new FormatError(
        `${this.what}: bad magic ${JSON.stringify(got)} at byte 0 ` +
          `(want ${JSON.stringify(magic)})`,
      );
    }
    const version = this.u16();
    if (version !== FORMAT_VERSION) {
      throw new FormatError(
        `${this.what}: unsupported version ${version} at byte 4`,
      );
    }
  }
}

export interface ParsedFeatures {
  rows: number;
  cols: number;
  dtype: FeatureDtype;
  data: Float64Array; // row-major
  stats: Standardization | null;
}

export function parseFeatureFile(buf: Buffer): ParsedFeatures {
  const cur = new Cursor(buf, "feature file");
  cur.header(FEATURE_MAGIC);
  const rows = cur.u64();
  const cols = cur.u32();
  const code = cur.u8();
  if (code !== 1 && code !== 2) {
    throw new FormatError(
      `feature file: unknown dtype code ${code} at byte ${cur.off - 1}`,
    );
  }
  const stats = parseStats(cur, cols);
  const size = code === 1 ? 4 : 8;
  const body = cur.take(rows * cols * size);
  cur.done();
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] =
      code === 1 ? body.readFloatLE(i * 4) : body.readDoubleLE(i * 8);
  }
  return { rows, cols, dtype: code === 1 ? "f32" : "f64", data, stats };
}

function parseStats(cur: Cursor, cols: number): Standardization | null {
  const flag = cur.u8();
  if (flag === 0) return null;
  if (flag !== 1) {
    throw new FormatError(
      `feature file: bad stats flag ${flag} at byte ${cur.off - 1}`,
    );
  }
  const means = new Float64Array(cols);
  const stds = new Float64Array(cols);
  let raw = cur.take(8 * cols);
  for (let i = 0; i < cols; i++) means[i] = raw.readDoubleLE(i * 8);
  raw = cur.take(8 * cols);
  for (let i = 0; i < cols; i++) stds[i] = raw.readDoubleLE(i * 8);
  return { means, stds };
}

export interface ParsedLabels {
  labels: Uint16Array;
  classCount: number;
}

export function parseLabelFile(buf: Buffer): ParsedLabels {
  const cur = new Cursor(buf, "label file");
  cur.header(LABEL_MAGIC);
  const rows = cur.u64();
  const classCount = cur.u32();
  const body = cur.take(rows * 2);
  cur.done();
  const labels = new Uint16Array(rows);
  for (let i = 0; i < rows; i++) {
    labels[i] = body.readUInt16LE(i * 2);
    if (labels[i] >= classCount) {
      throw new FormatError(
        `label file: index ${labels[i]} >= class count ${classCount}`,
      );
    }
  }
  return { labels, classCount };
}
