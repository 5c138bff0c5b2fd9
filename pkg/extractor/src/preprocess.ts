/**
 * Image preparation for the frozen backbone: bilinear resize to 224x224,
 * grayscale replicated to three channels, then per-channel normalization
 * with the statistics the pretrained checkpoint's preprocessor expects.
 *
 * Everything is plain float arithmetic with explicit f32 rounding at the
 * end, so identical input bytes produce identical output bytes on every
 * platform.
 */

export const TARGET_SIZE = 224;

// channel statistics baked into the backbone's published preprocessor
export const NORM_MEAN = [0.485, 0.456, 0.406] as const;
export const NORM_STD = [0.229, 0.224, 0.225] as const;

export interface RawImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** HWC, 8-bit, length = width * height * channels */
  pixels: Uint8Array;
}

export function assertImageWellFormed(img: RawImage): void {
  const want = img.width * img.height * img.channels;
  if (img.pixels.length !== want) {
    throw new Error(
      `image buffer holds ${img.pixels.length} bytes, ` +
        `${img.width}x${img.height}x${img.channels} needs ${want}`,
    );
  }
  if (img.width < 1 || img.height < 1) {
    throw new Error(`image has empty extent ${img.width}x${img.height}`);
  }
}

/** Bilinear resample of one channel plane (half-pixel-center convention). */
function resizePlane(
  src: Uint8Array,
  width: number,
  height: number,
  channels: number,
  channel: number,
  out: Float64Array,
): void {
  const scaleX = width / TARGET_SIZE;
  const scaleY = height / TARGET_SIZE;
  for (let y = 0; y < TARGET_SIZE; y++) {
    const sy = Math.min(Math.max((y + 0.5) * scaleY - 0.5, 0), height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, height - 1);
    const fy = sy - y0;
    for (let x = 0; x < TARGET_SIZE; x++) {
      const sx = Math.min(Math.max((x + 0.5) * scaleX - 0.5, 0), width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, width - 1);
      const fx = sx - x0;
      const p00 = src[(y0 * width + x0) * channels + channel];
      const p01 = src[(y0 * width + x1) * channels + channel];
      const p10 = src[(y1 * width + x0) * channels + channel];
      const p11 = src[(y1 * width + x1) * channels + channel];
      const top = p00 + (p01 - p00) * fx;
      const bottom = p10 + (p11 - p10) * fx;
      out[y * TARGET_SIZE + x] = top + (bottom - top) * fy;
    }
  }
}

/**
 * Resize + replicate + normalize; returns CHW f32 of length
 * 3 * 224 * 224 ready for the backbone.
 */
export function preprocess(img: RawImage): Float32Array {
  assertImageWellFormed(img);
  const plane = TARGET_SIZE * TARGET_SIZE;
  const out = new Float32Array(3 * plane);
  const scratch = new Float64Array(plane);
  for (let c = 0; c < 3; c++) {
    const srcChannel = img.channels === 1 ? 0 : c;
    resizePlane(
      img.pixels, img.width, img.height, img.channels, srcChannel, scratch,
    );
    const mean = NORM_MEAN[c];
    const std = NORM_STD[c];
    for (let i = 0; i < plane; i++) {
      out[c * plane + i] = Math.fround((scratch[i] / 255 - mean) / std);
    }
  }
  return out;
}
