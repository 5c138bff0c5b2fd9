/**
 * Frozen image backbones. A backbone maps a preprocessed 3x224x224 tensor
 * to the final-layer class token and distillation token (both length
 * `hiddenSize`); the extractor then fuses the two tokens into one feature
 * vector.
 *
 * Two implementations:
 *  - GraphBackbone runs a converted graph model from local files (the real
 *    pretrained checkpoint; needs `@tensorflow/tfjs` and a `--model-dir`).
 *  - StubBackbone is a deterministic stand-in for offline tests and the
 *    committed cross-language fixture: tokens are derived from a SHA-256
 *    of the preprocessed pixel bytes, so identical images give identical
 *    features and any pixel change scrambles them.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import { join } from "node:path";

export const DEFAULT_MODEL_ID = "deit-base-distilled-patch16-224";
export const HIDDEN_SIZE = 768;

export interface TokenPair {
  classToken: Float32Array;
  distillToken: Float32Array;
}

export interface Backbone {
  readonly id: string;
  readonly hiddenSize: number;
  tokens(batch: Float32Array[]): Promise<TokenPair[]>;
}

export type TokenMode = "mean" | "class" | "concat";

export function fuseTokens(pair: TokenPair, mode: TokenMode): Float32Array {
  const n = pair.classToken.length;
  if (pair.distillToken.length !== n) {
    throw new Error(
      `token lengths differ: ${n} vs ${pair.distillToken.length}`,
    );
  }
  switch (mode) {
    case "class":
      return pair.classToken.slice();
    case "concat": {
      const out = new Float32Array(2 * n);
      out.set(pair.classToken, 0);
      out.set(pair.distillToken, n);
      return out;
    }
    case "mean": {
      const out = new Float32Array(n);
      for (let i = 0; i < n; i++) {
        out[i] = Math.fround((pair.classToken[i] + pair.distillToken[i]) / 2);
      }
      return out;
    }
  }
}

export function featureWidth(hiddenSize: number, mode: TokenMode): number {
  return mode === "concat" ? 2 * hiddenSize : hiddenSize;
}

// -- deterministic stub ---------------------------------------------------------

/** splitmix64: fast, well-distributed 64-bit stream from a 64-bit seed. */
function* splitmix64(seed: bigint): Generator<bigint> {
  const mask = (1n << 64n) - 1n;
  let state = seed & mask;
  for (;;) {
    state = (state + 0x9e3779b97f4a7c15n) & mask;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & mask;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & mask;
    yield z ^ (z >> 31n);
  }
}

function tokenFromHash(digest: Buffer, domain: string, n: number): Float32Array {
  const seeded = createHash("sha256").update(digest).update(domain).digest();
  const seed = seeded.readBigUInt64LE(0);
  const stream = splitmix64(seed);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    // top 53 bits -> [0, 1) double, mapped to [-1, 1)
    const u = Number(stream.next().value >> 11n) / 2 ** 53;
    out[i] = Math.fround(u * 2 - 1);
  }
  return out;
}

export class StubBackbone implements Backbone {
  readonly id = "stub-deterministic";
  readonly hiddenSize = HIDDEN_SIZE;

  async tokens(batch: Float32Array[]): Promise<TokenPair[]> {
    return batch.map((tensor) => {
      const digest = createHash("sha256")
        .update(Buffer.from(tensor.buffer, tensor.byteOffset, tensor.byteLength))
        .digest();
      return {
        classToken: tokenFromHash(digest, "class-token", this.hiddenSize),
        distillToken: tokenFromHash(digest, "distill-token", this.hiddenSize),
      };
    });
  }
}

// -- converted-checkpoint loader -------------------------------------------------

interface GraphModelLike {
  execute(input: unknown): unknown;
}

/**
 * Load a locally converted graph model (`model.json` plus weight shards in
 * `modelDir`). The model must map a [batch, 3, 224, 224] float input to a
 * [batch, 2, hiddenSize] stack of (class, distillation) tokens.
 */
export async function loadGraphBackbone(
  modelDir: string,
  id: string = DEFAULT_MODEL_ID,
): Promise<Backbone> {
  // resolved at runtime so the optional dependency stays optional; the
  // indirection keeps the compiler from requiring its type packages
  const tfjsModule = "@tensorflow/tfjs";
  let tf: any;
  try {
    tf = await import(tfjsModule);
  } catch {
    throw new Error(
      "the converted-checkpoint backbone needs the optional " +
        "'@tensorflow/tfjs' dependency; install it, or pass --stub to use " +
        "the deterministic test backbone",
    );
  }
  const manifestPath = join(modelDir, "model.json");
  let manifest: any;
  try {
    manifest = JSON.parse(readFileSync(manifestPath, "utf-8"));
  } catch (err) {
    throw new Error(
      `cannot read converted model manifest at ${manifestPath} ` +
        `(${(err as Error).message}); model weights are not retrievable ` +
        "offline - convert and place the checkpoint there, or pass --stub",
    );
  }

  const handler = {
    load: async () => {
      const specs: any[] = [];
      const buffers: Buffer[] = [];
      for (const group of manifest.weightsManifest ?? []) {
        specs.push(...group.weights);
        for (const path of group.paths) {
          buffers.push(readFileSync(join(modelDir, path)));
        }
      }
      const blob = Buffer.concat(buffers);
      return {
        modelTopology: manifest.modelTopology,
        format: manifest.format,
        generatedBy: manifest.generatedBy,
        convertedBy: manifest.convertedBy,
        weightSpecs: specs,
        weightData: blob.buffer.slice(
          blob.byteOffset, blob.byteOffset + blob.byteLength,
        ),
      };
    },
  };
  const model: GraphModelLike = await tf.loadGraphModel(handler);

  return {
    id,
    hiddenSize: HIDDEN_SIZE,
    async tokens(batch: Float32Array[]): Promise<TokenPair[]> {
      const plane = batch[0].length;
      const stacked = new Float32Array(batch.length * plane);
      batch.forEach((t, i) => stacked.set(t, i * plane));
      const input = tf.tensor4d(stacked, [batch.length, 3, 224, 224]);
      const output: any = model.execute(input);
      const data: Float32Array = await output.data();
      const [, tokens, width] = output.shape;
      if (tokens !== 2 || width !== HIDDEN_SIZE) {
        throw new Error(
          `converted model emits shape ${output.shape}, ` +
            `want [batch, 2, ${HIDDEN_SIZE}]`,
        );
      }
      input.dispose();
      output.dispose();
      return batch.map((_, i) => ({
        classToken: data.slice(i * 2 * width, i * 2 * width + width),
        distillToken: data.slice(i * 2 * width + width, (i + 1) * 2 * width),
      }));
    },
  };
}
