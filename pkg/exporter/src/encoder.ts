/** Frozen feature encoders.
 *
 * The real backbone is CLIP via `@xenova/transformers` (install it to use
 * `clip:<model-id>` backbones; weights are fetched by that library). The
 * `synthetic-<dim>` encoder is a deterministic stand-in that maps content
 * bytes to a seeded random unit direction; it keeps the whole export
 * pipeline testable on machines without model weights.
 */

import { BackboneUnavailable } from "./errors.js";
import { NoiseImage } from "./noise.js";
import { fnv1a, gaussian, mulberry32, normalize } from "./prng.js";

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  encodeText(text: string): Promise<Float64Array>;
  encodeImageBytes(bytes: Uint8Array): Promise<Float64Array>;
  encodeImagePixels(image: NoiseImage): Promise<Float64Array>;
}

/** Content-hash encoder: one fixed unit direction per distinct input. */
export class SyntheticEncoder implements Encoder {
  readonly id: string;
  readonly dim: number;

  constructor(dim: number) {
    if (dim < 2) throw new BackboneUnavailable(`synthetic encoder needs dim >= 2, got ${dim}`);
    this.dim = dim;
    this.id = `synthetic-${dim}`;
  }

  private embed(bytes: Uint8Array, salt: number): Float64Array {
    const rng = mulberry32(fnv1a(bytes) ^ salt);
    const v = new Float64Array(this.dim);
    for (let i = 0; i < this.dim; i++) v[i] = gaussian(rng);
    return normalize(v);
  }

  async encodeText(text: string): Promise<Float64Array> {
    return this.embed(new TextEncoder().encode(text), 0x7e47);
  }

  async encodeImageBytes(bytes: Uint8Array): Promise<Float64Array> {
    return this.embed(bytes, 0x1a3e);
  }

  async encodeImagePixels(image: NoiseImage): Promise<Float64Array> {
    return this.embed(new Uint8Array(image.data.buffer.slice(0)), 0x1a3e);
  }
}

/** CLIP text+image encoders behind the transformers.js pipeline API. */
class ClipEncoder implements Encoder {
  readonly id: string;
  readonly dim: number;
  private readonly lib: any;
  private readonly textPipe: any;
  private readonly imagePipe: any;

  constructor(id: string, dim: number, lib: any, textPipe: any, imagePipe: any) {
    this.id = id;
    this.dim = dim;
    this.lib = lib;
    this.textPipe = textPipe;
    this.imagePipe = imagePipe;
  }

  async encodeText(text: string): Promise<Float64Array> {
    const out = await this.textPipe(text, { pooling: "mean", normalize: true });
    return Float64Array.from(out.data as Float32Array);
  }

  async encodeImageBytes(bytes: Uint8Array): Promise<Float64Array> {
    const copy = new Uint8Array(bytes.length);
    copy.set(bytes);
    const blob = new Blob([copy.buffer as ArrayBuffer]);
    const image = await this.lib.RawImage.fromBlob(blob);
    const out = await this.imagePipe(image, { pooling: "mean", normalize: true });
    return Float64Array.from(out.data as Float32Array);
  }

  async encodeImagePixels(image: NoiseImage): Promise<Float64Array> {
    // canonical preprocessing applies unchanged; pixels are clamped by the
    // library's own conversion to uint8 image data
    const clamped = new Uint8ClampedArray(image.data.length);
    for (let i = 0; i < image.data.length; i++) {
      clamped[i] = Math.round(image.data[i] * 255);
    }
    const raw = new this.lib.RawImage(clamped, image.width, image.height, image.channels);
    const out = await this.imagePipe(raw, { pooling: "mean", normalize: true });
    return Float64Array.from(out.data as Float32Array);
  }
}

async function loadClip(modelId: string): Promise<Encoder> {
  let lib: any;
  try {
    // not a static dependency: installed separately by users with weights
    lib = await import("@xenova/transformers" as string);
  } catch (err) {
    throw new BackboneUnavailable(
      `backbone clip:${modelId} needs the optional dependency @xenova/transformers (${err})`,
    );
  }
  try {
    const textPipe = await lib.pipeline("feature-extraction", modelId);
    const imagePipe = await lib.pipeline("image-feature-extraction", modelId);
    const probe = await textPipe("probe", { pooling: "mean", normalize: true });
    const dim = (probe.data as Float32Array).length;
    return new ClipEncoder(`clip:${modelId}`, dim, lib, textPipe, imagePipe);
  } catch (err) {
    throw new BackboneUnavailable(`could not load weights for ${modelId}: ${err}`);
  }
}

/** Resolve a backbone identifier: `synthetic-<dim>` or `clip:<model-id>`. */
export async function loadEncoder(backbone: string): Promise<Encoder> {
  const synthetic = backbone.match(/^synthetic-(\d+)$/);
  if (synthetic) return new SyntheticEncoder(parseInt(synthetic[1], 10));
  if (backbone.startsWith("clip:")) return loadClip(backbone.slice("clip:".length));
  throw new BackboneUnavailable(`unknown backbone '${backbone}'`);
}
