/** Seeded noise-image generators.
 *
 * Each image is a float pixel grid (channels-last, 3 channels) destined for
 * the frozen image encoder; the encoder's own preprocessing is applied
 * unchanged afterwards.
 */

import { BadNoiseSpec } from "./errors.js";
import { Rng, gaussian, poisson } from "./prng.js";

export const NOISE_TYPES = ["gaussian", "uniform", "salt_and_pepper", "poisson"] as const;
export type NoiseType = (typeof NOISE_TYPES)[number];

export interface NoiseImage {
  width: number;
  height: number;
  channels: number;
  data: Float32Array; // h * w * c, channels-last
}

export function makeNoiseImage(type: NoiseType, size: number, rng: Rng): NoiseImage {
  if (size < 1) throw new BadNoiseSpec(`image size must be >= 1, got ${size}`);
  const n = size * size * 3;
  const data = new Float32Array(n);
  switch (type) {
    case "gaussian": // per-pixel standard normal
      for (let i = 0; i < n; i++) data[i] = gaussian(rng);
      break;
    case "uniform":
      for (let i = 0; i < n; i++) data[i] = rng();
      break;
    case "salt_and_pepper":
      for (let i = 0; i < n; i++) data[i] = rng() < 0.5 ? 0.0 : 1.0;
      break;
    case "poisson": // photon-count style noise, scaled toward [0, 1]
      for (let i = 0; i < n; i++) data[i] = poisson(rng, 3.0) / 6.0;
      break;
    default:
      throw new BadNoiseSpec(`unknown noise type ${String(type)}`);
  }
  return { width: size, height: size, channels: 3, data };
}

export function isNoiseType(value: string): value is NoiseType {
  return (NOISE_TYPES as readonly string[]).includes(value);
}
