/** Export jobs: text classifiers, image features, and noise banks, all
 * written in the engine's binary feature-file format. Every exported
 * feature is unit-normalized before the float32 cast. */

import * as fs from "node:fs";
import * as path from "node:path";

import { Encoder, loadEncoder } from "./encoder.js";
import {
  DatasetUnreadable,
  InvalidPromptTemplate,
  UnknownClassName,
} from "./errors.js";
import { FeatureRecord, NOISY_LABEL, writeFeatureFile } from "./format.js";
import { NoiseType, isNoiseType, makeNoiseImage } from "./noise.js";
import { BadNoiseSpec } from "./errors.js";
import { mulberry32 } from "./prng.js";

export const CLASS_SLOT = "{}";

export interface NoiseSpec {
  type: NoiseType;
  count: number;
  imageSize: number;
  seed: number;
}

export interface ExportJob {
  backbone: string; // synthetic-<dim> | clip:<model-id>
  output: string;
  classNames?: string[];
  promptTemplate?: string; // exactly one {} slot
  dataset?: string; // manifest path
  split?: string;
  noisyLabels?: boolean; // force every record label to -1 (noisy exports)
  noise?: NoiseSpec;
}

interface ManifestEntry {
  path: string;
  label?: number;
}

export function fillPrompt(template: string, className: string): string {
  const slots = template.split(CLASS_SLOT).length - 1;
  if (slots !== 1) {
    throw new InvalidPromptTemplate(
      `prompt template must contain exactly one ${CLASS_SLOT} slot, found ${slots}`,
    );
  }
  return template.replace(CLASS_SLOT, className);
}

function checkClassNames(names: string[]): void {
  if (names.length === 0) throw new UnknownClassName("class-name list is empty");
  for (const name of names) {
    if (name.trim() === "" || name.includes("\n")) {
      throw new UnknownClassName(`unusable class name ${JSON.stringify(name)}`);
    }
  }
}

function toFloat32(v: Float64Array): Float32Array {
  return Float32Array.from(v);
}

async function encodePrototypes(encoder: Encoder, job: ExportJob): Promise<Float32Array[]> {
  const names = job.classNames ?? [];
  checkClassNames(names);
  const template = job.promptTemplate ?? `this is a photo of a ${CLASS_SLOT}`;
  const rows: Float32Array[] = [];
  for (const name of names) {
    rows.push(toFloat32(await encoder.encodeText(fillPrompt(template, name))));
  }
  return rows;
}

function writeJobMetadata(job: ExportJob, encoder: Encoder, extra: object): void {
  const meta = {
    backbone: encoder.id,
    dim: encoder.dim,
    output: path.basename(job.output),
    split: job.split ?? null,
    preprocessing: "backbone-canonical, applied unchanged (noise images included)",
    ...extra,
  };
  fs.writeFileSync(`${job.output}.meta.json`, JSON.stringify(meta, null, 2) + "\n");
}

/** K unit-normalized text embeddings, one per class name, written as a
 * records-free feature file (classifier block + sidecar only). */
export async function exportTextClassifier(job: ExportJob): Promise<void> {
  const encoder = await loadEncoder(job.backbone);
  const prototypes = await encodePrototypes(encoder, job);
  writeFeatureFile(job.output, prototypes, job.classNames!, [], encoder.dim);
  writeJobMetadata(job, encoder, { kind: "text-classifier", classes: job.classNames!.length });
}

function readManifest(manifestPath: string): ManifestEntry[] {
  let raw: string;
  try {
    raw = fs.readFileSync(manifestPath, "utf-8");
  } catch (err) {
    throw new DatasetUnreadable(`cannot read manifest ${manifestPath}: ${err}`);
  }
  let parsed: any;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    throw new DatasetUnreadable(`manifest ${manifestPath} is not valid JSON: ${err}`);
  }
  const entries = parsed.images;
  if (!Array.isArray(entries)) {
    throw new DatasetUnreadable(`manifest ${manifestPath} has no "images" array`);
  }
  return entries as ManifestEntry[];
}

/** One unit-normalized feature per manifest image, labels preserved in
 * order (-1 everywhere for noisy exports), plus the text classifier block. */
export async function exportImageFeatures(job: ExportJob): Promise<void> {
  const encoder = await loadEncoder(job.backbone);
  const prototypes = await encodePrototypes(encoder, job);
  const entries = readManifest(job.dataset!);
  const base = path.dirname(job.dataset!);

  const records: FeatureRecord[] = [];
  for (const entry of entries) {
    let bytes: Uint8Array;
    try {
      bytes = fs.readFileSync(path.resolve(base, entry.path));
    } catch (err) {
      throw new DatasetUnreadable(`cannot read image ${entry.path}: ${err}`);
    }
    let label: number;
    if (job.noisyLabels) {
      label = NOISY_LABEL;
    } else if (entry.label === undefined) {
      throw new DatasetUnreadable(`image ${entry.path} has no label; use noisy export for unlabeled data`);
    } else {
      label = entry.label;
    }
    records.push({ label, feature: toFloat32(await encoder.encodeImageBytes(bytes)) });
  }
  writeFeatureFile(job.output, prototypes, job.classNames!, records, encoder.dim);
  writeJobMetadata(job, encoder, {
    kind: "image-features",
    dataset: path.basename(job.dataset!),
    images: records.length,
    noisy: Boolean(job.noisyLabels),
  });
}

/** `count` seeded noise images pushed through the frozen image encoder,
 * written as a K=0 feature file with every label noisy. */
export async function exportNoiseBank(job: ExportJob): Promise<void> {
  const spec = job.noise;
  if (!spec) throw new BadNoiseSpec("noise-bank export needs a noise spec");
  if (!isNoiseType(spec.type)) throw new BadNoiseSpec(`unknown noise type ${String(spec.type)}`);
  if (spec.count < 1) throw new BadNoiseSpec(`count must be >= 1, got ${spec.count}`);
  if (spec.imageSize < 1) throw new BadNoiseSpec(`image size must be >= 1, got ${spec.imageSize}`);

  const encoder = await loadEncoder(job.backbone);
  const rng = mulberry32(spec.seed);
  const records: FeatureRecord[] = [];
  for (let i = 0; i < spec.count; i++) {
    const image = makeNoiseImage(spec.type, spec.imageSize, rng);
    records.push({
      label: NOISY_LABEL,
      feature: toFloat32(await encoder.encodeImagePixels(image)),
    });
  }
  writeFeatureFile(job.output, [], null, records, encoder.dim);
  writeJobMetadata(job, encoder, { kind: "noise-bank", noise: spec });
}
