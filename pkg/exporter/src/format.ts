/** Binary feature-file writer/reader.
 *
 * Layout (little-endian): magic "ZNTA", u32 version=1, u32 D, u32 K,
 * u64 record count, K*D float32 classifier prototypes (row-major), then per
 * record an i32 label (-1 = noisy) and D float32 feature values. Class
 * names go to a `<path>.names` sidecar, one per line. Noise banks use K=0.
 */

import * as fs from "node:fs";

export const MAGIC = "ZNTA";
export const FORMAT_VERSION = 1;
export const NOISY_LABEL = -1;
const HEADER_BYTES = 24;

export interface FeatureRecord {
  label: number;
  feature: Float32Array;
}

export interface FeatureFileContent {
  dim: number;
  prototypes: Float32Array[]; // K rows (empty for noise banks)
  classNames: string[] | null;
  records: FeatureRecord[];
}

export function encodeFeatureFile(
  prototypes: Float32Array[],
  records: FeatureRecord[],
  dim: number,
): Buffer {
  const k = prototypes.length;
  const total =
    HEADER_BYTES + 4 * k * dim + records.length * (4 + 4 * dim);
  const buf = Buffer.alloc(total);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  buf.write(MAGIC, 0, "ascii");
  view.setUint32(4, FORMAT_VERSION, true);
  view.setUint32(8, dim, true);
  view.setUint32(12, k, true);
  view.setBigUint64(16, BigInt(records.length), true);

  let off = HEADER_BYTES;
  for (const row of prototypes) {
    if (row.length !== dim) throw new Error(`prototype row has ${row.length} values, expected ${dim}`);
    for (let j = 0; j < dim; j++, off += 4) view.setFloat32(off, row[j], true);
  }
  for (const rec of records) {
    if (rec.feature.length !== dim) throw new Error(`record has ${rec.feature.length} values, expected ${dim}`);
    if (rec.label !== NOISY_LABEL && (rec.label < 0 || rec.label >= k)) {
      throw new Error(`label ${rec.label} invalid for K=${k}`);
    }
    view.setInt32(off, rec.label, true);
    off += 4;
    for (let j = 0; j < dim; j++, off += 4) view.setFloat32(off, rec.feature[j], true);
  }
  return buf;
}

export function writeFeatureFile(
  path: string,
  prototypes: Float32Array[],
  classNames: string[] | null,
  records: FeatureRecord[],
  dim: number,
): void {
  fs.writeFileSync(path, encodeFeatureFile(prototypes, records, dim));
  if (classNames !== null) {
    fs.writeFileSync(`${path}.names`, classNames.map((n) => n + "\n").join(""), "utf-8");
  }
}

export function readFeatureFile(path: string): FeatureFileContent {
  const buf = fs.readFileSync(path);
  if (buf.length < HEADER_BYTES || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path} is not a feature file (bad magic)`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const version = view.getUint32(4, true);
  if (version !== FORMAT_VERSION) throw new Error(`unsupported version ${version}`);
  const dim = view.getUint32(8, true);
  const k = view.getUint32(12, true);
  const count = Number(view.getBigUint64(16, true));
  const expected = HEADER_BYTES + 4 * k * dim + count * (4 + 4 * dim);
  if (buf.length !== expected) {
    throw new Error(`${path}: expected ${expected} bytes, found ${buf.length}`);
  }

  let off = HEADER_BYTES;
  const prototypes: Float32Array[] = [];
  for (let i = 0; i < k; i++) {
    const row = new Float32Array(dim);
    for (let j = 0; j < dim; j++, off += 4) row[j] = view.getFloat32(off, true);
    prototypes.push(row);
  }
  const records: FeatureRecord[] = [];
  for (let i = 0; i < count; i++) {
    const label = view.getInt32(off, true);
    off += 4;
    if (label !== NOISY_LABEL && (label < 0 || label >= k)) {
      throw new Error(`record ${i} label ${label} invalid for K=${k}`);
    }
    const feature = new Float32Array(dim);
    for (let j = 0; j < dim; j++, off += 4) feature[j] = view.getFloat32(off, true);
    records.push({ label, feature });
  }

  let classNames: string[] | null = null;
  if (k > 0 && fs.existsSync(`${path}.names`)) {
    classNames = fs
      .readFileSync(`${path}.names`, "utf-8")
      .split("\n")
      .slice(0, -1);
    if (classNames.length !== k) {
      throw new Error(`sidecar has ${classNames.length} names, expected ${k}`);
    }
  }
  return { dim, prototypes, classNames, records };
}
