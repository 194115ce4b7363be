#!/usr/bin/env node
/** Export CLI.
 *
 *   zsntta-export text-classifier --class-names cat,dog --backbone synthetic-64 --out cls.bin
 *   zsntta-export image-features --dataset manifest.json --class-names cat,dog \
 *       --backbone synthetic-64 --out id.bin [--noisy] [--split test]
 *   zsntta-export noise-bank --type gaussian --count 1000 --image-size 224 \
 *       --seed 0 --backbone synthetic-64 --out bank.bin
 */

import { ExportError } from "./errors.js";
import { CLASS_SLOT, ExportJob, exportImageFeatures, exportNoiseBank, exportTextClassifier } from "./export.js";
import { NoiseType } from "./noise.js";

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new ExportError(`unexpected argument ${arg}`);
    const name = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags.set(name, argv[++i]);
    } else {
      flags.set(name, true);
    }
  }
  return flags;
}

function need(flags: Map<string, string | boolean>, name: string): string {
  const value = flags.get(name);
  if (typeof value !== "string") throw new ExportError(`missing --${name}`);
  return value;
}

function baseJob(flags: Map<string, string | boolean>): ExportJob {
  return {
    backbone: need(flags, "backbone"),
    output: need(flags, "out"),
    split: typeof flags.get("split") === "string" ? (flags.get("split") as string) : undefined,
  };
}

export async function run(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    if (command === "text-classifier") {
      await exportTextClassifier({
        ...baseJob(flags),
        classNames: need(flags, "class-names").split(","),
        promptTemplate:
          typeof flags.get("prompt") === "string"
            ? (flags.get("prompt") as string)
            : `this is a photo of a ${CLASS_SLOT}`,
      });
    } else if (command === "image-features") {
      await exportImageFeatures({
        ...baseJob(flags),
        classNames: need(flags, "class-names").split(","),
        promptTemplate:
          typeof flags.get("prompt") === "string"
            ? (flags.get("prompt") as string)
            : `this is a photo of a ${CLASS_SLOT}`,
        dataset: need(flags, "dataset"),
        noisyLabels: flags.get("noisy") === true,
      });
    } else if (command === "noise-bank") {
      await exportNoiseBank({
        ...baseJob(flags),
        noise: {
          type: need(flags, "type") as NoiseType,
          count: parseInt(need(flags, "count"), 10),
          imageSize: parseInt(need(flags, "image-size"), 10),
          seed: parseInt(need(flags, "seed"), 10),
        },
      });
    } else {
      console.error("usage: zsntta-export <text-classifier|image-features|noise-bank> [flags]");
      return 2;
    }
  } catch (err) {
    if (err instanceof ExportError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  run(process.argv.slice(2)).then((code) => process.exit(code));
}
