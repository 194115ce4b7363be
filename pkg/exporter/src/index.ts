export * from "./errors.js";
export * from "./format.js";
export * from "./noise.js";
export { Encoder, SyntheticEncoder, loadEncoder } from "./encoder.js";
export * from "./export.js";
export { run as runCli } from "./cli.js";
