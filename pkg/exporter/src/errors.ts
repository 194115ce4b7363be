export class ExportError extends Error {}

/** The requested backbone module or weights cannot be loaded. */
export class BackboneUnavailable extends ExportError {}

/** A class name is unusable (empty, or breaks the line-based sidecar). */
export class UnknownClassName extends ExportError {}

/** Dataset manifest or one of its image files cannot be read. */
export class DatasetUnreadable extends ExportError {}

/** Noise-bank specification is invalid (type, count, or image size). */
export class BadNoiseSpec extends ExportError {}

/** Prompt template must contain exactly one class-name slot. */
export class InvalidPromptTemplate extends ExportError {}
