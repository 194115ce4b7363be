"""Exception types shared across the engine."""


class ZsnttaError(Exception):
    """Base class for all engine errors."""


class ZeroVector(ZsnttaError):
    """Vector has (near-)zero norm and cannot be normalized."""


class FeatureFileError(ZsnttaError):
    """Base class for feature-file parsing problems."""


class BadMagic(FeatureFileError):
    """File does not start with the expected magic bytes."""


class TruncatedPayload(FeatureFileError):
    """Payload byte length is inconsistent with the header."""


class LabelOutOfRange(FeatureFileError):
    """Record label is neither the noisy sentinel nor a valid class index."""


class BadSpec(ZsnttaError):
    """Synthetic stream specification is invalid."""


class InsufficientRecords(ZsnttaError):
    """Not enough noisy records to satisfy the requested noise ratio."""


class DimMismatch(ZsnttaError):
    """Operand dimensions are incompatible."""


class EmptyQueue(ZsnttaError):
    """Adaptive threshold requested on an empty score queue."""


class EmptyBatch(ZsnttaError):
    """Loss/gradient requested on an empty batch."""


class ShapeMismatch(ZsnttaError):
    """Gradient shapes do not match optimizer state."""


class EmptyBank(ZsnttaError):
    """Noise injection configured with an empty noise bank."""


class InjectedRecord(ZsnttaError):
    """An injected-origin decision was fed to the metrics accumulator."""


class OneClassOnly(ZsnttaError):
    """Ranking metric requested but only one class is present."""


class EmptyLog(ZsnttaError):
    """Histogram requested over an empty decision log."""
