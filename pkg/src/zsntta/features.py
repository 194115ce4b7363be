"""Embedding stream data model, binary feature-file IO, and synthetic streams.

The on-disk layout (all little-endian):

    bytes 0-3   magic "ZNTA"
    u32         format version (currently 1)
    u32         D  (feature dimension)
    u32         K  (number of classifier prototypes; 0 for noise banks)
    u64         record count
    K*D f32     classifier prototypes, row-major
    per record  i32 label (-1 = noisy), D f32 feature values

Class names live in a sidecar text file `<path>.names`, one name per line,
same order as the prototype rows.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BadSpec,
    FeatureFileError,
    InsufficientRecords,
    LabelOutOfRange,
    TruncatedPayload,
    ZeroVector,
)

MAGIC = b"ZNTA"
FORMAT_VERSION = 1
NOISY_LABEL = -1

ORIGIN_ORIGINAL = "original"
ORIGIN_INJECTED = "injected"

NOISE_TYPES = (
    "gaussian",
    "uniform",
    "salt_and_pepper",
    "poisson",
    "synthetic_gaussian_feature",
)

_HEADER = struct.Struct("<4sIIIQ")


def normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm (float64), preserving direction.

    Raises ZeroVector when the norm is below 1e-12.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ZeroVector("expected a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ZeroVector("vector contains non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm < 1e-12:
        raise ZeroVector(f"vector norm {norm} is below 1e-12")
    return arr / norm


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization in float64."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ZeroVector("matrix contains a (near-)zero row")
    return m / norms


@dataclass
class ClassifierBank:
    """Unit-normalized text-prototype matrix with one class name per row."""

    prototypes: np.ndarray  # (K, D) float32
    class_names: list[str]

    def __post_init__(self):
        self.prototypes = np.ascontiguousarray(self.prototypes, dtype=np.float32)
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 1:
            raise ValueError("prototypes must be a non-empty (K, D) matrix")
        if len(self.class_names) != self.prototypes.shape[0]:
            raise ValueError("class_names count must match prototype rows")
        norms = np.linalg.norm(self.prototypes.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            raise ValueError("prototype rows must be unit-norm within 1e-3")

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


@dataclass(slots=True)
class StreamRecord:
    """One test sample: embedding, ground truth, and provenance.

    label is a class index in [0, K) or NOISY_LABEL (-1); origin is
    "original" for stream data and "injected:<noise_type>" for samples the
    pipeline inserted itself.
    """

    feature: np.ndarray  # (D,) float32
    label: int
    origin: str = ORIGIN_ORIGINAL

    @property
    def is_noisy(self) -> bool:
        return self.label == NOISY_LABEL

    @property
    def is_injected(self) -> bool:
        return self.origin.startswith(ORIGIN_INJECTED)


@dataclass
class NoiseBank:
    """Pre-exported noise features used for scheduled injection."""

    noise_type: str
    features: np.ndarray  # (n, D) float32

    def __post_init__(self):
        if self.noise_type not in NOISE_TYPES:
            raise ValueError(f"unknown noise type {self.noise_type!r}")
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ValueError("noise bank features must be a (n, D) matrix")

    def __len__(self) -> int:
        return self.features.shape[0]


def _sidecar_path(path) -> str:
    return f"{os.fspath(path)}.names"


def write_feature_file(bank: ClassifierBank | None, records, path) -> None:
    """Serialize a classifier bank plus records to the binary format.

    bank may be None (K=0), which is how noise banks are stored. Features
    are cast to float32; writing twice produces byte-identical files.
    When the bank carries class names, a `<path>.names` sidecar is written.
    """
    records = list(records)
    if bank is not None:
        dim = bank.dim
    elif records:
        dim = len(records[0].feature)
    else:
        raise ValueError("cannot infer dimension from empty bank and records")
    k = bank.num_classes if bank is not None else 0

    rec_dtype = np.dtype([("label", "<i4"), ("feature", "<f4", (dim,))])
    block = np.empty(len(records), dtype=rec_dtype)
    for i, rec in enumerate(records):
        feat = np.asarray(rec.feature, dtype=np.float32)
        if feat.shape != (dim,):
            raise ValueError(f"record {i} has dimension {feat.shape}, expected ({dim},)")
        if rec.label != NOISY_LABEL and not (0 <= rec.label < k):
            raise LabelOutOfRange(f"record {i} label {rec.label} invalid for K={k}")
        block[i] = (rec.label, feat)

    payload = bytearray()
    payload += _HEADER.pack(MAGIC, FORMAT_VERSION, dim, k, len(records))
    if bank is not None:
        payload += np.ascontiguousarray(bank.prototypes, dtype="<f4").tobytes()
    payload += block.tobytes()

    with open(path, "wb") as fh:
        fh.write(payload)
    if bank is not None:
        with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
            fh.writelines(name + "\n" for name in bank.class_names)


def read_feature_file(path) -> tuple[ClassifierBank | None, list[StreamRecord]]:
    """Parse a feature file back into (bank, records).

    Returns bank=None for K=0 files (noise banks). Class names come from
    the sidecar when present, otherwise placeholder names are synthesized.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise BadMagic(f"{path} does not start with {MAGIC!r}")
    _, version, dim, k, count = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise FeatureFileError(f"unsupported format version {version}")
    if dim == 0:
        raise FeatureFileError("header declares zero feature dimension")

    classifier_bytes = 4 * k * dim
    record_bytes = count * (4 + 4 * dim)
    expected = _HEADER.size + classifier_bytes + record_bytes
    if len(raw) != expected:
        raise TruncatedPayload(f"{path}: expected {expected} bytes, found {len(raw)}")

    bank = None
    if k > 0:
        protos = np.frombuffer(
            raw, dtype="<f4", count=k * dim, offset=_HEADER.size
        ).reshape(k, dim)
        names_path = _sidecar_path(path)
        if os.path.exists(names_path):
            with open(names_path, encoding="utf-8") as fh:
                names = [line.rstrip("\n") for line in fh]
            if len(names) != k:
                raise FeatureFileError(
                    f"sidecar {names_path} has {len(names)} names, expected {k}"
                )
        else:
            names = [f"class_{i:04d}" for i in range(k)]
        bank = ClassifierBank(protos.copy(), names)

    rec_dtype = np.dtype([("label", "<i4"), ("feature", "<f4", (dim,))])
    block = np.frombuffer(
        raw, dtype=rec_dtype, count=count, offset=_HEADER.size + classifier_bytes
    )
    labels = block["label"]
    bad = (labels != NOISY_LABEL) & ((labels < 0) | (labels >= k))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise LabelOutOfRange(f"record {i} label {int(labels[i])} invalid for K={k}")

    feats = block["feature"].copy()
    return bank, [
        StreamRecord(feats[i], int(labels[i])) for i in range(count)
    ]


def write_noise_bank(bank: NoiseBank, path) -> None:
    """Store a noise bank as a K=0 feature file (all labels noisy)."""
    records = [StreamRecord(f, NOISY_LABEL) for f in bank.features]
    write_feature_file(None, records, path)


def load_noise_bank(path, noise_type: str = "gaussian") -> NoiseBank:
    """Load a noise bank written by write_noise_bank (or any feature file)."""
    _, records = read_feature_file(path)
    if not records:
        raise FeatureFileError(f"{path} holds no noise features")
    feats = np.stack([r.feature for r in records])
    return NoiseBank(noise_type, feats)


def synthetic_noise_bank(dim: int, count: int, seed: int) -> NoiseBank:
    """Feature-space stand-in for an encoded noise-image bank.

    Encoders map pure-noise images into one tight off-manifold cluster, so
    the bank is a seeded cluster around its own random center rather than
    isotropic directions. The generator stream is decoupled from plain
    `seed` so a pipeline may share one seed for stream and bank without
    correlating them.
    """
    if count < 1 or dim < 1:
        raise BadSpec("noise bank needs count >= 1 and dim >= 1")
    rng = np.random.default_rng([seed, 104729])
    center = normalize_rows(rng.standard_normal((1, dim)))[0]
    feats = normalize_rows(2.0 * center + rng.standard_normal((count, dim)))
    return NoiseBank("synthetic_gaussian_feature", feats.astype(np.float32))


@dataclass
class ClusterSpec:
    """Geometry of a synthetic embedding stream.

    Per-class samples sit at `prototype + g / concentration` (g standard
    normal), renormalized; higher concentration means tighter clusters.
    Noisy samples are generated the same way around `ood_clusters` separate
    prototypes. ID and noisy prototypes each live inside their own random
    cone (see synth_stream), mimicking how encoders compress same-domain
    embeddings into correlated directions.
    """

    num_classes: int
    dim: int
    n_per_class: int
    ood_clusters: int
    concentration: float
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise BadSpec("need at least 2 classes")
        if self.dim < 2:
            raise BadSpec("need dimension >= 2")
        if self.n_per_class < 1:
            raise BadSpec("need n_per_class >= 1")
        if self.ood_clusters < 0:
            raise BadSpec("ood_clusters must be >= 0")
        if not self.concentration > 0:
            raise BadSpec("concentration must be positive")


def _cluster_samples(rng, prototypes, n_per_cluster, concentration):
    reps = np.repeat(prototypes, n_per_cluster, axis=0)
    if np.isinf(concentration):
        return reps
    noise = rng.standard_normal(reps.shape) / concentration
    return normalize_rows(reps + noise)


_CONE_STRENGTH = 2.0  # prototype correlation inside each domain cone


def synth_stream(spec: ClusterSpec) -> tuple[ClassifierBank, list[StreamRecord], list[StreamRecord]]:
    """Generate a deterministic clustered stream for desk-scale testing.

    Returns (bank, id_records, ood_records): ID features cluster around the
    K prototypes reused as the classifier; noisy features cluster around
    separate prototypes and carry the noisy label.

    Prototypes of each population are drawn inside a shared random cone
    (`normalize(2 * center + q)`), one cone per population. Real encoders
    behave the same way: same-domain embeddings are strongly correlated, so
    in-distribution and noisy data form distinct cones that a linear probe
    can tell apart, while similarities to the classifier stay compressed.
    Isotropic prototypes would instead make the noisy side linearly
    unidentifiable and no online detector could work.
    """
    rng = np.random.default_rng(spec.seed)
    id_center = normalize(rng.standard_normal(spec.dim))
    protos = normalize_rows(
        _CONE_STRENGTH * id_center + rng.standard_normal((spec.num_classes, spec.dim))
    )
    if spec.ood_clusters:
        ood_center = normalize(rng.standard_normal(spec.dim))
        ood_protos = normalize_rows(
            _CONE_STRENGTH * ood_center
            + rng.standard_normal((spec.ood_clusters, spec.dim))
        )
    else:
        ood_protos = np.empty((0, spec.dim))

    id_feats = _cluster_samples(rng, protos, spec.n_per_class, spec.concentration)
    id_labels = np.repeat(np.arange(spec.num_classes), spec.n_per_class)
    ood_feats = _cluster_samples(rng, ood_protos, spec.n_per_class, spec.concentration)

    bank = ClassifierBank(
        protos.astype(np.float32),
        [f"synthetic_{i:03d}" for i in range(spec.num_classes)],
    )
    id_records = [
        StreamRecord(f, int(l))
        for f, l in zip(id_feats.astype(np.float32), id_labels)
    ]
    ood_records = [
        StreamRecord(f, NOISY_LABEL) for f in ood_feats.astype(np.float32)
    ]
    return bank, id_records, ood_records


def mix_streams(id_records, ood_records, noise_ratio: float, seed: int) -> list[StreamRecord]:
    """Blend ID and noisy records at a target noise ratio, seeded shuffle.

    All ID records are kept; the number of noisy records is chosen so that
    noisy / total matches noise_ratio within 1/len rounding. The noisy
    subset is the input prefix (seed-independent), so different seeds
    permute identical multisets. ratio 1.0 returns the shuffled noisy
    records alone.
    """
    if not 0.0 <= noise_ratio <= 1.0:
        raise ValueError(f"noise_ratio {noise_ratio} outside [0, 1]")
    id_records = list(id_records)
    ood_records = list(ood_records)

    if noise_ratio == 1.0:
        if not ood_records:
            raise InsufficientRecords("ratio 1.0 requested with no noisy records")
        chosen = ood_records
        combined = list(chosen)
    else:
        n_id = len(id_records)
        n_ood = round(n_id * noise_ratio / (1.0 - noise_ratio))
        if n_ood > len(ood_records):
            raise InsufficientRecords(
                f"need {n_ood} noisy records for ratio {noise_ratio}, have {len(ood_records)}"
            )
        combined = id_records + ood_records[:n_ood]

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(combined))
    return [combined[i] for i in perm]
