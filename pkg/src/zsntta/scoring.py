"""Frozen-model scoring: cosine similarities, MCM confidence, classification.

All score math runs in float64: with temperature 0.01 the similarity/tau
ratios reach +-100, which overflows naive 32-bit exponentials.
"""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch
from .features import ClassifierBank

DEFAULT_TAU = 0.01


def cosine_similarities(feature, bank: ClassifierBank) -> np.ndarray:
    """Cosine similarity between one embedding and every prototype.

    Returns a (K,) float64 vector; entry k is the cosine of the angle
    between the feature and prototype k.
    """
    f = np.asarray(feature, dtype=np.float64)
    protos = bank.prototypes.astype(np.float64)
    if f.shape != (protos.shape[1],):
        raise DimMismatch(f"feature dim {f.shape} vs bank dim {protos.shape[1]}")
    f_norm = np.linalg.norm(f)
    p_norms = np.linalg.norm(protos, axis=1)
    return (protos @ f) / (p_norms * f_norm)


def softmax(values: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax (max-subtraction)."""
    v = np.asarray(values, dtype=np.float64)
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def mcm_score(sims, tau: float = DEFAULT_TAU) -> float:
    """Maximum softmax probability of temperature-scaled similarities.

    The confidence score in (0, 1] used to separate clean from noisy
    samples: max_k softmax(sims / tau)[k].
    """
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    sims = np.asarray(sims, dtype=np.float64)
    if sims.size < 1:
        raise ValueError("need at least one similarity")
    return float(softmax(sims / tau).max())


def classify(sims) -> int:
    """Predicted class index: argmax similarity (softmax is monotone).

    Ties break toward the lowest index.
    """
    sims = np.asarray(sims)
    if sims.size < 1:
        raise ValueError("need at least one similarity")
    return int(np.argmax(sims))
