"""Online-trained linear noise detector.

A 2-output linear layer over frozen embeddings, trained with cross-entropy
against clean/noise pseudo-labels. Samples accumulate in a fixed-capacity
queue; when the queue fills, one Adam step is taken on the mean batch
gradient (forward passes recomputed under current parameters) and the queue
is emptied. Class 0 is "clean", class 1 is "noise".
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .errors import DimMismatch, EmptyBatch, ShapeMismatch

CLEAN = 0
NOISE = 1

DEFAULT_LR = 0.0005

_CKPT_HEADER = struct.Struct("<IQ")


class LinearDetector:
    """weights (2, D) and bias (2,), zero-initialized.

    Zero init makes the untrained detector output P(clean) = 0.5 exactly;
    label asymmetry breaks the symmetry as soon as training starts.
    """

    __slots__ = ("weights", "bias")

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("detector dimension must be >= 1")
        self.weights = np.zeros((2, dim), dtype=np.float64)
        self.bias = np.zeros(2, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def forward(self, feature: np.ndarray) -> np.ndarray:
        """Logits for one embedding: weights @ feature + bias."""
        if feature.shape != (self.weights.shape[1],):
            raise DimMismatch(
                f"feature shape {feature.shape} vs detector dim {self.weights.shape[1]}"
            )
        return self.weights @ feature + self.bias

    def forward_batch(self, features: np.ndarray) -> np.ndarray:
        """Logits for a (n, D) batch, shape (n, 2)."""
        return features @ self.weights.T + self.bias

    def parameters(self) -> list[np.ndarray]:
        return [self.weights, self.bias]


def clean_probability(logits) -> float:
    """P(clean) = softmax(logits)[CLEAN], via a stable 2-class sigmoid.

    Strictly increasing in (logit_clean - logit_noise); this is the
    detector score fed to the stage-2 adaptive threshold.
    """
    d = float(logits[CLEAN]) - float(logits[NOISE])
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def ce_loss_and_grad(
    detector: LinearDetector, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch and its exact analytic gradients.

    features: (n, D) float64; labels: (n,) ints in {CLEAN, NOISE}.
    Returns (loss, grad_weights (2, D), grad_bias (2,)).
    """
    n = features.shape[0]
    if n == 0:
        raise EmptyBatch("cross-entropy needs a non-empty batch")
    z = detector.forward_batch(features)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(denom)
    idx = np.arange(n)
    loss = float(-logp[idx, labels].mean())

    gz = ez / denom
    gz[idx, labels] -= 1.0
    gz /= n
    grad_w = gz.T @ features
    grad_b = gz.sum(axis=0)
    return loss, grad_w, grad_b


class Adam:
    """Bias-corrected Adam over a list of parameter arrays, updated in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = DEFAULT_LR,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeMismatch(f"{len(grads)} grads for {len(self.params)} params")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise ShapeMismatch(f"grad shape {g.shape} vs param shape {p.shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class TrainingQueue:
    """Fixed-capacity staging buffer of (feature, pseudo-label) pairs.

    Logits observed at enqueue time are cached for diagnostics only; the
    optimization step recomputes forward passes under current parameters.
    """

    __slots__ = ("capacity", "features", "labels", "cached_logits", "count")

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("training queue capacity must be >= 1")
        self.capacity = capacity
        self.features = np.empty((capacity, dim), dtype=np.float64)
        self.labels = np.empty(capacity, dtype=np.int64)
        self.cached_logits = np.empty((capacity, 2), dtype=np.float64)
        self.count = 0

    def __len__(self) -> int:
        return self.count

    @property
    def full(self) -> bool:
        return self.count == self.capacity

    def append(self, feature: np.ndarray, pseudo: int, logits: np.ndarray) -> None:
        i = self.count
        self.features[i] = feature
        self.labels[i] = pseudo
        self.cached_logits[i] = logits
        self.count = i + 1

    def clear(self) -> None:
        self.count = 0


def enqueue_and_maybe_train(
    queue: TrainingQueue,
    detector: LinearDetector,
    adam: Adam,
    feature: np.ndarray,
    pseudo: int,
    logits: np.ndarray,
) -> bool:
    """Stage one sample; take exactly one Adam step when the queue fills.

    Returns True when a training step happened (queue is then empty).
    """
    queue.append(feature, pseudo, logits)
    if not queue.full:
        return False
    _, grad_w, grad_b = ce_loss_and_grad(
        detector, queue.features[: queue.count], queue.labels[: queue.count]
    )
    adam.step([grad_w, grad_b])
    queue.clear()
    return True


def save_checkpoint(detector: LinearDetector, step: int, path) -> None:
    """Dump (D, step) header plus parameters as float64 little-endian."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(detector.dim, step))
        fh.write(np.ascontiguousarray(detector.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(detector.bias, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[LinearDetector, int]:
    """Inverse of save_checkpoint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    dim, step = _CKPT_HEADER.unpack_from(raw)
    expected = _CKPT_HEADER.size + 8 * (2 * dim + 2)
    if len(raw) != expected:
        raise ValueError(f"checkpoint {path}: expected {expected} bytes, found {len(raw)}")
    det = LinearDetector(dim)
    flat = np.frombuffer(raw, dtype="<f8", offset=_CKPT_HEADER.size)
    det.weights[:] = flat[: 2 * dim].reshape(2, dim)
    det.bias[:] = flat[2 * dim :]
    return det, step
