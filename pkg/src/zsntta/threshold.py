"""Sliding score window and the adaptive clean/noise threshold.

The adaptive threshold assumes detection scores form a bimodal distribution
and picks the cut minimizing the summed within-partition variances

    J(t) = sum_{s > t} (s - mean_high)^2 / n_high
         + sum_{s <= t} (s - mean_low)^2 / n_low

over candidate cuts at the midpoints between consecutive distinct sorted
scores (so both partitions are always non-empty). Ties in J break toward
the smallest candidate; with fewer than two distinct scores the neutral
fallback 0.5 is returned.
"""

from __future__ import annotations

import threading as _threading
from dataclasses import dataclass
from math import isfinite

import numpy as np

from .errors import EmptyQueue

FALLBACK_THRESHOLD = 0.5


class ScoreQueue:
    """Fixed-capacity FIFO of detection scores backed by a float64 ring.

    values() reproduces insertion order; the threshold search reads the raw
    ring instead since the objective only depends on the score multiset.
    """

    __slots__ = ("capacity", "_buf", "_next", "_count")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.capacity = capacity
        self._buf = np.empty(capacity, dtype=np.float64)
        self._next = 0
        self._count = 0

    def push(self, score: float) -> None:
        if not isfinite(score):
            raise ValueError(f"score must be finite, got {score}")
        self._buf[self._next] = score
        self._next += 1
        if self._next == self.capacity:
            self._next = 0
        if self._count < self.capacity:
            self._count += 1

    def __len__(self) -> int:
        return self._count

    def values(self) -> np.ndarray:
        """Scores in insertion order (oldest first), as a copy."""
        if self._count < self.capacity:
            return self._buf[: self._count].copy()
        return np.concatenate([self._buf[self._next :], self._buf[: self._next]])

    def window(self) -> np.ndarray:
        """Current scores in ring order (multiset view, no copy)."""
        return self._buf[: self._count]


try:  # optional: collapses the per-sample search to one compiled call
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba present in the dev env
    _HAVE_NUMBA = False


def _split_sorted_py(s):
    """Best split index over a sorted window; -1 reserved for no candidate.

    Returns k such that the cut lies between s[k] and s[k+1]; ties in the
    objective keep the first (smallest) k. Python/numba shared body.
    """
    n = s.shape[0]
    mu = 0.0
    for i in range(n):
        mu += s[i]
    mu /= n
    tot_s = 0.0
    tot_q = 0.0
    for i in range(n):
        c = s[i] - mu
        tot_s += c
        tot_q += c * c
    best_j = np.inf
    best_k = -1
    run_s = 0.0
    run_q = 0.0
    for k in range(n - 1):
        c = s[k] - mu
        run_s += c
        run_q += c * c
        if s[k] == s[k + 1]:
            continue
        t = k + 1.0
        nt = n - t
        sse_low = run_q - run_s * run_s / t
        hs = tot_s - run_s
        sse_high = (tot_q - run_q) - hs * hs / nt
        j = sse_low / t + sse_high / nt
        if j < best_j:
            best_j = j
            best_k = k
    return best_k


_split_sorted = _njit(cache=True)(_split_sorted_py) if _HAVE_NUMBA else None


# Numpy fallback works inside a reusable per-thread workspace: zero
# allocations once the window size is stable. Each pipeline owns its queues,
# but pipelines may run in parallel threads, hence threading.local rather
# than a module-global buffer set.
_TLS = _threading.local()


def _workspace(n: int) -> dict:
    ws = getattr(_TLS, "ws", None)
    if ws is None or ws["n"] != n:
        t = np.arange(1, n, dtype=np.float64)
        ws = {
            "n": n,
            "inv_low": 1.0 / t,
            "inv_high": 1.0 / (n - t),
            "s": np.empty(n),
            "c": np.empty(n),
            "c2": np.empty(n),
            "csum": np.empty(n),
            "csq": np.empty(n),
            "a": np.empty(n - 1),
            "b": np.empty(n - 1),
            "hsq": np.empty(n - 1),
            "dup": np.empty(n - 1, dtype=bool),
        }
        _TLS.ws = ws
    return ws


def split_scores(scores: np.ndarray) -> float:
    """Threshold minimizing within-partition variance over score midpoints.

    O(n log n): one sort plus prefix sums. Scores are centered first, which
    the objective is invariant to, to avoid cancellation when the window is
    tightly clustered.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n == 0:
        raise EmptyQueue("cannot compute a threshold over zero scores")
    ws = _workspace(n)
    s = ws["s"]
    np.copyto(s, scores)
    s.sort()
    if s[0] == s[n - 1]:
        return FALLBACK_THRESHOLD

    if _split_sorted is not None:
        k = int(_split_sorted(s))
        if k < 0:  # unreachable for finite inputs; guards NaN misuse
            raise ValueError("scores must be finite")
        return 0.5 * (s[k] + s[k + 1])
    return _split_scores_numpy(ws, s, n)


def _split_scores_numpy(ws: dict, s: np.ndarray, n: int) -> float:
    """Vectorized fallback used when numba is unavailable."""
    inv_low, inv_high = ws["inv_low"], ws["inv_high"]
    c, c2, csum, csq = ws["c"], ws["c2"], ws["csum"], ws["csq"]
    np.subtract(s, s.sum() / n, out=c)
    np.multiply(c, c, out=c2)
    np.cumsum(c, out=csum)
    np.cumsum(c2, out=csq)
    low_sum, low_sq = csum[: n - 1], csq[: n - 1]
    total_sum, total_sq = csum[n - 1], csq[n - 1]

    a, b, hsq = ws["a"], ws["b"], ws["hsq"]
    np.multiply(low_sum, low_sum, out=a)
    a *= inv_low
    np.subtract(low_sq, a, out=a)  # within-variance sum of the low side
    a *= inv_low
    np.subtract(total_sum, low_sum, out=b)
    np.multiply(b, b, out=b)
    b *= inv_high
    np.subtract(total_sq, low_sq, out=hsq)
    np.subtract(hsq, b, out=b)  # within-variance sum of the high side
    b *= inv_high
    np.add(a, b, out=a)  # objective J at every split

    dup = ws["dup"]
    np.equal(s[: n - 1], s[1:], out=dup)
    if dup.any():
        a[dup] = np.inf  # cuts are only allowed between distinct values

    k = int(np.argmin(a))  # first minimum = smallest candidate
    return 0.5 * (s[k] + s[k + 1])


def adaptive_threshold(queue: ScoreQueue) -> float:
    """Adaptive clean/noise threshold over the queue's current window."""
    if len(queue) == 0:
        raise EmptyQueue("adaptive threshold requested on an empty queue")
    return split_scores(queue.window())


@dataclass(frozen=True)
class ThresholdPolicy:
    """Either a fixed constant threshold or the adaptive rule."""

    kind: str  # "adaptive" | "fixed"
    value: float = FALLBACK_THRESHOLD

    def __post_init__(self):
        if self.kind not in ("adaptive", "fixed"):
            raise ValueError(f"unknown threshold policy {self.kind!r}")
        if self.kind == "fixed" and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"fixed threshold {self.value} outside [0, 1]")

    @classmethod
    def adaptive(cls) -> "ThresholdPolicy":
        return cls("adaptive")

    @classmethod
    def fixed(cls, value: float) -> "ThresholdPolicy":
        return cls("fixed", value)


def effective_threshold(policy: ThresholdPolicy, queue: ScoreQueue) -> float:
    """Resolve the policy against the queue: constant or adaptive."""
    if policy.kind == "fixed":
        return policy.value
    return adaptive_threshold(queue)
