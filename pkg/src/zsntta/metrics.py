"""Evaluation protocol: clean/noisy accuracies and ranking metrics.

Acc_S is classification accuracy over clean samples (a clean sample called
noisy counts as wrong), Acc_N is detection accuracy over noisy samples, and
Acc_H is their harmonic mean. AUROC and FPR95 treat clean as the positive
class and are computed by exact pair counting / threshold sweep so they
agree bit-for-bit with brute-force references.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InjectedRecord, OneClassOnly
from .features import NOISY_LABEL


def harmonic_mean(a: float, b: float) -> float:
    """2ab/(a+b); zero when either input is zero."""
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def auroc(scores, is_clean) -> float:
    """Probability a random clean score exceeds a random noisy score.

    Ties count 1/2 (Mann-Whitney). Implemented with integer pair counts via
    binary search, so the result is exactly the brute-force pair count.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_clean = np.asarray(is_clean, dtype=bool)
    clean = scores[is_clean]
    noisy = scores[~is_clean]
    if clean.size == 0 or noisy.size == 0:
        raise OneClassOnly("AUROC needs at least one clean and one noisy score")
    noisy_sorted = np.sort(noisy)
    below = np.searchsorted(noisy_sorted, clean, side="left")
    below_or_eq = np.searchsorted(noisy_sorted, clean, side="right")
    greater = int(below.sum())
    equal = int((below_or_eq - below).sum())
    return (greater + 0.5 * equal) / (clean.size * noisy.size)


def fpr_at_95_tpr(scores, is_clean, tpr_target: float = 0.95) -> float:
    """Minimum false-positive rate over thresholds reaching the target TPR.

    A sample is predicted clean when score >= threshold; TPR is the clean
    recall and FPR the fraction of noisy samples passed. Evaluated over
    every distinct score value (the only points where the rates change).
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_clean = np.asarray(is_clean, dtype=bool)
    clean = np.sort(scores[is_clean])
    noisy = np.sort(scores[~is_clean])
    if clean.size == 0 or noisy.size == 0:
        raise OneClassOnly("FPR95 needs at least one clean and one noisy score")

    thresholds = np.unique(scores)
    clean_ge = clean.size - np.searchsorted(clean, thresholds, side="left")
    ok = clean_ge / clean.size >= tpr_target
    # tpr is non-increasing in the threshold, so ok is a True-prefix; the
    # lowest FPR sits at the largest admissible threshold
    best = int(np.count_nonzero(ok)) - 1
    t = thresholds[best]
    noisy_ge = noisy.size - np.searchsorted(noisy, t, side="left")
    return noisy_ge / noisy.size


@dataclass
class MetricsReport:
    """Final metrics for one run; accuracy fields are percents or None.

    Clean-stream runs have no noisy samples, so acc_n/acc_h/auroc/fpr95
    come back absent rather than zero or an error.
    """

    acc_s: float | None
    acc_n: float | None
    acc_h: float | None
    auroc: float | None
    fpr95: float | None
    n_id: int
    n_noisy: int

    @property
    def no_samples(self) -> bool:
        return self.n_id == 0 and self.n_noisy == 0

    def as_text(self) -> str:
        """Structured key: value serialization (deterministic)."""
        def fmt(v):
            return "-" if v is None else f"{v:.17g}"

        lines = [
            f"n_id: {self.n_id}",
            f"n_noisy: {self.n_noisy}",
            f"acc_s: {fmt(self.acc_s)}",
            f"acc_n: {fmt(self.acc_n)}",
            f"acc_h: {fmt(self.acc_h)}",
            f"auroc: {fmt(self.auroc)}",
            f"fpr95: {fmt(self.fpr95)}",
        ]
        if self.no_samples:
            lines.insert(0, "status: no samples")
        return "\n".join(lines) + "\n"

    def table_row(self, sep: str = "\t") -> str:
        """Acc_S, Acc_N, Acc_H in benchmark column order, '-' when absent."""
        cells = [
            "-" if v is None else f"{v:.2f}"
            for v in (self.acc_s, self.acc_n, self.acc_h)
        ]
        return sep.join(cells)


@dataclass
class MetricsAccumulator:
    """Streaming counts plus (score, is_clean) pairs for ranking metrics.

    Accumulators merge associatively, so shards of a split experiment can
    be reduced.
    """

    id_total: int = 0
    id_correct: int = 0
    noisy_total: int = 0
    noisy_detected: int = 0
    scores: list = field(default_factory=list)
    clean_flags: list = field(default_factory=list)

    def accumulate(self, decision) -> None:
        """Fold one original-stream decision into the counts.

        decision needs truth_label, prediction, verdict_score, is_injected.
        """
        if decision.is_injected:
            raise InjectedRecord("injected decisions are excluded from metrics")
        truth = decision.truth_label
        pred = decision.prediction
        if truth == NOISY_LABEL:
            self.noisy_total += 1
            if pred == NOISY_LABEL:
                self.noisy_detected += 1
        else:
            self.id_total += 1
            if pred == truth:
                self.id_correct += 1
        self.scores.append(decision.verdict_score)
        self.clean_flags.append(truth != NOISY_LABEL)

    def merge(self, other: "MetricsAccumulator") -> None:
        self.id_total += other.id_total
        self.id_correct += other.id_correct
        self.noisy_total += other.noisy_total
        self.noisy_detected += other.noisy_detected
        self.scores.extend(other.scores)
        self.clean_flags.extend(other.clean_flags)

    def finalize(self) -> MetricsReport:
        acc_s = 100.0 * self.id_correct / self.id_total if self.id_total else None
        acc_n = 100.0 * self.noisy_detected / self.noisy_total if self.noisy_total else None
        acc_h = harmonic_mean(acc_s, acc_n) if acc_s is not None and acc_n is not None else None
        if self.id_total and self.noisy_total:
            roc = auroc(self.scores, self.clean_flags)
            fpr = fpr_at_95_tpr(self.scores, self.clean_flags)
        else:
            roc = fpr = None
        return MetricsReport(
            acc_s=acc_s,
            acc_n=acc_n,
            acc_h=acc_h,
            auroc=roc,
            fpr95=fpr,
            n_id=self.id_total,
            n_noisy=self.noisy_total,
        )
