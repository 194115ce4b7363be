"""End-to-end streaming pipeline.

Per sample, strictly in order: score against the frozen classifier, update
the MCM score window and its adaptive threshold, derive a clean/noise
pseudo-label, stage the sample for detector training (one optimizer step per
queue fill), then emit the verdict -- frozen-rule while the detector warms
up (stage 1), detector-rule afterwards (stage 2). After every M-th original
sample one noise-bank feature is pushed through the same path with a forced
noise pseudo-label; injected samples feed the score windows and the training
queue but never the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector import (
    CLEAN,
    NOISE,
    Adam,
    LinearDetector,
    TrainingQueue,
    clean_probability,
    enqueue_and_maybe_train,
)
from .errors import DimMismatch, EmptyBank
from .features import (
    NOISY_LABEL,
    ORIGIN_INJECTED,
    ORIGIN_ORIGINAL,
    ClassifierBank,
    NoiseBank,
    StreamRecord,
)
from .metrics import MetricsAccumulator, MetricsReport
from .threshold import ScoreQueue, ThresholdPolicy, effective_threshold

METHOD_FROZEN = "frozen"
METHOD_ADAND = "adand"
METHODS = (METHOD_FROZEN, METHOD_ADAND)

PSEUDO_ZS_CLIP = "zs_clip"
PSEUDO_DETECTOR = "detector"
PSEUDO_ORACLE = "oracle"
PSEUDO_SOURCES = (PSEUDO_ZS_CLIP, PSEUDO_DETECTOR, PSEUDO_ORACLE)


@dataclass(frozen=True)
class PipelineConfig:
    """Hyper-parameters and mode switches for one streaming run.

    inject_every is M (one injected noise sample per M stream samples),
    train_queue_len is L, score_queue_len is N_q, and warmup_steps is N --
    the number of completed optimization steps before the detector takes
    over the verdicts.
    """

    tau: float = 0.01
    inject_every: int = 8
    train_queue_len: int = 128
    score_queue_len: int = 512
    warmup_steps: int = 10
    lr: float = 0.0005
    method: str = METHOD_ADAND
    pseudo_source: str = PSEUDO_ZS_CLIP
    threshold_policy: ThresholdPolicy = field(default_factory=ThresholdPolicy.adaptive)
    noise_bank: NoiseBank | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.pseudo_source not in PSEUDO_SOURCES:
            raise ValueError(f"unknown pseudo source {self.pseudo_source!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if min(self.inject_every, self.train_queue_len, self.score_queue_len) < 1:
            raise ValueError("inject_every, train_queue_len, score_queue_len must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


def pseudo_label(score: float, lam: float) -> int:
    """Clean/noise pseudo-label rule: clean only for score strictly above
    the threshold (boundary hits count as noise)."""
    return CLEAN if score > lam else NOISE


@dataclass(slots=True)
class SampleDecision:
    """Immediate online verdict for one processed sample."""

    index: int
    truth_label: int
    prediction: int  # class index, or NOISY_LABEL
    stage: int
    mcm_score: float
    detector_score: float | None
    pseudo_label: int | None  # CLEAN / NOISE; None when no detector runs
    lambda_used: float
    origin: str

    @property
    def is_injected(self) -> bool:
        return self.origin.startswith(ORIGIN_INJECTED)

    @property
    def verdict_score(self) -> float:
        """The score that determined the verdict (MCM in stage 1)."""
        return self.detector_score if self.stage == 2 else self.mcm_score


class Pipeline:
    """Single-owner mutable state for one strictly sequential stream."""

    def __init__(self, bank: ClassifierBank, config: PipelineConfig):
        self.bank = bank
        self.config = config
        self._protos = bank.prototypes.astype(np.float64)
        self._proto_norms = np.linalg.norm(self._protos, axis=1)
        self._dim = bank.dim
        self._tau = config.tau
        self._policy = config.threshold_policy
        self._adand = config.method == METHOD_ADAND

        self.mcm_queue = ScoreQueue(config.score_queue_len)
        self.detector_queue = ScoreQueue(config.score_queue_len)
        self.detector = LinearDetector(self._dim)
        self.adam = Adam(self.detector.parameters(), lr=config.lr)
        self.train_queue = TrainingQueue(config.train_queue_len, self._dim)
        self.completed_steps = 0
        self.originals_seen = 0
        self._rng = np.random.default_rng(config.seed)

        if config.noise_bank is not None:
            if len(config.noise_bank) == 0:
                raise EmptyBank("injection configured with an empty noise bank")
            if config.noise_bank.features.shape[1] != self._dim:
                raise DimMismatch("noise bank dimension does not match classifier")
            self._noise_feats = config.noise_bank.features.astype(np.float64)
            self._injected_origin = f"{ORIGIN_INJECTED}:{config.noise_bank.noise_type}"
        else:
            self._noise_feats = None
            self._injected_origin = ORIGIN_INJECTED

    @property
    def stage(self) -> int:
        if not self._adand:
            return 1
        return 1 if self.completed_steps < self.config.warmup_steps else 2

    def process_stream_record(self, record: StreamRecord) -> list[SampleDecision]:
        """Handle one original sample; returns its decision plus, when an
        injection is due, the injected sample's decision."""
        feat = np.asarray(record.feature, dtype=np.float64)
        decisions = [self._process(feat, record.label, ORIGIN_ORIGINAL, self.originals_seen)]
        self.originals_seen += 1
        if self._noise_feats is not None and self.originals_seen % self.config.inject_every == 0:
            pick = int(self._rng.integers(len(self._noise_feats)))
            decisions.append(
                self._process(
                    self._noise_feats[pick],
                    NOISY_LABEL,
                    self._injected_origin,
                    self.originals_seen - 1,
                )
            )
        return decisions

    def _pseudo_label(self, p_mcm, lam_zs, truth_label, logits_pre) -> int:
        src = self.config.pseudo_source
        if src == PSEUDO_ORACLE:
            return CLEAN if truth_label != NOISY_LABEL else NOISE
        if src == PSEUDO_DETECTOR and self.stage == 2 and len(self.detector_queue) > 0:
            lam = effective_threshold(self._policy, self.detector_queue)
            return pseudo_label(clean_probability(logits_pre), lam)
        # zs_clip rule; also the warm-up fallback for the detector source
        return pseudo_label(p_mcm, lam_zs)

    def _process(self, feat, truth_label, origin, index) -> SampleDecision:
        if feat.shape != (self._dim,):
            raise DimMismatch(f"feature shape {feat.shape} vs classifier dim {self._dim}")

        sims = (self._protos @ feat) / (self._proto_norms * np.linalg.norm(feat))
        z = sims / self._tau
        p_mcm = float(1.0 / np.exp(z - z.max()).sum())  # max softmax probability
        best_class = int(np.argmax(sims))

        self.mcm_queue.push(p_mcm)
        lam_zs = effective_threshold(self._policy, self.mcm_queue)

        if not self._adand:
            pred = best_class if p_mcm > lam_zs else NOISY_LABEL
            return SampleDecision(
                index, truth_label, pred, 1, p_mcm, None, None, lam_zs, origin
            )

        injected = origin != ORIGIN_ORIGINAL
        logits_pre = self.detector.forward(feat)
        if injected:
            pseudo = NOISE
        else:
            pseudo = self._pseudo_label(p_mcm, lam_zs, truth_label, logits_pre)

        trained = enqueue_and_maybe_train(
            self.train_queue, self.detector, self.adam, feat, pseudo, logits_pre
        )
        if trained:
            self.completed_steps += 1

        stage = self.stage
        logits_now = self.detector.forward(feat) if trained else logits_pre
        p_clean = clean_probability(logits_now)
        if injected or stage == 2:
            self.detector_queue.push(p_clean)

        if stage == 1:
            pred = best_class if p_mcm > lam_zs else NOISY_LABEL
            lam_used = lam_zs
        else:
            lam_used = effective_threshold(self._policy, self.detector_queue)
            pred = best_class if p_clean > lam_used else NOISY_LABEL
        return SampleDecision(
            index, truth_label, pred, stage, p_mcm, p_clean, pseudo, lam_used, origin
        )


def run_stream(
    bank: ClassifierBank, records, config: PipelineConfig
) -> tuple[list[SampleDecision], MetricsReport]:
    """Process a full stream strictly in order.

    Returns every decision (injected ones marked by origin) and the metrics
    over original samples only. Deterministic given config.seed.
    """
    pipe = Pipeline(bank, config)
    decisions: list[SampleDecision] = []
    acc = MetricsAccumulator()
    for record in records:
        for d in pipe.process_stream_record(record):
            decisions.append(d)
            if not d.is_injected:
                acc.accumulate(d)
    return decisions, acc.finalize()


DECISION_LOG_COLUMNS = (
    "index",
    "truth",
    "prediction",
    "stage",
    "mcm_score",
    "detector_score",
    "lambda",
)


def write_decision_log(decisions, path) -> None:
    """Export one delimited row per original sample (full float precision)."""
    def fmt(v):
        return "-" if v is None else f"{v:.17g}"

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(DECISION_LOG_COLUMNS) + "\n")
        for d in decisions:
            if d.is_injected:
                continue
            fh.write(
                f"{d.index}\t{d.truth_label}\t{d.prediction}\t{d.stage}\t"
                f"{fmt(d.mcm_score)}\t{fmt(d.detector_score)}\t{fmt(d.lambda_used)}\n"
            )
