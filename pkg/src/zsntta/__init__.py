"""Streaming zero-shot noisy test-time adaptation engine.

Scores embedding streams against a frozen prototype classifier, separates
clean from noisy samples with an adaptive threshold over a sliding score
window, and optionally trains a small linear noise detector online from the
frozen model's own verdicts, with scheduled noise injection so clean streams
stay well-calibrated.
"""

from .detector import (
    CLEAN,
    NOISE,
    Adam,
    LinearDetector,
    TrainingQueue,
    ce_loss_and_grad,
    clean_probability,
    enqueue_and_maybe_train,
    load_checkpoint,
    save_checkpoint,
)
from .features import (
    ClassifierBank,
    ClusterSpec,
    NOISY_LABEL,
    NoiseBank,
    StreamRecord,
    load_noise_bank,
    mix_streams,
    normalize,
    read_feature_file,
    synth_stream,
    synthetic_noise_bank,
    write_feature_file,
    write_noise_bank,
)
from .metrics import (
    MetricsAccumulator,
    MetricsReport,
    auroc,
    fpr_at_95_tpr,
    harmonic_mean,
)
from .pipeline import (
    METHOD_ADAND,
    METHOD_FROZEN,
    Pipeline,
    PipelineConfig,
    SampleDecision,
    run_stream,
    write_decision_log,
)
from .scoring import classify, cosine_similarities, mcm_score, softmax
from .threshold import (
    ScoreQueue,
    ThresholdPolicy,
    adaptive_threshold,
    effective_threshold,
    split_scores,
)

__version__ = "0.1.0"
