"""Closed-form implicit demonstration augmentation for ICL classification.

Scores answer candidates under infinite Gaussian augmentation of the
query features (mean and covariance taken from the demonstrations),
optionally rebalances with demonstration class priors, and validates
the closed form against an explicit Monte-Carlo augmentation oracle.
"""

from .bundle import Bundle, read_bundle, write_bundle
from .core import (
    AugmentConfig,
    ClassPriors,
    ClassifierHead,
    DemoStats,
    ScoreVector,
    as_feature_matrix,
    as_feature_vector,
    validate_head,
)
from .errors import (
    CandidateOutOfRange,
    DimensionMismatch,
    DuplicateCandidate,
    EmptyInput,
    EmptyScores,
    FactorizationFailure,
    IdaiclError,
    IndexOutOfRange,
    InvalidBundle,
    InvalidSpec,
    IoError,
    LengthMismatch,
    NonFiniteValue,
    NonPositiveAdjusted,
    NumericError,
    TokenOutOfRange,
    ValidationError,
)
from .metrics import EvalReport, evaluate, seed_summary
from .oracle import (
    OracleReport,
    cholesky_factor,
    mc_scores,
    mgf_check,
    sample_augmented,
    substream,
    worker_count,
)
from .scoring import (
    BatchScorer,
    Decision,
    adjust_with_priors,
    decide,
    ida_log_score,
    ida_scores,
    log_softmax_prob,
)
from .stats import estimate_stats, merge_stats, regularize
from .synthetic import (
    SyntheticSpec,
    empirical_priors,
    generate_task,
    largest_remainder_counts,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BatchScorer",
    "Bundle",
    "CandidateOutOfRange",
    "ClassPriors",
    "ClassifierHead",
    "Decision",
    "DemoStats",
    "DimensionMismatch",
    "DuplicateCandidate",
    "EmptyInput",
    "EmptyScores",
    "EvalReport",
    "FactorizationFailure",
    "IdaiclError",
    "IndexOutOfRange",
    "InvalidBundle",
    "InvalidSpec",
    "IoError",
    "LengthMismatch",
    "NonFiniteValue",
    "NonPositiveAdjusted",
    "NumericError",
    "OracleReport",
    "ScoreVector",
    "TokenOutOfRange",
    "ValidationError",
    "adjust_with_priors",
    "as_feature_matrix",
    "as_feature_vector",
    "cholesky_factor",
    "decide",
    "empirical_priors",
    "estimate_stats",
    "evaluate",
    "generate_task",
    "ida_log_score",
    "ida_scores",
    "largest_remainder_counts",
    "log_softmax_prob",
    "mc_scores",
    "merge_stats",
    "mgf_check",
    "read_bundle",
    "regularize",
    "sample_augmented",
    "seed_summary",
    "substream",
    "validate_head",
    "worker_count",
    "write_bundle",
]
