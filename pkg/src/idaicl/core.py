"""Core domain types shared by every stage of the engine.

All numeric state is stored as read-only float64 arrays.  Constructors
validate eagerly so that a value which exists at all satisfies its
invariants; downstream code never re-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CandidateOutOfRange,
    DimensionMismatch,
    DuplicateCandidate,
    EmptyInput,
    NonFiniteValue,
    ValidationError,
)

# Tolerances fixed by the type contracts.
SYMMETRY_RTOL = 1e-12
PSD_EIG_RTOL = 1e-9
PRIOR_SUM_ATOL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def as_feature_vector(values, dim: int | None = None) -> np.ndarray:
    """Validate and return a read-only float64 feature vector.

    Requires a finite 1-d array; when ``dim`` is given the length must
    match it exactly.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"feature vector must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyInput("feature vector must have at least one component")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"feature vector has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("feature vector contains NaN or infinity")
    return _frozen(arr)


def as_feature_matrix(values, dim: int | None = None) -> np.ndarray:
    """Validate a stack of feature vectors, shape (n, dim)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"feature matrix must be 2-d, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"feature rows have length {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("feature matrix contains NaN or infinity")
    return _frozen(arr)


@dataclass(frozen=True)
class DemoStats:
    """First and second moments of a demonstration feature set.

    ``cov`` is the population covariance (1/N normalization).  It must be
    symmetric to within ``SYMMETRY_RTOL`` elementwise and positive
    semi-definite up to an eigenvalue slack of ``-PSD_EIG_RTOL *
    trace / dim``.
    """

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1:
            raise DimensionMismatch(f"mean must be 1-d, got shape {mean.shape}")
        d = mean.shape[0]
        if d == 0:
            raise EmptyInput("mean must have at least one component")
        if cov.shape != (d, d):
            raise DimensionMismatch(f"cov must have shape ({d}, {d}), got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NonFiniteValue("stats contain NaN or infinity")
        gap = np.abs(cov - cov.T)
        tol = SYMMETRY_RTOL * np.maximum(1.0, np.abs(cov))
        if np.any(gap > tol):
            raise ValidationError("cov is not symmetric within tolerance")
        sym = (cov + cov.T) / 2.0
        min_eig = float(np.linalg.eigvalsh(sym).min())
        trace = float(np.trace(sym))
        if min_eig < -PSD_EIG_RTOL * max(trace, 0.0) / d:
            raise ValidationError(
                f"cov is not positive semi-definite: min eigenvalue {min_eig}"
            )
        if int(self.count) < 1:
            raise ValidationError(f"count must be >= 1, got {self.count}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "count", int(self.count))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ClassifierHead:
    """Linear output head: one weight row and bias per vocabulary token.

    ``candidates`` lists the answer tokens in canonical class order; they
    must be distinct, in range, and at least two.
    """

    weights: np.ndarray
    biases: np.ndarray
    candidates: tuple[int, ...]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        biases = np.asarray(self.biases, dtype=np.float64)
        if weights.ndim != 2:
            raise DimensionMismatch(f"weights must be 2-d, got shape {weights.shape}")
        vocab, d = weights.shape
        if vocab == 0 or d == 0:
            raise EmptyInput("weights must be non-empty")
        if biases.shape != (vocab,):
            raise DimensionMismatch(
                f"biases must have shape ({vocab},), got {biases.shape}"
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise NonFiniteValue("head weights or biases contain NaN or infinity")
        cand = tuple(int(c) for c in self.candidates)
        if len(cand) < 2:
            raise ValidationError(f"need at least 2 candidates, got {len(cand)}")
        if len(set(cand)) != len(cand):
            raise DuplicateCandidate(f"candidate tokens repeat: {cand}")
        for c in cand:
            if not 0 <= c < vocab:
                raise CandidateOutOfRange(
                    f"candidate token {c} outside vocabulary of size {vocab}"
                )
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "biases", _frozen(biases))
        object.__setattr__(self, "candidates", cand)

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def validate_head(head: ClassifierHead, dim: int) -> None:
    """Check a head against an expected feature dimensionality.

    Structural invariants already hold by construction; this verifies the
    dimension agreement that only the caller knows.
    """
    if head.dim != dim:
        raise DimensionMismatch(f"head expects dim {head.dim}, caller requires {dim}")


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation strength and prior weight.

    ``lam`` scales both the mean shift and covariance of the implicit
    augmentation distribution; ``tau`` weights the class-prior term.
    """

    lam: float = 0.5
    tau: float = 1.0

    def __post_init__(self):
        lam = float(self.lam)
        tau = float(self.tau)
        if not np.isfinite(lam) or lam < 0:
            raise ValidationError(f"lam must be finite and >= 0, got {self.lam}")
        if not np.isfinite(tau) or tau < 0:
            raise ValidationError(f"tau must be finite and >= 0, got {self.tau}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class ClassPriors:
    """Strictly positive class probabilities summing to 1."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise DimensionMismatch("priors must be a non-empty 1-d array")
        if not np.all(np.isfinite(probs)):
            raise NonFiniteValue("priors contain NaN or infinity")
        if np.any(probs <= 0):
            raise ValidationError("priors must be strictly positive")
        total = float(probs.sum())
        if abs(total - 1.0) > PRIOR_SUM_ATOL:
            raise ValidationError(f"priors must sum to 1 +- {PRIOR_SUM_ATOL}, got {total}")
        object.__setattr__(self, "probs", _frozen(probs))

    def __len__(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class ScoreVector:
    """Log-domain scores, one entry per candidate in canonical order.

    ``saturated`` records that prior adjustment hit the overflow guard on
    at least one entry and returned it unchanged.
    """

    log_scores: np.ndarray
    saturated: bool = False

    def __post_init__(self):
        scores = np.asarray(self.log_scores, dtype=np.float64)
        if scores.ndim != 1:
            raise DimensionMismatch(f"scores must be 1-d, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise NonFiniteValue("scores contain NaN or infinity")
        object.__setattr__(self, "log_scores", _frozen(scores))
        object.__setattr__(self, "saturated", bool(self.saturated))

    def __len__(self) -> int:
        return self.log_scores.shape[0]
