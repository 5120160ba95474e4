"""Explicit Monte-Carlo augmentation oracle.

Draws augmented features h + lam*mu + sqrt(lam)*L*z with L a
lower-triangular factor of the demonstration covariance, scores each
sample through the plain softmax head, and averages the inverse
probabilities.  This estimates the same quantity the closed form in
:mod:`.scoring` computes exactly, so the two must agree to Monte-Carlo
error; the implementations share no augmentation math.

Randomness comes from the Philox counter-based generator.  Samples are
sharded into fixed blocks, block b drawing from the substream keyed by
(seed, b), so results are bit-identical for a given (inputs, seed)
regardless of worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ClassifierHead, DemoStats, as_feature_vector
from .errors import FactorizationFailure, ValidationError
from .scoring import BatchScorer, _logsumexp_rows

BLOCK_SIZE = 65536
_MASK64 = (1 << 64) - 1
# Relative ridge ladder tried before giving up on factorization.
_RIDGE_LADDER = tuple(1e-9 * 10.0**k for k in range(7))  # 1e-9 .. 1e-3


def substream(seed: int, stream_index: int) -> np.random.Generator:
    """Independent generator for (seed, stream_index).

    Philox is keyed directly by the pair, so substreams never overlap
    and are reproducible across processes and thread counts.
    """
    key = np.array([int(seed) & _MASK64, int(stream_index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def worker_count(threads: int | None = None) -> int:
    """Resolve the worker count; the IDA_THREADS env var caps it."""
    if threads is None:
        raw = os.environ.get("IDA_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError as e:
            raise ValidationError(f"IDA_THREADS must be an integer, got {raw!r}") from e
    return max(1, int(threads))


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of a (near-)PSD covariance.

    Applies a relative ridge eps * (trace/d) * I starting at eps=1e-9 and
    escalating tenfold up to 1e-3 before raising
    :class:`FactorizationFailure`.  The all-zero covariance factors to the
    zero matrix exactly.
    """
    sym = (cov + cov.T) / 2.0
    if not sym.any():
        return np.zeros_like(sym)
    d = sym.shape[0]
    scale = float(np.trace(sym)) / d
    eye = np.eye(d)
    for eps in _RIDGE_LADDER:
        try:
            return np.linalg.cholesky(sym + (eps * scale) * eye)
        except np.linalg.LinAlgError:
            continue
    raise FactorizationFailure(
        f"covariance not factorizable after ridge escalation to {_RIDGE_LADDER[-1]}"
    )


def sample_augmented(h, stats: DemoStats, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one augmented feature h + lam*mu + sqrt(lam) * L @ z.

    lam=0 short-circuits to h without touching the generator.
    """
    h = as_feature_vector(h, stats.dim)
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValidationError(f"lam must be finite and >= 0, got {lam}")
    if lam == 0.0:
        return h
    factor = cholesky_factor(stats.cov)
    z = rng.standard_normal(stats.dim)
    return h + lam * stats.mean + math.sqrt(lam) * (factor @ z)


@dataclass(frozen=True)
class OracleReport:
    """Per-candidate Monte-Carlo estimates of the linear-domain score.

    ``estimates`` are means of the per-sample inverse probabilities
    (always >= 1); ``stderrs`` are sample-stdev / sqrt(m), zero when the
    spread is degenerate (m = 1 or a deterministic fast path).
    """

    estimates: np.ndarray
    stderrs: np.ndarray
    m: int
    seed: int
    decision: int

    def __post_init__(self):
        est = np.array(self.estimates, dtype=np.float64, copy=True)
        se = np.array(self.stderrs, dtype=np.float64, copy=True)
        est.setflags(write=False)
        se.setflags(write=False)
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "stderrs", se)


def _score_block(shift, sq_lam, factor, w, b, cand_pos, seed, block, n_samples):
    """Sample one block and return (count, mean, m2) per candidate."""
    rng = substream(seed, block)
    z = rng.standard_normal((n_samples, shift.shape[0]))
    x = shift + sq_lam * (z @ factor.T)
    logits = x @ w.T + b
    lse = _logsumexp_rows(logits)
    out = np.empty((len(cand_pos), 3))
    for j, pos in enumerate(cand_pos):
        vals = np.exp(lse - logits[:, pos])
        mean = float(vals.mean())
        out[j] = (n_samples, mean, float(np.sum((vals - mean) ** 2)))
    return out


def _combine_moments(parts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge per-block (count, mean, m2) rows in block order.

    Same parallel-moment merge as the stats module uses for covariance,
    which keeps the linear-domain averaging compensated without a
    per-sample Kahan loop.
    """
    n_cand = parts.shape[1]
    means = np.zeros(n_cand)
    m2s = np.zeros(n_cand)
    count = 0.0
    for block in parts:
        nb = block[0, 0]
        total = count + nb
        delta = block[:, 1] - means
        m2s += block[:, 2] + delta**2 * (count * nb / total)
        means += delta * (nb / total)
        count = total
    return means, m2s


def mc_scores(
    head: ClassifierHead,
    h,
    stats: DemoStats,
    lam: float,
    m: int,
    seed: int,
    restrict_candidates: bool = False,
    threads: int | None = None,
) -> OracleReport:
    """Monte-Carlo estimate of every candidate's linear-domain score.

    Degenerate augmentations (lam=0 or an all-zero covariance) are point
    masses, so the estimate equals the closed form exactly and no
    randomness is consumed; stderr is zero there.
    """
    m = int(m)
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    scorer = BatchScorer(head, stats, lam, restrict_candidates=restrict_candidates)
    h = as_feature_vector(h, head.dim)
    lam = float(lam)

    if lam == 0.0 or not stats.cov.any():
        estimates = np.exp(scorer.raw_scores(h))
        stderrs = np.zeros_like(estimates)
        decision = int(np.argmin(estimates))
        return OracleReport(estimates, stderrs, m=m, seed=int(seed), decision=decision)

    factor = cholesky_factor(stats.cov)
    shift = h + lam * stats.mean
    sq_lam = math.sqrt(lam)
    w, b, cand_pos = scorer._w, scorer._b, scorer._cand_pos

    n_blocks = (m + BLOCK_SIZE - 1) // BLOCK_SIZE
    sizes = [min(BLOCK_SIZE, m - i * BLOCK_SIZE) for i in range(n_blocks)]
    args = [
        (shift, sq_lam, factor, w, b, cand_pos, int(seed), i, sizes[i])
        for i in range(n_blocks)
    ]
    n_workers = min(worker_count(threads), n_blocks)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda a: _score_block(*a), args))
    else:
        parts = [_score_block(*a) for a in args]

    means, m2s = _combine_moments(np.array(parts))
    if m >= 2:
        stderrs = np.sqrt(np.maximum(m2s, 0.0) / (m - 1)) / math.sqrt(m)
    else:
        stderrs = np.zeros_like(means)
    decision = int(np.argmin(means))
    return OracleReport(means, stderrs, m=m, seed=int(seed), decision=decision)


def mgf_check(t: float, mu: float, sigma2: float, m: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo versus analytic mean of exp(t*X), X ~ N(mu, sigma2).

    Returns (mc_mean, analytic) where analytic = exp(t*mu + t^2*sigma2/2),
    the Gaussian moment identity that collapses infinite augmentation to
    the closed form.
    """
    t, mu, sigma2 = float(t), float(mu), float(sigma2)
    if not all(np.isfinite(v) for v in (t, mu, sigma2)):
        raise ValidationError("t, mu, sigma2 must be finite")
    if sigma2 < 0:
        raise ValidationError(f"sigma2 must be >= 0, got {sigma2}")
    m = int(m)
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    analytic = float(np.exp(t * mu + 0.5 * t * t * sigma2))
    rng = substream(seed, 0)
    x = mu + math.sqrt(sigma2) * rng.standard_normal(m)
    mc = float(np.exp(t * x).mean())
    return mc, analytic
