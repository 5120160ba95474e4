"""Demonstration feature statistics: streaming estimation, merging,
regularization.

The estimator is a single-pass Welford update, so it can be sharded and
recombined with :func:`merge_stats` (an exact parallel-variance merge).
Covariance uses the population 1/N normalization throughout.
"""

from __future__ import annotations

import numpy as np

from .core import DemoStats, as_feature_matrix
from .errors import DimensionMismatch, EmptyInput, ValidationError


def estimate_stats(features, diagonal: bool = False) -> DemoStats:
    """Estimate mean and population covariance of demonstration features.

    ``features`` is an (n, d) array-like; duplicates are kept (multiset
    semantics).  With ``diagonal=True`` only per-component variances are
    accumulated and the returned covariance is diagonal.
    """
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        raise DimensionMismatch("features must be a 2-d (n, dim) array")
    if arr.shape[0] == 0:
        raise EmptyInput("need at least one demonstration feature vector")
    arr = as_feature_matrix(arr)
    n, d = arr.shape

    mean = np.zeros(d)
    if diagonal:
        m2 = np.zeros(d)
    else:
        m2 = np.zeros((d, d))
    for i in range(n):
        x = arr[i]
        delta = x - mean
        mean += delta / (i + 1)
        delta2 = x - mean
        if diagonal:
            m2 += delta * delta2
        else:
            m2 += np.outer(delta, delta2)

    if diagonal:
        cov = np.diag(m2 / n)
    else:
        cov = m2 / n
        cov = (cov + cov.T) / 2.0
    return DemoStats(mean=mean, cov=cov, count=n)


def merge_stats(a: DemoStats, b: DemoStats) -> DemoStats:
    """Combine two statistics as if estimated over the concatenated sets.

    Exact up to floating-point roundoff; commutative and associative at
    the 1e-10 level, so chunked estimates can be tree-merged in any order.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot merge stats of dims {a.dim} and {b.dim}")
    na, nb = a.count, b.count
    n = na + nb
    delta = b.mean - a.mean
    mean = a.mean + delta * (nb / n)
    m2 = a.cov * na + b.cov * nb + np.outer(delta, delta) * (na * nb / n)
    cov = m2 / n
    cov = (cov + cov.T) / 2.0
    return DemoStats(mean=mean, cov=cov, count=n)


def regularize(stats: DemoStats, eps: float) -> DemoStats:
    """Symmetrize and ridge the covariance.

    Returns stats with ``cov' = (cov + cov.T)/2 + eps * (trace/d) * I``.
    The ridge scales with the average variance, so eps is unitless.
    eps=0 leaves a symmetric covariance bit-identical.
    """
    eps = float(eps)
    if not np.isfinite(eps) or eps < 0:
        raise ValidationError(f"eps must be finite and >= 0, got {eps}")
    sym = (stats.cov + stats.cov.T) / 2.0
    d = stats.dim
    ridge = eps * (float(np.trace(sym)) / d)
    cov = sym + ridge * np.eye(d)
    return DemoStats(mean=stats.mean, cov=cov, count=stats.count)
