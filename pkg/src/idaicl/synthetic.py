"""Synthetic classification tasks with controllable demonstration imbalance.

Features are drawn from class-conditional isotropic Gaussians.  The head
assigns one vocabulary token per class with weight rows at the class
means (optionally noised) and zero biases, so the vanilla softmax
decision is the origin-anchored nearest-weight rule; queries are always
drawn with uniform class priors regardless of demonstration imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import Bundle
from .core import ClassPriors, ClassifierHead
from .errors import EmptyInput, IndexOutOfRange, InvalidSpec
from .oracle import substream


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic task draw."""

    dim: int
    num_classes: int
    class_means: np.ndarray
    demo_priors: tuple[float, ...]
    n_demos: int
    n_queries: int
    shared_cov_scale: float = 1.0
    head_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        dim = int(self.dim)
        num_classes = int(self.num_classes)
        if dim < 1:
            raise InvalidSpec(f"dim must be >= 1, got {dim}")
        if num_classes < 2:
            raise InvalidSpec(f"num_classes must be >= 2, got {num_classes}")
        means = np.array(self.class_means, dtype=np.float64, copy=True)
        if means.shape != (num_classes, dim):
            raise InvalidSpec(
                f"class_means must have shape ({num_classes}, {dim}), got {means.shape}"
            )
        if not np.all(np.isfinite(means)):
            raise InvalidSpec("class_means contain NaN or infinity")
        priors = tuple(float(p) for p in self.demo_priors)
        if len(priors) != num_classes:
            raise InvalidSpec(f"demo_priors must have {num_classes} entries, got {len(priors)}")
        try:
            ClassPriors(np.array(priors))
        except Exception as e:
            raise InvalidSpec(f"demo_priors invalid: {e}") from e
        if int(self.n_demos) < num_classes:
            raise InvalidSpec(
                f"n_demos must be >= num_classes ({num_classes}), got {self.n_demos}"
            )
        if int(self.n_queries) < 1:
            raise InvalidSpec(f"n_queries must be >= 1, got {self.n_queries}")
        if not (np.isfinite(self.shared_cov_scale) and self.shared_cov_scale > 0):
            raise InvalidSpec(f"shared_cov_scale must be > 0, got {self.shared_cov_scale}")
        if not (np.isfinite(self.head_noise) and self.head_noise >= 0):
            raise InvalidSpec(f"head_noise must be >= 0, got {self.head_noise}")
        means.setflags(write=False)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "num_classes", num_classes)
        object.__setattr__(self, "class_means", means)
        object.__setattr__(self, "demo_priors", priors)
        object.__setattr__(self, "n_demos", int(self.n_demos))
        object.__setattr__(self, "n_queries", int(self.n_queries))
        object.__setattr__(self, "shared_cov_scale", float(self.shared_cov_scale))
        object.__setattr__(self, "head_noise", float(self.head_noise))
        object.__setattr__(self, "seed", int(self.seed))


def largest_remainder_counts(priors, n: int) -> np.ndarray:
    """Integer class counts proportional to priors, summing exactly to n.

    Floors the quotas and hands the leftover units to the largest
    fractional parts; ties go to the lowest class index.  Every count is
    within 1 of its exact quota.
    """
    priors = np.asarray(priors, dtype=np.float64)
    quotas = priors * n
    base = np.floor(quotas).astype(np.int64)
    remainder = n - int(base.sum())
    frac = quotas - base
    order = np.lexsort((np.arange(priors.shape[0]), -frac))
    base[order[:remainder]] += 1
    return base


def generate_task(spec: SyntheticSpec) -> Bundle:
    """Draw one task bundle; the same spec yields identical bytes."""
    rng = substream(spec.seed, 0)
    c, d = spec.num_classes, spec.dim
    means = spec.class_means
    sigma = float(np.sqrt(spec.shared_cov_scale))

    counts = largest_remainder_counts(np.array(spec.demo_priors), spec.n_demos)
    demo_labels = np.repeat(np.arange(c), counts)
    demo_features = means[demo_labels] + sigma * rng.standard_normal((spec.n_demos, d))

    query_labels = rng.integers(0, c, size=spec.n_queries)
    query_features = means[query_labels] + sigma * rng.standard_normal((spec.n_queries, d))

    weights = means + spec.head_noise * rng.standard_normal((c, d))
    head = ClassifierHead(
        weights=weights, biases=np.zeros(c), candidates=tuple(range(c))
    )
    return Bundle(
        head=head,
        label_names=tuple(f"class_{i}" for i in range(c)),
        demo_features=demo_features,
        query_features=query_features,
        demo_labels=demo_labels,
        query_labels=query_labels,
    )


def empirical_priors(labels, num_classes: int) -> ClassPriors:
    """Class proportions of the demonstration labels.

    Absent classes are clamped to 1/(10N) and the present classes are
    scaled down by the clamped mass, so the result is always a valid
    prior vector.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise EmptyInput("labels must be a non-empty 1-d sequence")
    num_classes = int(num_classes)
    if num_classes < 1:
        raise IndexOutOfRange(f"num_classes must be >= 1, got {num_classes}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise IndexOutOfRange(f"labels must lie in [0, {num_classes})")
    n = labels.shape[0]
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    if np.all(counts > 0):
        return ClassPriors(counts / n)
    floor = 1.0 / (10.0 * n)
    absent = counts == 0
    remaining = 1.0 - floor * int(absent.sum())
    if remaining > 0:
        probs = np.where(absent, floor, (counts / n) * remaining)
    else:
        # Degenerate: more absent classes than the floor mass allows
        # (num_classes approaching 10N).  Fall back to clamp-and-rescale.
        probs = np.maximum(counts / n, floor)
        probs = probs / probs.sum()
    return ClassPriors(probs)
