"""Closed-form scoring under infinite Gaussian augmentation.

For a query feature h, candidate answer token y, and demonstration
statistics (mu, Sigma), the augmented feature is h + delta with
delta ~ N(lam * mu, lam * Sigma).  Averaging the inverse softmax
probability over that distribution has a closed form: each cross-token
term picks up a moment factor exp(lam * dw.mu + (lam/2) * dw.Sigma.dw)
where dw = w_k - w_y.  Scores live in log domain:

    score(y) = logsumexp_k [ lam*dw.mu + (lam/2)*dw.Sigma.dw + dw.h + db ]

The k = y term is identically zero, so scores are always >= 0; lower
scores are better and the decision is the argmin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassPriors, ClassifierHead, DemoStats, ScoreVector, as_feature_vector
from .errors import (
    CandidateOutOfRange,
    DimensionMismatch,
    EmptyScores,
    LengthMismatch,
    NonPositiveAdjusted,
    TokenOutOfRange,
    ValidationError,
)

# Above this log-score, exp() would dwarf any tau*log(prior) addend, so
# prior adjustment returns the score unchanged and flags saturation.
SATURATION_THRESHOLD = 700.0


def _logsumexp(terms: np.ndarray) -> float:
    """Max-factored log-sum-exp of a 1-d array.

    The maximum term is pulled out through log1p, which guarantees the
    result is >= max(terms) in floating point, not just mathematically.
    """
    idx = int(np.argmax(terms))
    m = terms[idx]
    rest = terms - m
    rest[idx] = -np.inf
    return float(m + np.log1p(np.sum(np.exp(rest))))


def _logsumexp_rows(terms: np.ndarray) -> np.ndarray:
    """Row-wise max-factored log-sum-exp of a 2-d array."""
    idx = np.argmax(terms, axis=1)
    rows = np.arange(terms.shape[0])
    m = terms[rows, idx]
    rest = terms - m[:, None]
    rest[rows, idx] = -np.inf
    return m + np.log1p(np.sum(np.exp(rest), axis=1))


def log_softmax_prob(
    head: ClassifierHead, h, token: int, restrict_candidates: bool = False
) -> float:
    """Log probability of ``token`` under the head's softmax at feature h.

    Sums over the full vocabulary by default; with
    ``restrict_candidates=True`` the normalizer runs over the candidate
    tokens only (token must then be a candidate).
    """
    h = as_feature_vector(h, head.dim)
    token = int(token)
    if not 0 <= token < head.vocab_size:
        raise TokenOutOfRange(f"token {token} outside vocabulary of size {head.vocab_size}")
    z = head.weights @ h + head.biases
    if restrict_candidates:
        if token not in head.candidates:
            raise TokenOutOfRange(f"token {token} is not a candidate")
        z = z[np.array(head.candidates)]
        token_pos = head.candidates.index(token)
    else:
        token_pos = token
    return float(z[token_pos] - _logsumexp(z))


class BatchScorer:
    """Closed-form scorer with per-(head, stats, lam) precomputation.

    Building the scorer costs one |V| x d x d product; scoring a query is
    then O(|V| d + |Y| |V|).  Scores from this class are bit-identical to
    the one-shot functions below, which delegate here.
    """

    def __init__(
        self,
        head: ClassifierHead,
        stats: DemoStats,
        lam: float,
        restrict_candidates: bool = False,
    ):
        lam = float(lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValidationError(f"lam must be finite and >= 0, got {lam}")
        if stats.dim != head.dim:
            raise DimensionMismatch(
                f"stats dim {stats.dim} does not match head dim {head.dim}"
            )
        self.head = head
        self.stats = stats
        self.lam = lam
        self.restrict_candidates = bool(restrict_candidates)

        cand = np.array(head.candidates, dtype=np.intp)
        if restrict_candidates:
            self._cols = cand
        else:
            self._cols = np.arange(head.vocab_size, dtype=np.intp)
        # Position of each candidate inside the summation columns.
        if restrict_candidates:
            self._cand_pos = np.arange(len(cand), dtype=np.intp)
        else:
            self._cand_pos = cand
        self._w = head.weights[self._cols]
        self._b = head.biases[self._cols]

        n_cand = len(cand)
        n_cols = self._cols.shape[0]
        if lam > 0.0:
            mu, cov = stats.mean, stats.cov
            w_mu = self._w @ mu
            ws = self._w @ cov
            quad_diag = np.einsum("ij,ij->i", ws, self._w)
            base = np.empty((n_cand, n_cols))
            for j, pos in enumerate(self._cand_pos):
                w_y = self._w[pos]
                cross = ws @ w_y
                base[j] = lam * (w_mu - w_mu[pos]) + (lam / 2.0) * (
                    quad_diag - 2.0 * cross + quad_diag[pos]
                )
                # The y term is identically zero; pin it so the score
                # lower bound holds in floating point, not just on paper.
                base[j, pos] = 0.0
            self._base = base
        else:
            self._base = np.zeros((n_cand, n_cols))

    def raw_scores(self, h) -> np.ndarray:
        """Log scores for a single query feature, one per candidate.

        The candidate's own term is base 0 plus z[y] - z[y], which is
        exactly 0.0, so every score is >= 0 in floating point.
        """
        h = as_feature_vector(h, self.head.dim)
        z = self._w @ h + self._b
        z_y = z[self._cand_pos]
        terms = self._base + (z[None, :] - z_y[:, None])
        return _logsumexp_rows(terms)

    def scores(self, h) -> ScoreVector:
        return ScoreVector(log_scores=self.raw_scores(h))


def ida_log_score(
    head: ClassifierHead,
    h,
    stats: DemoStats,
    lam: float,
    candidate: int,
    restrict_candidates: bool = False,
) -> float:
    """Closed-form log score of one candidate token.

    At lam=0 this reduces exactly to the negative log softmax
    probability of the candidate.
    """
    candidate = int(candidate)
    if candidate not in head.candidates:
        raise CandidateOutOfRange(f"token {candidate} is not in head.candidates")
    scorer = BatchScorer(head, stats, lam, restrict_candidates=restrict_candidates)
    j = head.candidates.index(candidate)
    return float(scorer.raw_scores(h)[j])


def ida_scores(
    head: ClassifierHead,
    h,
    stats: DemoStats,
    lam: float,
    restrict_candidates: bool = False,
) -> ScoreVector:
    """Closed-form log scores for every candidate, in canonical order."""
    scorer = BatchScorer(head, stats, lam, restrict_candidates=restrict_candidates)
    return scorer.scores(h)


def adjust_with_priors(scores: ScoreVector, priors: ClassPriors, tau: float) -> ScoreVector:
    """Add tau * log(prior) to each score in the linear domain.

    Literal linear-domain adjustment: entry j becomes
    log(exp(s_j) + tau * log pi_j).  Entries above the saturation
    threshold are returned unchanged with the ``saturated`` flag set
    (the addend is below representational significance there).  A
    non-positive linear sum raises :class:`NonPositiveAdjusted`.
    """
    tau = float(tau)
    if not np.isfinite(tau) or tau < 0:
        raise ValidationError(f"tau must be finite and >= 0, got {tau}")
    if len(scores) != len(priors):
        raise LengthMismatch(
            f"{len(scores)} scores vs {len(priors)} priors"
        )
    if tau == 0.0:
        return scores

    s = scores.log_scores
    addend = tau * np.log(priors.probs)
    sat = s > SATURATION_THRESHOLD
    linear = np.where(sat, 1.0, np.exp(np.where(sat, 0.0, s))) + addend
    bad = ~sat & (linear <= 0.0)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise NonPositiveAdjusted(index=idx, value=float(linear[idx]))
    adjusted = np.where(sat, s, np.log(np.where(sat, 1.0, linear)))
    return ScoreVector(log_scores=adjusted, saturated=bool(sat.any()) or scores.saturated)


@dataclass(frozen=True)
class Decision:
    """Argmin decision over a score vector.

    ``candidate_index`` is a position in canonical candidate order; ties
    resolve to the lowest index.  ``adjusted`` records whether the scores
    had priors applied.
    """

    candidate_index: int
    scores: ScoreVector
    adjusted: bool = False


def decide(scores: ScoreVector, adjusted: bool = False) -> Decision:
    """Pick the candidate with the minimal log score."""
    if len(scores) == 0:
        raise EmptyScores("cannot decide over an empty score vector")
    idx = int(np.argmin(scores.log_scores))
    return Decision(candidate_index=idx, scores=scores, adjusted=adjusted)
