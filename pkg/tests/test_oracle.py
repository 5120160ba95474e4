import math

import numpy as np
import pytest

from idaicl import (
    ClassifierHead,
    DemoStats,
    cholesky_factor,
    estimate_stats,
    ida_scores,
    mc_scores,
    mgf_check,
    regularize,
    sample_augmented,
    substream,
    worker_count,
)
from idaicl.errors import FactorizationFailure, ValidationError


def instance(seed, dim=3, vocab=6, n_cand=2, demo_scale=0.3):
    rng = np.random.default_rng(seed)
    head = ClassifierHead(
        weights=rng.standard_normal((vocab, dim)) / math.sqrt(dim),
        biases=rng.standard_normal(vocab) * 0.1,
        candidates=tuple(range(n_cand)),
    )
    stats = regularize(estimate_stats(rng.standard_normal((12, dim)) * demo_scale), 1e-9)
    h = rng.standard_normal(dim)
    return head, stats, h


# --- substreams and workers --------------------------------------------------

def test_substream_deterministic_and_distinct():
    a = substream(7, 0).standard_normal(4)
    b = substream(7, 0).standard_normal(4)
    c = substream(7, 1).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("IDA_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("IDA_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("IDA_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("IDA_THREADS", "rubbish")
    with pytest.raises(ValidationError):
        worker_count()
    assert worker_count(3) == 3


# --- factorization -----------------------------------------------------------

def test_cholesky_zero_matrix():
    np.testing.assert_array_equal(cholesky_factor(np.zeros((3, 3))), np.zeros((3, 3)))


def test_cholesky_reconstructs_pd_matrix():
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    fac = cholesky_factor(cov)
    np.testing.assert_allclose(fac @ fac.T, cov, rtol=0, atol=1e-9)


def test_cholesky_handles_rank_deficient():
    s = estimate_stats([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])  # rank-1 cov
    fac = cholesky_factor(s.cov)
    np.testing.assert_allclose(fac @ fac.T, s.cov, rtol=0, atol=1e-6)


def test_cholesky_fails_on_indefinite():
    cov = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues -1, 3
    with pytest.raises(FactorizationFailure):
        cholesky_factor(cov)


# --- sampling ----------------------------------------------------------------

def test_sample_lam_zero_returns_h_rng_untouched():
    _, stats, h = instance(0)
    rng = substream(99, 0)
    out = sample_augmented(h, stats, 0.0, rng)
    np.testing.assert_array_equal(out, h)
    # rng must not have been consumed
    np.testing.assert_array_equal(rng.standard_normal(3), substream(99, 0).standard_normal(3))


def test_sample_zero_cov_is_deterministic_shift():
    stats = DemoStats(mean=np.array([1.0, 0.0]), cov=np.zeros((2, 2)), count=2)
    h = np.array([0.25, -1.0])
    out = sample_augmented(h, stats, 0.5, substream(1, 0))
    np.testing.assert_allclose(out, h + [0.5, 0.0], rtol=0, atol=1e-15)


def test_sample_distribution_matches_target():
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    stats = DemoStats(mean=np.array([2.0, -1.0]), cov=cov, count=10)
    h = np.array([0.5, 0.5])
    lam = 0.5
    rng = substream(123, 0)
    n = 100_000
    draws = np.array([sample_augmented(h, stats, lam, rng) for _ in range(n)])
    target_mean = h + lam * stats.mean
    se = np.sqrt(np.diag(lam * cov) / n)
    assert np.all(np.abs(draws.mean(axis=0) - target_mean) < 4 * se)
    emp_cov = np.cov(draws.T, bias=True)
    frob = np.linalg.norm(emp_cov - lam * cov)
    assert frob < 0.05 * np.linalg.norm(lam * cov)


# --- mc_scores ---------------------------------------------------------------

def test_mc_lam_zero_equals_closed_form_exactly():
    head, stats, h = instance(1)
    report = mc_scores(head, h, stats, 0.0, 17, seed=5)
    closed = np.exp(ida_scores(head, h, stats, 0.0).log_scores)
    np.testing.assert_array_equal(report.estimates, closed)
    np.testing.assert_array_equal(report.stderrs, np.zeros(2))


def test_mc_zero_cov_equals_closed_form_exactly():
    rng = np.random.default_rng(2)
    head = ClassifierHead(
        weights=rng.standard_normal((5, 3)),
        biases=np.zeros(5),
        candidates=(0, 1, 2),
    )
    stats = DemoStats(mean=rng.standard_normal(3), cov=np.zeros((3, 3)), count=4)
    h = rng.standard_normal(3)
    for m in (1, 5):
        report = mc_scores(head, h, stats, 0.8, m, seed=9)
        closed = np.exp(ida_scores(head, h, stats, 0.8).log_scores)
        np.testing.assert_array_equal(report.estimates, closed)
        np.testing.assert_array_equal(report.stderrs, np.zeros(3))


def test_mc_deterministic_given_seed():
    head, stats, h = instance(3)
    a = mc_scores(head, h, stats, 0.5, 5000, seed=11)
    b = mc_scores(head, h, stats, 0.5, 5000, seed=11)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    np.testing.assert_array_equal(a.stderrs, b.stderrs)
    c = mc_scores(head, h, stats, 0.5, 5000, seed=12)
    assert not np.array_equal(a.estimates, c.estimates)


def test_mc_thread_count_does_not_change_results(monkeypatch):
    head, stats, h = instance(4)
    m = 200_000  # spans multiple 65536-sample blocks
    monkeypatch.delenv("IDA_THREADS", raising=False)
    a = mc_scores(head, h, stats, 0.5, m, seed=21)
    monkeypatch.setenv("IDA_THREADS", "4")
    b = mc_scores(head, h, stats, 0.5, m, seed=21)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    np.testing.assert_array_equal(a.stderrs, b.stderrs)


def test_mc_m_one_has_zero_stderr():
    head, stats, h = instance(5)
    report = mc_scores(head, h, stats, 0.5, 1, seed=2)
    np.testing.assert_array_equal(report.stderrs, np.zeros(2))
    assert report.m == 1


def test_mc_matches_closed_form_within_3_sigma():
    head, stats, h = instance(6, dim=8, vocab=20, n_cand=4, demo_scale=0.5)
    report = mc_scores(head, h, stats, 0.5, 400_000, seed=31)
    closed = np.exp(ida_scores(head, h, stats, 0.5).log_scores)
    z = (report.estimates - closed) / report.stderrs
    assert np.all(np.abs(z) < 3.5)
    rel = np.abs(report.estimates - closed) / closed
    assert np.all(rel < 0.005)


def test_mc_decision_is_argmin_of_estimates():
    head, stats, h = instance(7, n_cand=3)
    report = mc_scores(head, h, stats, 0.5, 10_000, seed=41)
    assert report.decision == int(np.argmin(report.estimates))


def test_mc_convergence_over_100_seeds():
    # Normal-tail frequency check on candidate 0: expect ~0.27 excursions
    # beyond 3 stderr in 100 runs; allow 2.
    head, stats, h = instance(8)
    closed = float(np.exp(ida_scores(head, h, stats, 0.5).log_scores[0]))
    excursions = 0
    for seed in range(100):
        report = mc_scores(head, h, stats, 0.5, 4000, seed=seed)
        z = (report.estimates[0] - closed) / report.stderrs[0]
        if abs(z) > 3:
            excursions += 1
    assert excursions <= 2


def test_mc_seed_split_equivalence():
    head, stats, h = instance(9)
    single = mc_scores(head, h, stats, 0.5, 20_000, seed=123)
    half_a = mc_scores(head, h, stats, 0.5, 10_000, seed=1231)
    half_b = mc_scores(head, h, stats, 0.5, 10_000, seed=1232)
    split_est = (half_a.estimates + half_b.estimates) / 2
    split_se = np.sqrt(half_a.stderrs**2 + half_b.stderrs**2) / 2
    z = (split_est - single.estimates) / np.sqrt(split_se**2 + single.stderrs**2)
    assert np.all(np.abs(z) < 3)


def test_mc_requires_positive_m():
    head, stats, h = instance(10)
    with pytest.raises(ValidationError):
        mc_scores(head, h, stats, 0.5, 0, seed=1)


def test_oracle_report_is_frozen():
    head, stats, h = instance(11)
    report = mc_scores(head, h, stats, 0.5, 100, seed=1)
    assert not report.estimates.flags.writeable
    assert not report.stderrs.flags.writeable


# --- scalar MGF --------------------------------------------------------------

def test_mgf_t_zero_exact():
    mc, analytic = mgf_check(0.0, 0.7, 4.0, 100, seed=0)
    assert mc == 1.0
    assert analytic == 1.0


def test_mgf_point_mass():
    mc, analytic = mgf_check(2.0, 1.0, 0.0, 50, seed=3)
    assert mc == pytest.approx(math.exp(2.0), rel=1e-12)
    assert analytic == pytest.approx(math.exp(2.0), rel=1e-12)


def test_mgf_standard_normal_at_t1():
    m = 1_000_000
    mc, analytic = mgf_check(1.0, 0.0, 1.0, m, seed=7)
    assert analytic == pytest.approx(math.exp(0.5), rel=1e-12)
    # lognormal stderr of e^X for X~N(0,1): sqrt(e(e-1))/sqrt(m)
    se = math.sqrt(math.exp(1) * (math.exp(1) - 1)) / math.sqrt(m)
    assert abs(mc - analytic) < 3 * se


def test_mgf_rejects_bad_args():
    with pytest.raises(ValidationError):
        mgf_check(1.0, 0.0, -1.0, 10, seed=0)
    with pytest.raises(ValidationError):
        mgf_check(1.0, 0.0, 1.0, 0, seed=0)
