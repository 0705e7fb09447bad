import numpy as np
import pytest
import scipy.stats

from pwsgd.errors import RankDeficiencyError
from pwsgd.leverage import (
    SamplingDistribution,
    approx_scores_l1,
    approx_scores_l2,
    default_l2_probe_cols,
    exact_scores,
    row_norm_distribution,
    sample_epoch,
    sample_index,
    sample_indices,
    uniform_distribution,
)
from pwsgd.linalg import qr_factorize

from conftest import random_full_rank


class TestDistributionType:
    def test_probs_normalized_and_exact(self, rng):
        lam = rng.random(20)
        dist = SamplingDistribution(lam=lam)
        assert abs(dist.probs.sum() - 1.0) <= 1e-12
        np.testing.assert_array_equal(dist.probs, lam / lam.sum())

    def test_rescaling_invariance(self, rng):
        lam = rng.random(15)
        d1 = SamplingDistribution(lam=lam)
        d2 = SamplingDistribution(lam=7.0 * lam)
        np.testing.assert_allclose(d1.probs, d2.probs, atol=1e-15)

    def test_rejects_negative_or_empty(self):
        with pytest.raises(ValueError):
            SamplingDistribution(lam=np.array([1.0, -0.1]))
        with pytest.raises(ValueError):
            SamplingDistribution(lam=np.zeros(3))
        with pytest.raises(ValueError):
            SamplingDistribution(lam=np.ones(2), gamma=1.0)

    def test_csv_export(self, tmp_path):
        dist = SamplingDistribution(lam=np.array([1.0, 3.0]))
        p = tmp_path / "dist.csv"
        dist.to_csv(p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "index,lambda,prob"
        assert lines[1].startswith("0,1.0,")


class TestExactScores:
    def test_orthonormal_rows_sum_to_d(self, rng):
        A, _ = qr_factorize(random_full_rank(rng, 40, 4))
        dist = exact_scores(A, np.eye(4), p=2)
        assert dist.lam.sum() == pytest.approx(4.0)
        np.testing.assert_allclose(dist.lam, (A * A).sum(axis=1), atol=1e-12)
        assert dist.gamma == 0.0

    def test_identity_stacked_on_zeros(self):
        A = np.vstack([np.eye(2), np.zeros((2, 2))])
        dist = exact_scores(A, np.eye(2), p=1)
        np.testing.assert_allclose(dist.lam, [1, 1, 0, 0])
        np.testing.assert_allclose(dist.probs, [0.5, 0.5, 0, 0])

    def test_frobenius_identity(self, rng):
        A = random_full_rank(rng, 30, 3)
        _, R = qr_factorize(A)
        dist = exact_scores(A, R, p=2)
        U = A @ np.linalg.inv(R)
        assert dist.lam.sum() == pytest.approx(np.linalg.norm(U, "fro") ** 2, abs=1e-10)

    def test_singular_R_rejected(self, rng):
        A = random_full_rank(rng, 10, 2)
        R = np.triu(np.zeros((2, 2)))
        with pytest.raises(RankDeficiencyError):
            exact_scores(A, R, p=2)


class TestApproxScoresL2:
    def test_identity_probe_equals_exact(self, rng):
        A = random_full_rank(rng, 25, 4)
        _, R = qr_factorize(A)
        exact = exact_scores(A, R, p=2)
        approx = approx_scores_l2(A, R, 4, seed=0, probe=np.eye(4))
        np.testing.assert_allclose(approx.lam, exact.lam, atol=1e-10)

    def test_sandwich_claim(self):
        # gamma = 0.5 sandwich against the exact-score oracle; with the
        # orthonormalized probe (k >= d) the estimates are exact, so the
        # sandwich holds for every row in every seed
        hits = 0
        for seed in range(100):
            r = np.random.default_rng(seed)
            A = r.standard_normal((1000, 10))
            _, R = qr_factorize(A)
            exact = exact_scores(A, R, p=2).lam
            k = default_l2_probe_cols(1000)
            approx = approx_scores_l2(A, R, k, seed=seed).lam
            ok = np.all((approx >= 0.5 * exact - 1e-12) & (approx <= 1.5 * exact + 1e-12))
            hits += ok
        assert hits >= 90

    def test_narrow_probe_is_jl_estimate(self, rng):
        # k < d falls back to the scaled Gaussian probe: unbiased on average
        A = random_full_rank(rng, 200, 8)
        _, R = qr_factorize(A)
        exact = exact_scores(A, R, p=2).lam
        est = np.zeros_like(exact)
        trials = 200
        for seed in range(trials):
            est += approx_scores_l2(A, R, 4, seed=seed).lam
        est /= trials
        assert np.corrcoef(est, exact)[0, 1] > 0.99
        assert est.sum() == pytest.approx(exact.sum(), rel=0.1)

    def test_scale_invariance_of_probs(self, rng):
        A = random_full_rank(rng, 50, 5)
        _, R = qr_factorize(A)
        d1 = approx_scores_l2(A, R, 16, seed=2)
        d2 = approx_scores_l2(7.0 * A, 7.0 * R, 16, seed=2)
        np.testing.assert_allclose(d1.probs, d2.probs, atol=1e-12)


class TestApproxScoresL1:
    def test_single_row(self):
        A = np.array([[1.0, 2.0]])
        dist = approx_scores_l1(A, np.eye(2), 21, seed=0)
        np.testing.assert_allclose(dist.probs, [1.0])

    def test_zero_row(self, rng):
        A = random_full_rank(rng, 10, 3)
        A[4] = 0.0
        _, R = qr_factorize(A)
        dist = approx_scores_l1(A, R, 21, seed=1)
        assert dist.lam[4] == 0.0

    def test_rank_correlation_against_exact(self):
        hits = 0
        for seed in range(50):
            r = np.random.default_rng(seed)
            A = r.standard_normal((500, 5))
            A[: 5] *= 30.0  # give the scores some spread
            _, R = qr_factorize(A)
            exact = exact_scores(A, R, p=1).lam
            approx = approx_scores_l1(A, R, 21, seed=seed + 1).lam
            rho = scipy.stats.spearmanr(exact, approx).statistic
            hits += rho >= 0.8
        assert hits >= 45


class TestSampling:
    def test_degenerate_distribution(self, rng):
        dist = SamplingDistribution(lam=np.array([1.0, 0.0, 0.0]))
        for _ in range(20):
            assert sample_index(dist, rng) == 0

    def test_frequency_oracle(self, rng):
        dist = SamplingDistribution(lam=np.array([0.25, 0.75]))
        draws = sample_indices(dist, 10_000, rng)
        freq = (draws == 1).mean()
        assert abs(freq - 0.75) <= 0.02

    def test_deterministic_given_state(self):
        dist = SamplingDistribution(lam=np.arange(1.0, 6.0))
        a = [sample_index(dist, np.random.default_rng(3)) for _ in range(5)]
        b = [sample_index(dist, np.random.default_rng(3)) for _ in range(5)]
        assert a == b

    def test_zero_prob_rows_never_sampled(self, rng):
        lam = np.ones(100)
        lam[::2] = 0.0
        dist = SamplingDistribution(lam=lam)
        draws = sample_indices(dist, 1_000_000, rng)
        assert np.all(dist.probs[draws] > 0)

    def test_epoch_sampling_distinct(self, rng):
        dist = SamplingDistribution(lam=np.arange(1.0, 51.0))
        idx = sample_epoch(dist, 5, rng)
        assert len(set(idx.tolist())) == 5

    def test_epoch_rejects_oversized_draw(self, rng):
        dist = SamplingDistribution(lam=np.array([1.0, 0.0, 1.0]))
        with pytest.raises(ValueError):
            sample_epoch(dist, 3, rng)

    def test_epoch_frequencies_chi_square(self):
        # mildly skewed distribution; aggregated over 100 epochs the observed
        # frequencies match p_i at the 1% level
        n, k = 50, 5
        lam = np.arange(1.0, n + 1.0)
        dist = SamplingDistribution(lam=lam)
        rng = np.random.default_rng(0)
        counts = np.zeros(n)
        epochs = 100
        for _ in range(epochs):
            np.add.at(counts, sample_epoch(dist, k, rng), 1.0)
        expected = dist.probs * k * epochs
        # merge tiny-expectation cells to keep the chi-square approximation valid
        order = np.argsort(expected)
        exp_s, obs_s = expected[order], counts[order]
        bins_exp, bins_obs, acc_e, acc_o = [], [], 0.0, 0.0
        for e, o in zip(exp_s, obs_s):
            acc_e += e
            acc_o += o
            if acc_e >= 5.0:
                bins_exp.append(acc_e)
                bins_obs.append(acc_o)
                acc_e = acc_o = 0.0
        bins_exp[-1] += acc_e
        bins_obs[-1] += acc_o
        stat, pval = scipy.stats.chisquare(bins_obs, f_exp=bins_exp)
        assert pval > 0.01

    def test_helper_distributions(self, rng):
        A = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])
        rn = row_norm_distribution(A, p=2)
        np.testing.assert_allclose(rn.lam, [25.0, 0.0, 1.0])
        uni = uniform_distribution(4)
        np.testing.assert_allclose(uni.probs, np.full(4, 0.25))
