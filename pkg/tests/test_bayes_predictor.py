import math

import numpy as np
import pytest

from occamlab import bayes_predictor as bp
from occamlab.codelengths import binary_entropy
from occamlab.priors import DyadicBlockPrior, PolynomialTailPrior, ThetaPrior
from occamlab.problem_generator import ExplicitSample, ProblemGenerator, ProblemSpec
from occamlab.stat_checks import binomial_sigma

SPEC = ProblemSpec(0.2, 0.3, 0.5)
UNIFORM = ThetaPrior.uniform()
DYADIC = DyadicBlockPrior()


def good_only_sample(good_errors, m):
    good = np.zeros(m, dtype=bool)
    good[:good_errors] = True
    return ExplicitSample(np.zeros(m, dtype=np.uint8), np.ones(m, dtype=bool), good,
                          np.zeros((0, m), dtype=bool))


class TestPosteriorGroups:

    def test_single_classifier(self):
        groups = bp.posterior_groups(good_only_sample(2, 10), DYADIC, UNIFORM)
        np.testing.assert_allclose(groups.weight, [1.0])
        np.testing.assert_allclose(groups.theta_bar, [3 / 12])
        assert groups.is_good.tolist() == [True]

    def test_weights_sum_to_one(self):
        sample = ProblemGenerator(SPEC).sample_explicit(40, 15, seed=2)
        groups = bp.posterior_groups(sample, DYADIC, UNIFORM)
        total = groups.weight.sum() + groups.rest_ones + groups.rest_zeros
        assert total == pytest.approx(1.0, abs=1e-9)
        assert groups.count.sum() <= 16

    def test_aggregated_weights_sum_to_one(self):
        sample = ProblemGenerator(SPEC).sample_aggregated(128, DYADIC, seed=3)
        groups = bp.posterior_groups(sample, DYADIC, UNIFORM)
        total = groups.weight.sum() + groups.rest_ones + groups.rest_zeros
        assert total == pytest.approx(1.0, abs=1e-9)


class TestBayesPredict:

    def test_follows_good_classifier(self):
        sample = good_only_sample(2, 10)
        right = bp.TestPoint(label=1, hard=True, good_error=False)
        wrong = bp.TestPoint(label=1, hard=True, good_error=True)
        assert bp.bayes_predict(sample, DYADIC, UNIFORM, right, mu_hard=0.5) == 1
        assert bp.bayes_predict(sample, DYADIC, UNIFORM, wrong, mu_hard=0.5) == 0

    def test_tie_predicts_one(self):
        sample = good_only_sample(0, 0)
        point = bp.TestPoint(label=0, hard=False, good_error=False)
        assert bp.bayes_predict(sample, DYADIC, UNIFORM, point, mu_hard=0.5) == 1

    def test_predict_labels(self):
        np.testing.assert_array_equal(bp.predict_labels([0.2, 0.5, 0.5 - 1e-13, 0.7]),
                                      [0, 1, 1, 1])


class TestBayesGeneralization:

    def test_all_mass_on_good_classifier(self):
        sample = ProblemGenerator(SPEC).sample_skeleton(200, seed=0)
        estimate = bp.bayes_generalization(sample, DYADIC, UNIFORM, SPEC, m_test=20_000,
                                           seed=1)
        assert estimate.posterior_good_weight == pytest.approx(1.0)
        assert abs(estimate.error - 0.2) <= 4 * binomial_sigma(0.2, 20_000)
        assert estimate.ci_low <= estimate.error <= estimate.ci_high
        assert estimate.n_test == 20_000

    def test_dominant_bad_mass_errs_on_hard_points(self):
        spec = ProblemSpec(0.2, 0.3, 0.55)
        sample = ProblemGenerator(spec).sample_aggregated(4096, DYADIC, seed=5)
        estimate = bp.bayes_generalization(sample, DYADIC, UNIFORM, spec, m_test=20_000,
                                           seed=6)
        assert estimate.posterior_good_weight < 1e-6
        assert estimate.hard_error > 0.5
        assert estimate.easy_error == 0.0
        assert estimate.error > 0.2


class TestSequentialBayes:

    def test_empty_sample(self):
        result = bp.sequential_bayes(good_only_sample(0, 0), DYADIC, UNIFORM)
        assert result.mistakes == 0
        assert result.total_log_loss == 0.0
        assert result.mistake_rate == 0.0

    def test_explicit_chain_rule(self):
        sample = ProblemGenerator(SPEC).sample_explicit(120, 15, seed=4)
        result = bp.sequential_bayes(sample, DYADIC, UNIFORM)
        assert result.m == 120
        assert result.chain_rule_gap < 1e-6
        assert result.mistakes <= result.total_log_loss + 1e-6

    def test_aggregated_chain_rule(self):
        skeleton = ProblemGenerator(SPEC).sample_skeleton(300, seed=8)
        result = bp.sequential_bayes(skeleton, DYADIC, UNIFORM, mu_hard=0.5, seed=9)
        assert result.log_loss_bits.shape == (300,)
        assert np.all(result.log_loss_bits > 0)
        assert result.chain_rule_gap < 1e-6
        assert result.mistakes <= result.total_log_loss + 1e-6

    def test_mistake_rate_bound(self):
        skeleton = ProblemGenerator(SPEC).sample_skeleton(500, seed=10)
        result = bp.sequential_bayes(skeleton, DYADIC, UNIFORM, mu_hard=0.5, seed=11)
        assert result.mistake_rate <= binary_entropy(0.2) + 0.05

    def test_block_mode_needs_dyadic_prior(self):
        skeleton = ProblemGenerator(SPEC).sample_skeleton(20, seed=0)
        with pytest.raises(ValueError):
            bp.sequential_bayes(skeleton, PolynomialTailPrior(2.0), UNIFORM, mu_hard=0.5)
        with pytest.raises(ValueError):
            bp.sequential_bayes(skeleton, DYADIC, UNIFORM)

    def test_super_group_matches_explicit_when_splits_are_certain(self, monkeypatch):
        # every bad classifier errs on every hard example, so the expected
        # histogram of the merged blocks is exact
        monkeypatch.setattr(bp, 'EXACT_BLOCK_LIMIT', 3)
        spec = ProblemSpec(0.2, 0.3, 1.0)
        for seed in range(5):
            skeleton = ProblemGenerator(spec).sample_skeleton(60, seed=seed)
            explicit = ExplicitSample(skeleton.labels, skeleton.hard_flags,
                                      skeleton.good_error_bits,
                                      np.ones((63, int(skeleton.hard_flags.sum())), dtype=bool))
            merged = bp.sequential_bayes(skeleton, DYADIC, UNIFORM, mu_hard=1.0, n_max=6,
                                         seed=seed)
            reference = bp.sequential_bayes(explicit, DYADIC, UNIFORM)
            np.testing.assert_allclose(merged.log_loss_bits, reference.log_loss_bits,
                                       rtol=1e-9, atol=1e-12)
            assert merged.joint_log2_evidence == pytest.approx(reference.joint_log2_evidence)
            assert merged.mistakes == reference.mistakes

    def test_super_group_chain_rule(self, monkeypatch):
        monkeypatch.setattr(bp, 'EXACT_BLOCK_LIMIT', 3)
        skeleton = ProblemGenerator(SPEC).sample_skeleton(200, seed=12)
        result = bp.sequential_bayes(skeleton, DYADIC, UNIFORM, mu_hard=0.5, n_max=150,
                                     seed=13)
        assert result.n_max == 150
        assert result.chain_rule_gap < 1e-6
        assert result.mistakes <= result.total_log_loss + 1e-6

    def test_good_only_loss(self):
        # with a single classifier the joint evidence is that of c0 alone
        sample = good_only_sample(3, 10)
        result = bp.sequential_bayes(
            ExplicitSample(sample.labels, sample.hard_flags, sample.good_error_bits,
                           np.ones((1, 10), dtype=bool)),
            DYADIC, UNIFORM)
        expected = -math.log2(0.5 * 2 ** UNIFORM.log2_evidence(3, 10)
                              + 0.25 * 2 ** UNIFORM.log2_evidence(10, 10)) + math.log2(0.75)
        assert result.total_log_loss == pytest.approx(expected)
