import math
from dataclasses import replace

import numpy as np
import pytest

from occamlab.codelengths import binary_entropy
from occamlab.learners import select_map, select_mdl
from occamlab.priors import DyadicBlockPrior, PolynomialTailPrior, ThetaPrior
from occamlab.problem_generator import (
    EXACT_BLOCK_LIMIT,
    AggregatedSample,
    ExplicitSample,
    ProblemGenerator,
    ProblemSpec,
)
from occamlab.stat_checks import binned_two_sample_chi2, within_sigmas

SPEC = ProblemSpec(0.2, 0.3, 0.5)


class TestProblemSpec:

    def test_derived_quantities(self):
        assert SPEC.p_hard == pytest.approx(0.6)
        assert SPEC.inconsistency_regime
        assert not SPEC.in_regime(degree=2.0)
        assert SPEC.true_error(0) == 0.2
        assert SPEC.true_error(10 ** 30) == 0.3

    def test_predicted_scores(self):
        scores = SPEC.predicted_score_bits(4096)
        assert scores['good_bits'] == pytest.approx(4096 * binary_entropy(0.2))
        assert scores['bad_bits'] == pytest.approx(4096 * 0.6)
        assert scores['margin_bits'] > 0

    def test_mu_hard_one_is_allowed(self):
        spec = ProblemSpec(0.2, 1.0, 1.0)
        assert spec.p_hard == 1.0
        assert spec.predicted_score_bits(100)['bad_bits'] == math.inf

    @pytest.mark.parametrize("mu, mu_prime, mu_hard", [
        (0.0, 0.3, 0.5),
        (0.2, 0.1, 0.5),
        (0.2, 0.3, 0.4),
        (0.2, 0.6, 0.5),
        (0.2, 1.2, 1.0),
    ])
    def test_invalid(self, mu, mu_prime, mu_hard):
        with pytest.raises(ValueError):
            ProblemSpec(mu, mu_prime, mu_hard)

    def test_as_dict(self):
        d = SPEC.as_dict()
        assert d['p_hard'] == pytest.approx(0.6)
        assert d['inconsistency_regime'] is True


class TestExplicitSampling:

    def test_shapes_and_determinism(self):
        gen = ProblemGenerator(SPEC)
        a = gen.sample_explicit(500, 7, seed=3)
        b = gen.sample_explicit(500, 7, seed=3)
        assert a.m == 500
        assert a.K == 7
        assert a.bad_error_bits.shape == (7, a.m_hard)
        assert a.m_hard == int(a.hard_flags.sum())
        np.testing.assert_array_equal(a.bad_error_bits, b.bad_error_bits)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert not a.is_test

    @pytest.mark.parametrize("mu, mu_prime, mu_hard", [
        (0.2, 0.3, 0.5),
        (0.05, 0.06, 0.5),
        (0.1, 0.2, 0.5),
        (0.2, 0.3, 0.55),
        (0.3, 0.4, 1.0),
    ])
    def test_law_of_large_numbers(self, mu, mu_prime, mu_hard):
        m = 100_000
        spec = ProblemSpec(mu, mu_prime, mu_hard)
        sample = ProblemGenerator(spec).sample_explicit(m, 1, seed=11)
        assert within_sigmas(sample.m_hard / m, spec.p_hard, m)
        assert within_sigmas(sample.good_error_count / m, mu, m)
        assert within_sigmas(sample.empirical_error(1), mu_prime, m)
        assert within_sigmas(sample.labels.mean(), 0.5, m)

    def test_error_counts_layout(self):
        sample = ProblemGenerator(SPEC).sample_explicit(50, 3, seed=0)
        counts = sample.error_counts()
        assert counts[0] == sample.good_error_count
        np.testing.assert_array_equal(counts[1:], sample.bad_error_bits.sum(axis=1))

    def test_min_error_per_block(self):
        bits = np.zeros((7, 4), dtype=bool)
        bits[0, :3] = True          # c1: 3 errors
        bits[1, :2] = True          # c2: 2 errors
        bits[2, :1] = True          # c3: 1 error
        bits[3:, :] = True          # c4..c7: 4 errors
        bits[5, 1:] = False         # c6: 1 error
        sample = ExplicitSample(np.zeros(4, dtype=np.uint8), np.ones(4, dtype=bool),
                                np.zeros(4, dtype=bool), bits)
        np.testing.assert_array_equal(sample.min_error_per_block(DyadicBlockPrior()), [3, 1, 1])

    def test_permuted(self):
        sample = ProblemGenerator(SPEC).sample_explicit(40, 3, seed=1)
        swapped = sample.permuted([2, 1, 0])
        np.testing.assert_array_equal(swapped.bad_error_bits[0], sample.bad_error_bits[2])

    def test_skeleton_and_test_batch(self):
        gen = ProblemGenerator(SPEC)
        skeleton = gen.sample_skeleton(100, seed=0)
        assert skeleton.K == 0
        batch = gen.fresh_test_batch(200_000, seed=5)
        assert batch.is_test
        assert within_sigmas(batch.good_error_count / batch.m, 0.2, batch.m)

    def test_invalid_arguments(self):
        gen = ProblemGenerator(SPEC)
        with pytest.raises(ValueError):
            gen.sample_explicit(10, 0, seed=0)
        with pytest.raises(ValueError):
            gen.sample_explicit(-1, 3, seed=0)

    def test_empty_sample(self):
        sample = ProblemGenerator(SPEC).sample_explicit(0, 3, seed=0)
        assert sample.m == 0
        assert sample.empirical_error(0) == 0.0


class TestAggregatedSampling:

    def test_exact_blocks_are_complete(self):
        sample = ProblemGenerator(SPEC).sample_aggregated(64, DyadicBlockPrior(), seed=2)
        assert isinstance(sample, AggregatedSample)
        assert sample.n_exact == min(sample.n_max, EXACT_BLOCK_LIMIT)
        for n in range(1, sample.n_exact + 1):
            assert sample.exact_counts[n - 1].sum() == 2 ** (n - 1)
            assert sample.block_total_log2(n) == pytest.approx(n - 1)

    def test_default_n_max_targets_zero_error_classifiers(self):
        sample = ProblemGenerator(SPEC).sample_aggregated(256, DyadicBlockPrior(), seed=4)
        assert sample.n_max > sample.m_hard
        assert not sample.truncation_warning
        assert sample.first_zero_error_block() is not None

    def test_implicit_blocks(self):
        sample = ProblemGenerator(SPEC).sample_aggregated(256, DyadicBlockPrior(), seed=4)
        n = EXACT_BLOCK_LIMIT + 38
        assert n <= sample.n_max
        h, log2_count = sample.block_cells(n)
        assert np.all(np.diff(h) > 0)
        assert np.all(np.isfinite(log2_count))
        assert sample.block_total_log2(n) == pytest.approx(n - 1, abs=1e-6)

    def test_truncation_warning(self):
        sample = ProblemGenerator(SPEC).sample_aggregated(200, DyadicBlockPrior(), n_max=5,
                                                          seed=0)
        assert sample.truncation_warning
        assert sample.p_no_zero_error > 0.5

    def test_deterministic(self):
        gen = ProblemGenerator(SPEC)
        a = gen.sample_aggregated(128, DyadicBlockPrior(), seed=9)
        b = gen.sample_aggregated(128, DyadicBlockPrior(), seed=9)
        np.testing.assert_array_equal(a.exact_counts, b.exact_counts)
        np.testing.assert_array_equal(a.min_error_per_block(), b.min_error_per_block())

    def test_requires_dyadic_prior(self):
        with pytest.raises(ValueError, match="dyadic blocks"):
            ProblemGenerator(SPEC).sample_aggregated(64, PolynomialTailPrior(2.0))

    def test_matches_explicit_sampler_in_distribution(self):
        gen = ProblemGenerator(SPEC)
        prior = DyadicBlockPrior()
        explicit = []
        aggregated = []
        for seed in range(2000):
            explicit.append(gen.sample_explicit(8, 63, seed=seed).min_error_per_block(prior))
            aggregated.append(gen.sample_aggregated(8, prior, n_max=6,
                                                    seed=seed).min_error_per_block())
        explicit = np.array(explicit)
        aggregated = np.array(aggregated)
        for n in (1, 3, 6):
            p_value = binned_two_sample_chi2(explicit[:, n - 1], aggregated[:, n - 1])
            assert p_value > 1e-3


class TestKOfM:

    def test_small_m(self):
        info = ProblemGenerator(SPEC).k_of_m(16)
        assert info.epsilon == pytest.approx(0.5)
        assert info.log2_k == pytest.approx(3.0 + 17.6)
        assert info.k == math.ceil(2.0 ** info.log2_k)
        assert info.ceil_log2_k == 21

    def test_large_m_stays_in_log_domain(self):
        info = ProblemGenerator(SPEC).k_of_m(4096)
        assert info.log2_k == pytest.approx(7.0 + 4096 * 0.725)
        assert info.k is None
        assert info.failure_bound == pytest.approx(3.0 * math.exp(-128.0))

    def test_undefined_cases(self):
        with pytest.raises(ValueError):
            ProblemGenerator(ProblemSpec(0.2, 1.0, 1.0)).k_of_m(100)
        with pytest.raises(ValueError):
            ProblemGenerator(SPEC).k_of_m(0)


class TestZeroErrorEvent:

    def _sample(self, counts, m_hard=4):
        bits = np.zeros((len(counts), m_hard), dtype=bool)
        for row, c in enumerate(counts):
            bits[row, :c] = True
        return ExplicitSample(np.zeros(m_hard, dtype=np.uint8), np.ones(m_hard, dtype=bool),
                              np.zeros(m_hard, dtype=bool), bits)

    def test_explicit(self):
        gen = ProblemGenerator(SPEC)
        info = gen.k_of_m(16)
        assert gen.zero_error_event(self._sample([2, 1, 0]), info)
        assert not gen.zero_error_event(self._sample([2, 1, 3]), info)

    def test_index_beyond_k(self):
        gen = ProblemGenerator(SPEC)
        info = gen.k_of_m(1)
        # k(1) = 2 * 2^(1.6) < 8, so classifier 8 is out of range
        assert not gen.zero_error_event(self._sample([1] * 7 + [0]), info)

    def test_aggregated(self):
        gen = ProblemGenerator(SPEC)
        sample = gen.sample_aggregated(256, DyadicBlockPrior(), seed=4)
        assert gen.zero_error_event(sample, gen.k_of_m(256))

    def test_aggregated_uses_first_index_of_block(self):
        gen = ProblemGenerator(SPEC)
        sample = gen.sample_aggregated(256, DyadicBlockPrior(), seed=4)
        block = sample.first_zero_error_block()
        assert block >= 2
        info = gen.k_of_m(256)
        # k covers 2^(block-1) but not the rest of the block
        assert gen.zero_error_event(sample, replace(info, log2_k=block - 0.5))
        assert not gen.zero_error_event(sample, replace(info, log2_k=block - 1.5))


def shuffle_within_blocks(sample, prior, rng):
    order = np.arange(sample.K)
    n_blocks = (sample.K + 1).bit_length() - 1
    for n in range(1, n_blocks + 1):
        lo, hi = prior.block_range(n)
        order[lo - 1:hi] = rng.permutation(order[lo - 1:hi])
    return sample.permuted(order)


class TestWithinBlockExchangeability:
    """Bad classifiers of one block are interchangeable under the sampler."""

    def test_shuffled_rows_select_the_same_block(self):
        gen = ProblemGenerator(SPEC)
        prior = DyadicBlockPrior()
        theta = ThetaPrior.uniform()
        rng = np.random.default_rng(5)
        picks = {'MAP': ([], []), 'MDL': ([], [])}
        for seed in range(400):
            sample = gen.sample_explicit(32, 63, seed=seed)
            shuffled = shuffle_within_blocks(sample, prior, rng)
            for algorithm, select in (('MAP', lambda s: select_map(s, prior, theta)),
                                      ('MDL', lambda s: select_mdl(s, prior))):
                original, permuted = select(sample), select(shuffled)
                assert original.selected_block == permuted.selected_block
                assert original.score == pytest.approx(permuted.score)
                picks[algorithm][0].append(int(original.selected[1:]))
                picks[algorithm][1].append(int(permuted.selected[1:]))
        for original, permuted in picks.values():
            assert binned_two_sample_chi2(np.array(original), np.array(permuted)) > 1e-3
