import math

import numpy as np
import pytest

from occamlab.codelengths import (
    EvidenceTable,
    binary_entropy,
    lemma1_sandwich,
    log2_binomial,
    log_likelihood,
    logsumexp2,
    profile_loglik,
    smap_mdl_gap_bounds,
    stirling_bound,
    stirling_gap,
    two_part_codelength,
)
from occamlab.priors import DyadicBlockPrior, ThetaPrior


class TestBinaryEntropy:

    def test_known_values(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.2) == pytest.approx(0.7219280948873623)

    def test_regime_constant(self):
        assert 0.5 * binary_entropy(0.2) - 0.2 == pytest.approx(0.160964, abs=1e-6)

    def test_symmetric_and_increasing(self):
        mu = np.linspace(0.0, 0.5, 101)
        h = binary_entropy(mu)
        np.testing.assert_allclose(h, binary_entropy(1.0 - mu), atol=1e-15)
        assert np.all(np.diff(h) > 0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            binary_entropy(1.5)


class TestLikelihoods:

    def test_log_likelihood(self):
        assert log_likelihood(0, 5, 0.0) == 0.0
        assert log_likelihood(1, 2, 0.5) == pytest.approx(-2.0)
        expected = 3 * math.log2(0.3) + 7 * math.log2(0.7)
        assert log_likelihood(3, 10, 0.3) == pytest.approx(expected)
        assert log_likelihood(1, 5, 0.0) == -math.inf

    def test_profile_is_maximum(self):
        grid = np.linspace(0.001, 0.999, 999)
        for a, m in ((0, 7), (3, 10), (9, 20), (20, 20)):
            best = profile_loglik(a, m)
            assert np.all(log_likelihood(a, m, grid) <= best + 1e-12)

    def test_profile_values(self):
        assert profile_loglik(3, 10) == pytest.approx(-10 * binary_entropy(0.3))
        assert profile_loglik(0, 0) == 0.0


class TestBinomialCodelength:

    def test_small_values(self):
        assert log2_binomial(4, 2) == pytest.approx(math.log2(6))
        assert log2_binomial(10, 0) == 0.0
        assert log2_binomial(10, 10) == 0.0

    @pytest.mark.parametrize("m", [1, 2, 7, 50, 199, 1000])
    def test_matches_exact_comb(self, m):
        a = np.arange(0, m + 1)
        expected = [math.log2(math.comb(m, int(k))) for k in a]
        np.testing.assert_allclose(log2_binomial(m, a), expected, rtol=1e-9, atol=1e-9)

    def test_two_part_codelength(self):
        prior = DyadicBlockPrior()
        assert two_part_codelength(prior, 1, 2, 4) == pytest.approx(2.0 + math.log2(6))
        assert two_part_codelength(prior, 1, 2, 4) == pytest.approx(4.585, abs=1e-3)

    def test_stirling_gap_bound(self):
        for m in range(10, 2001):
            a = np.arange(1, m)
            assert np.all(stirling_gap(m, a) <= stirling_bound(m))

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            log2_binomial(5, 6)
        with pytest.raises(ValueError):
            profile_loglik(-1, 5)


class TestEvidenceSandwich:

    @pytest.mark.parametrize("a, m", [(30, 100), (120, 400), (50, 100)])
    def test_contains_uniform_evidence(self, a, m):
        lower, upper = lemma1_sandwich(a, m, 1.0, 0.1)
        evidence = -ThetaPrior.uniform().log2_evidence(a, m)
        assert lower <= evidence <= upper

    def test_grid(self):
        alpha = 0.1
        prior = ThetaPrior(2.0, 2.0, 0.2)
        for m in range(50, 1001, 50):
            for a in range(1, m // 2 + 1):
                if not alpha + 1 / math.sqrt(m) < a / m:
                    continue
                lower, upper = lemma1_sandwich(a, m, prior.gamma, alpha)
                evidence = -prior.log2_evidence(a, m)
                assert lower <= evidence <= upper

    def test_integrated_below_profile(self):
        prior = ThetaPrior.uniform()
        for m in range(1, 61):
            a = np.arange(0, m + 1)
            assert np.all(prior.log2_evidence(a, m) <= profile_loglik(a, m) + 1e-12)

    @pytest.mark.parametrize("a, m, gamma, alpha", [
        (5, 100, 1.0, 0.1),
        (60, 100, 1.0, 0.1),
        (30, 100, 0.0, 0.1),
        (30, 100, 1.0, 0.5),
        (0, 0, 1.0, 0.1),
    ])
    def test_preconditions(self, a, m, gamma, alpha):
        with pytest.raises(ValueError):
            lemma1_sandwich(a, m, gamma, alpha)


class TestSmapMdlGap:

    def test_uniform_gap_is_exact(self):
        prior = ThetaPrior.uniform()
        for m in (1, 10, 100, 1000):
            lower, upper = smap_mdl_gap_bounds(m, prior)
            assert lower == upper == pytest.approx(math.log2(m + 1))
            a = np.arange(0, m + 1)
            gap = -prior.log2_evidence(a, m) - log2_binomial(m, a)
            np.testing.assert_allclose(gap, math.log2(m + 1), atol=1e-9)

    def test_floored_prior_gap_within_bounds(self):
        prior = ThetaPrior(2.0, 5.0, 0.1)
        m = 200
        lower, upper = smap_mdl_gap_bounds(m, prior)
        a = np.arange(0, m + 1)
        gap = -prior.log2_evidence(a, m) - log2_binomial(m, a)
        assert np.all(gap >= lower - 1e-9)
        assert np.all(gap <= upper + 1e-9)

    def test_point_mass_has_no_upper_bound(self):
        _, upper = smap_mdl_gap_bounds(100, ThetaPrior.point_mass(0.2))
        assert upper == math.inf


class TestEvidenceTable:

    def test_logsumexp2(self):
        assert logsumexp2([]) == -math.inf
        assert logsumexp2([0.0, 0.0]) == pytest.approx(1.0)
        assert logsumexp2([-2000.0, -2000.0]) == pytest.approx(-1999.0)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(42)
        m = 50
        errors = rng.integers(0, m + 1, size=30)
        log2_prior = -rng.uniform(1, 40, size=30)
        log2_mult = rng.uniform(0, 20, size=30)
        table = EvidenceTable.build(log2_prior, log2_mult, errors, m, ThetaPrior.uniform())
        assert table.posterior_weights().sum() == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(table.profile_bits, -profile_loglik(errors, m))
        np.testing.assert_allclose(table.codelength_bits,
                                   -log2_prior + log2_binomial(m, errors))
