import math

import numpy as np
import pytest

from occamlab.codelengths import binary_entropy
from occamlab.learners import (
    good_score,
    occam_bound_check,
    orb_closed_form_check,
    orb_penalty,
    select_map,
    select_mdl,
    select_orb,
    select_smap,
)
from occamlab.priors import ClassifierPrior, DyadicBlockPrior, ThetaPrior
from occamlab.problem_generator import ExplicitSample, ProblemGenerator, ProblemSpec
from occamlab.stat_checks import binned_two_sample_chi2

SPEC = ProblemSpec(0.2, 0.3, 0.5)
UNIFORM = ThetaPrior.uniform()


class FixedPrior(ClassifierPrior):
    """Explicit log2 weights for a handful of classifiers."""

    variant = 'fixed'

    def __init__(self, log2_weights):
        self.log2_weights = np.asarray(log2_weights, dtype=np.float64)

    def log2_prior(self, j):
        return float(self.log2_weights[j])

    def log2_prior_many(self, j):
        return self.log2_weights[np.asarray(j)]


def make_sample(good_errors, bad_counts, m):
    good = np.zeros(m, dtype=bool)
    good[:good_errors] = True
    bad = np.zeros((len(bad_counts), m), dtype=bool)
    for row, count in enumerate(bad_counts):
        bad[row, :count] = True
    return ExplicitSample(np.zeros(m, dtype=np.uint8), np.ones(m, dtype=bool), good, bad)


class TestWorkedExample:
    """c0 with 2/10 errors and prior 1/2 against a zero-error c1 with prior 2^-6."""

    sample = make_sample(2, [0], 10)
    prior = FixedPrior([-1.0, -6.0])

    def test_map_prefers_zero_error_classifier(self):
        result = select_map(self.sample, self.prior, UNIFORM, spec=SPEC)
        assert result.selected == 'c1'
        assert result.score == pytest.approx(6.0)
        assert result.true_error == 0.3
        assert result.empirical_error == 0.0
        assert good_score('MAP', self.sample, self.prior, UNIFORM) == pytest.approx(
            1.0 + 10 * binary_entropy(0.2))
        assert good_score('MAP', self.sample, self.prior, UNIFORM) == pytest.approx(8.219,
                                                                                  abs=1e-3)

    def test_map_with_cheaper_good_classifier(self):
        result = select_map(self.sample, FixedPrior([-1.0, -9.0]), UNIFORM)
        assert result.selected == 'c0'
        assert result.selected_good
        assert math.isnan(result.true_error)

    def test_map_with_fixed_noise_rate(self):
        result = select_map(self.sample, self.prior, ThetaPrior.point_mass(0.2))
        assert result.selected == 'c0'
        assert result.score == pytest.approx(1.0 + 10 * binary_entropy(0.2))

    def test_mdl(self):
        result = select_mdl(self.sample, self.prior)
        assert result.selected == 'c1'
        assert good_score('MDL', self.sample, self.prior) == pytest.approx(1 + math.log2(45))
        assert good_score('MDL', self.sample, self.prior) > 6.0

    def test_smap(self):
        result = select_smap(self.sample, self.prior, UNIFORM)
        assert result.selected == 'c1'
        assert result.score == pytest.approx(6.0 + math.log2(11))
        assert good_score('SMAP', self.sample, self.prior, UNIFORM) == pytest.approx(
            1.0 + math.log2(11 * 45))


class TestSelection:

    def test_ties_go_to_smallest_index(self):
        sample = make_sample(3, [5, 0, 0], 10)
        for result in (select_map(sample, DyadicBlockPrior(), UNIFORM),
                       select_smap(sample, DyadicBlockPrior(), UNIFORM),
                       select_mdl(sample, DyadicBlockPrior())):
            assert result.selected == 'c2'
            assert result.selected_block == 2

    @pytest.mark.parametrize("select", [
        lambda s: select_map(s, DyadicBlockPrior(), UNIFORM),
        lambda s: select_smap(s, DyadicBlockPrior(), UNIFORM),
        lambda s: select_mdl(s, DyadicBlockPrior()),
        lambda s: select_orb(s, DyadicBlockPrior()),
    ])
    def test_empty_sample_selects_prior_mode(self, select):
        sample = ProblemGenerator(SPEC).sample_explicit(0, 3, seed=0)
        result = select(sample)
        assert result.selected == 'c0'
        assert result.empirical_error == 0.0

    def test_single_classifier(self):
        sample = ProblemGenerator(SPEC).sample_skeleton(50, seed=0)
        assert select_map(sample, DyadicBlockPrior(), UNIFORM).selected == 'c0'
        assert select_orb(sample, DyadicBlockPrior()).selected == 'c0'


@pytest.fixture(scope='module')
def large_sample():
    return ProblemGenerator(SPEC).sample_aggregated(2048, DyadicBlockPrior(), seed=17)


class TestInconsistencyRegime:

    def test_map_smap_mdl_select_bad_classifiers(self, large_sample):
        prior = DyadicBlockPrior()
        for result in (select_map(large_sample, prior, UNIFORM, spec=SPEC),
                       select_smap(large_sample, prior, UNIFORM, spec=SPEC),
                       select_mdl(large_sample, prior, spec=SPEC)):
            assert not result.selected_good
            assert result.selected.startswith('block')
            assert result.true_error == 0.3
            assert result.score < good_score(result.algorithm, large_sample, prior, UNIFORM)

    def test_orb_selects_good_classifier(self, large_sample):
        result = select_orb(large_sample, DyadicBlockPrior(), spec=SPEC)
        assert result.selected == 'c0'
        assert result.true_error == 0.2


class TestOrb:

    def test_penalty_value(self):
        expected = math.sqrt((math.log(2) + math.log(100)) / 200)
        assert orb_penalty(-1.0, 100) == pytest.approx(expected)
        assert orb_penalty(-1.0, 100) == pytest.approx(0.1628, abs=1e-3)

    def test_penalty_decreases_with_m(self):
        values = [float(orb_penalty(-1.0, m)) for m in (100, 1000, 10000)]
        assert values == sorted(values, reverse=True)

    def test_closed_form(self):
        check = orb_closed_form_check(SPEC, 16384, DyadicBlockPrior())
        assert check['passed']
        assert check['bad_penalty'] == pytest.approx(0.4563, abs=1e-3)
        assert check['bad_penalty_limit'] == pytest.approx(math.sqrt(0.3 * math.log(2)))
        assert check['good_total'] == pytest.approx(0.2178, abs=1e-3)


class TestOccamBound:

    def test_single_classifier(self):
        check = occam_bound_check([0.3], [0.0], m=100, delta=0.05, trials=1000, seed=0)
        assert check.passed
        assert check.violation_fraction <= check.threshold

    def test_many_classifiers(self):
        errors = np.linspace(0.05, 0.45, 64)
        check = occam_bound_check(errors, np.full(64, -6.0), m=100, delta=0.05,
                                  trials=1000, seed=1)
        assert check.passed

    def test_invalid(self):
        with pytest.raises(ValueError):
            occam_bound_check([0.3], [0.0], m=100, delta=1.0, trials=10)
        with pytest.raises(ValueError, match="sum to more than 1"):
            occam_bound_check([0.3, 0.3], [0.0, 0.0], m=100, delta=0.05, trials=10)


@pytest.fixture(scope='module')
def paired_samples():
    gen = ProblemGenerator(SPEC)
    prior = DyadicBlockPrior()
    explicit = [gen.sample_explicit(16, 63, seed=seed) for seed in range(600)]
    aggregated = [gen.sample_aggregated(16, prior, n_max=6, seed=seed) for seed in range(600)]
    return explicit, aggregated


@pytest.mark.parametrize("select", [
    lambda s, prior: select_map(s, prior, UNIFORM),
    lambda s, prior: select_smap(s, prior, UNIFORM),
    lambda s, prior: select_mdl(s, prior),
    lambda s, prior: select_orb(s, prior),
], ids=['MAP', 'SMAP', 'MDL', 'ORB'])
def test_aggregated_sampler_selects_like_explicit(paired_samples, select):
    prior = DyadicBlockPrior()
    explicit, aggregated = paired_samples
    blocks = [np.array([select(s, prior).selected_block for s in samples])
              for samples in (explicit, aggregated)]
    assert binned_two_sample_chi2(*blocks) > 1e-3
