"""
Classifier selection rules: MAP, sMAP, two-part MDL and the Occam's
Razor bound learner, plus a Monte-Carlo check of the bound itself.

Every selector minimizes a per-group score over a CandidatePool. Ties
go to the smallest classifier index; within an aggregated block, to the
smallest error count.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from occamlab.candidate_pool import CandidatePool
from occamlab.codelengths import LN2, binary_entropy, log2_binomial, log_likelihood
from occamlab.rng_streams import StreamSplitter

logger = logging.getLogger(__name__)

ALGORITHMS = ('MAP', 'SMAP', 'MDL', 'BAYES', 'ORB')


@dataclass
class LearnerResult:
    """
    Outcome of one learner on one sample.

    Attributes:
        algorithm: One of ALGORITHMS
        selected: Descriptor of the chosen hypothesis ('c0', 'c17',
            'block812:h0', or 'predictive' for BAYES)
        empirical_error: Training error rate of the selection
        true_error: e_D of the selection (estimate for BAYES)
        score: Minimized objective (bits; an error rate for ORB)
        zero_error_event: Whether a zero-error bad classifier exists within k(m)
        ci_low, ci_high: Confidence interval of true_error (BAYES only)
        selected_block: Prior block of the selection (0 for c_0)
    """

    algorithm: str
    selected: str
    empirical_error: float
    true_error: float
    score: float
    zero_error_event: bool = False
    ci_low: float = float('nan')
    ci_high: float = float('nan')
    selected_block: int = -1
    extra: dict = field(default_factory=dict)

    @property
    def selected_good(self):
        return self.selected == 'c0'


def map_scores(chunk, m, theta_prior):
    """-log2 P(c) - log2 p(theta_hat) + m H(a/m), with theta_hat = a/m."""
    if theta_prior.point is not None:
        return -chunk.log2_prior - log_likelihood(chunk.errors, m, theta_prior.point)
    if m == 0:
        theta_hat = np.full(len(chunk), 0.5)
        fit = np.zeros(len(chunk))
    else:
        theta_hat = chunk.errors / m
        fit = m * binary_entropy(theta_hat)
    return -chunk.log2_prior - theta_prior.log2_density(theta_hat) + fit


def smap_scores(chunk, m, theta_prior):
    """-log2 P(c) - log2 of the theta-integrated likelihood."""
    return -chunk.log2_prior - theta_prior.log2_evidence(chunk.errors, m)


def mdl_scores(chunk, m, theta_prior=None):
    """Two-part codelength -log2 P(c) + log2 C(m, a)."""
    return -chunk.log2_prior + log2_binomial(m, chunk.errors)


def orb_penalty(log2_prior, m):
    """sqrt((ln(1/P(c)) + ln m) / (2m)) with natural logs."""
    return np.sqrt((-np.asarray(log2_prior) * LN2 + math.log(m)) / (2.0 * m))


def orb_scores(chunk, m, theta_prior=None):
    """Empirical error plus the Occam penalty; prior order alone when m = 0."""
    if m == 0:
        return -chunk.log2_prior * LN2
    return chunk.errors / m + orb_penalty(chunk.log2_prior, m)


SCORE_FUNCTIONS = {
    'MAP': map_scores,
    'SMAP': smap_scores,
    'MDL': mdl_scores,
    'ORB': orb_scores,
}


def good_score(algorithm, sample, classifier_prior, theta_prior=None):
    """Objective value of c_0 under a selector's score."""
    pool = CandidatePool(sample, classifier_prior)
    return float(SCORE_FUNCTIONS[algorithm](pool.good_chunk(), pool.m, theta_prior)[0])


def _select(algorithm, sample, classifier_prior, theta_prior, spec):
    pool = CandidatePool(sample, classifier_prior)
    score_fn = SCORE_FUNCTIONS[algorithm]
    m = pool.m
    best = None
    for chunk in pool.chunks():
        scores = score_fn(chunk, m, theta_prior)
        i = int(np.argmin(scores))
        # strict comparison keeps the earliest (smallest-index) winner
        if best is None or scores[i] < best[0]:
            best = (float(scores[i]), chunk, i)
    score, chunk, i = best
    errors = int(chunk.errors[i])
    good = bool(chunk.block[i] == 0)
    if spec is not None:
        true_error = spec.mu if good else spec.mu_prime
    else:
        true_error = float('nan')
    return LearnerResult(
        algorithm=algorithm,
        selected=chunk.describe(i),
        empirical_error=errors / m if m else 0.0,
        true_error=true_error,
        score=score,
        selected_block=int(chunk.block[i]),
    )


def select_map(sample, classifier_prior, theta_prior, spec=None):
    """
    Maximum a posteriori (c, theta) with theta profiled at the empirical error.

    Args:
        sample: ExplicitSample or AggregatedSample
        classifier_prior: ClassifierPrior
        theta_prior: ThetaPrior (a point mass fixes theta)
        spec: ProblemSpec for closed-form true errors (optional)

    Returns:
        LearnerResult
    """
    return _select('MAP', sample, classifier_prior, theta_prior, spec)


def select_smap(sample, classifier_prior, theta_prior, spec=None):
    """Classifier maximizing prior times theta-integrated likelihood."""
    return _select('SMAP', sample, classifier_prior, theta_prior, spec)


def select_mdl(sample, classifier_prior, spec=None):
    """Classifier with the shortest two-part code."""
    return _select('MDL', sample, classifier_prior, None, spec)


def select_orb(sample, classifier_prior, spec=None):
    """Classifier minimizing the Occam's Razor upper bound on its error."""
    return _select('ORB', sample, classifier_prior, None, spec)


def orb_closed_form_check(spec, m, classifier_prior):
    """
    Compare the ORB objective of c_0 with that of the first zero-error
    bad classifier, using leading-order scores.

    Args:
        spec: ProblemSpec
        m: Sample size
        classifier_prior: ClassifierPrior for P(c_0)

    Returns:
        Dict with bad_penalty, good_total and passed
    """
    log2_prior_bad = -spec.predicted_score_bits(m)['bad_bits']
    bad_penalty = float(orb_penalty(log2_prior_bad, m))
    asymptotic = math.sqrt(spec.mu_prime / spec.mu_hard * -math.log2(1.0 - spec.mu_hard) * LN2 / 2.0)
    good_total = spec.mu + float(orb_penalty(classifier_prior.log2_prior(0), m))
    return {'bad_penalty': bad_penalty, 'bad_penalty_limit': asymptotic,
            'good_total': good_total, 'passed': bad_penalty > good_total}


@dataclass
class OccamCheck:
    """Result of a Monte-Carlo check of the Occam's Razor bound."""

    violation_fraction: float
    sigma: float
    threshold: float
    trials: int
    passed: bool


def occam_bound_check(true_errors, log2_priors, m, delta, trials, seed=0):
    """
    Fraction of samples on which some classifier violates
    e_D(c) <= e_S(c) + sqrt((ln(1/P(c)) + ln(1/delta)) / (2m)).

    Empirical error counts are drawn independently as Binomial(m, e_D(c)).

    Args:
        true_errors: Array of true errors, one per classifier
        log2_priors: Array of log2 P(c), Kraft sum at most 1
        m: Sample size
        delta: Confidence parameter in (0, 1)
        trials: Number of independent samples
        seed: Stream seed

    Returns:
        OccamCheck (passes when the fraction is at most delta + 3 sigma)
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if m < 1 or trials < 1:
        raise ValueError(f"Need m >= 1 and trials >= 1, got m={m}, trials={trials}")
    true_errors = np.asarray(true_errors, dtype=np.float64)
    log2_priors = np.asarray(log2_priors, dtype=np.float64)
    if np.sum(np.exp2(log2_priors)) > 1.0 + 1e-9:
        raise ValueError("Classifier prior weights sum to more than 1")
    radius = np.sqrt((-log2_priors * LN2 + math.log(1.0 / delta)) / (2.0 * m))
    rng = StreamSplitter(seed).generator('occam-check')
    counts = rng.binomial(m, true_errors, size=(trials, true_errors.size))
    violated = np.any(true_errors > counts / m + radius, axis=1)
    fraction = float(np.mean(violated))
    sigma = math.sqrt(delta * (1.0 - delta) / trials)
    threshold = delta + 3.0 * sigma
    logger.debug("Occam check: %d/%d violating trials", int(violated.sum()), trials)
    return OccamCheck(violation_fraction=fraction, sigma=sigma, threshold=threshold,
                      trials=trials, passed=fraction <= threshold)
