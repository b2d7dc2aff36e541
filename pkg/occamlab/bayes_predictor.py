"""
Full-Bayes prediction: the posterior-weighted vote over (c, theta).

The batch predictor votes on fresh test points; bad-classifier outputs
on a test point are independent of the training record, so each
posterior group is split by a Binomial(count, mu_hard) draw on hard
test points. The sequential predictor classifies y_i from the posterior
on the first i - 1 examples and records its log loss.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from occamlab.candidate_pool import CandidatePool
from occamlab.codelengths import EvidenceTable, logsumexp2
from occamlab.problem_generator import EXACT_BLOCK_LIMIT, ProblemGenerator
from occamlab.rng_streams import StreamSplitter
from occamlab.stat_checks import wilson_interval

logger = logging.getLogger(__name__)

SPLIT_MIN_WEIGHT = 1e-9
TIE_TOLERANCE = 1e-12
TEST_CHUNK = 2048


@dataclass
class TestPoint:
    """A single test example: its label, hardness and c_0's error bit."""

    label: int
    hard: bool
    good_error: bool


@dataclass
class PosteriorGroups:
    """
    Posterior weights of the candidate groups.

    Groups below SPLIT_MIN_WEIGHT are folded into rest_ones / rest_zeros,
    the summed vote mass for label 1 when the group outputs 1 / outputs 0.
    """

    weight: np.ndarray
    theta_bar: np.ndarray
    count: np.ndarray
    is_good: np.ndarray
    rest_ones: float
    rest_zeros: float
    log2_normalizer: float


def posterior_groups(sample, classifier_prior, theta_prior, min_weight=SPLIT_MIN_WEIGHT):
    """
    Build normalized posterior weights and posterior-mean noise rates.

    Args:
        sample: ExplicitSample or AggregatedSample (training data)
        classifier_prior: ClassifierPrior
        theta_prior: ThetaPrior
        min_weight: Groups lighter than this only contribute their expected vote

    Returns:
        PosteriorGroups
    """
    pool = CandidatePool(sample, classifier_prior)
    m = pool.m

    def tables():
        for chunk in pool.chunks():
            yield chunk, EvidenceTable.build(chunk.log2_prior, chunk.log2_multiplicity,
                                             chunk.errors, m, theta_prior)

    log2_norm = -math.inf
    for _, table in tables():
        log2_norm = float(np.logaddexp2(log2_norm, table.log2_normalizer))

    weights, thetas, counts, goods, priors, errors = [], [], [], [], [], []
    rest_ones = rest_zeros = 0.0
    for chunk, table in tables():
        w = table.posterior_weights(log2_norm)
        tb = np.atleast_1d(theta_prior.posterior_mean(chunk.errors, m))
        keep = (w >= min_weight) | chunk.is_good
        rest_ones += float(np.sum(w[~keep] * (1.0 - tb[~keep])))
        rest_zeros += float(np.sum(w[~keep] * tb[~keep]))
        weights.append(w[keep])
        thetas.append(tb[keep])
        counts.append(chunk.count[keep])
        goods.append(chunk.is_good[keep])
        priors.append(chunk.log2_prior[keep])
        errors.append(chunk.errors[keep])

    weight = np.concatenate(weights)
    theta_bar = np.concatenate(thetas)
    count = np.concatenate(counts)
    is_good = np.concatenate(goods)
    if not pool.aggregated and weight.size > 1:
        # classifiers sharing prior weight and error count are exchangeable
        keys = np.column_stack((is_good, np.concatenate(priors), np.concatenate(errors)))
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        weight = np.bincount(inverse, weights=weight)
        count = np.bincount(inverse, weights=count).astype(np.int64)
        theta_bar = theta_bar[first]
        is_good = is_good[first]

    return PosteriorGroups(weight=weight, theta_bar=theta_bar, count=count,
                           is_good=is_good, rest_ones=rest_ones, rest_zeros=rest_zeros,
                           log2_normalizer=log2_norm)


def vote_for_one(groups, labels, hard, good_errors, mu_hard, rng):
    """
    Posterior predictive probability of label 1 on each test point.

    Args:
        groups: PosteriorGroups
        labels: Test labels (array of 0/1)
        hard: Hardness flags
        good_errors: Whether c_0 errs on each point
        mu_hard: Bad-classifier error rate on hard points
        rng: numpy Generator for the binomial splits

    Returns:
        Array of P(y = 1 | x, S)
    """
    labels = np.asarray(labels, dtype=np.int64)
    hard = np.asarray(hard, dtype=bool)
    good_errors = np.asarray(good_errors, dtype=bool)
    p1 = np.zeros(labels.shape[0])

    good = groups.is_good
    w0 = float(groups.weight[good].sum())
    t0 = float(groups.theta_bar[good][0]) if np.any(good) else 0.5
    out0 = labels ^ good_errors.astype(np.int64)
    p1 += w0 * np.where(out0 == 1, 1.0 - t0, t0)

    bad = ~good
    wb = groups.weight[bad]
    tb = groups.theta_bar[bad]
    nb = groups.count[bad]
    ones_all = float(np.sum(wb * (1.0 - tb))) + groups.rest_ones
    zeros_all = float(np.sum(wb * tb)) + groups.rest_zeros

    # easy points: every bad classifier outputs the label
    easy = ~hard
    p1[easy] += np.where(labels[easy] == 1, ones_all, zeros_all)

    split = nb > 0
    ws, ts, ns = wb[split], tb[split], nb[split]
    exp_ones = ones_all - float(np.sum(ws * (1.0 - ts)))
    exp_zeros = zeros_all - float(np.sum(ws * ts))
    hard_idx = np.flatnonzero(hard)
    for start in range(0, hard_idx.size, TEST_CHUNK):
        idx = hard_idx[start:start + TEST_CHUNK]
        y = labels[idx]
        f_ones = np.where(y == 1, 1.0 - mu_hard, mu_hard)
        vote = exp_ones * f_ones + exp_zeros * (1.0 - f_ones)
        if ns.size:
            wrong = rng.binomial(ns[None, :], mu_hard, size=(idx.size, ns.size))
            frac_wrong = wrong / ns[None, :]
            frac_ones = np.where(y[:, None] == 1, 1.0 - frac_wrong, frac_wrong)
            vote += (frac_ones * (ws * (1.0 - 2.0 * ts))[None, :]).sum(axis=1) + np.sum(ws * ts)
        p1[idx] += vote
    return p1


def predict_labels(p1):
    """Label 1 iff P(1) >= 1/2; values within TIE_TOLERANCE of 1/2 count as ties."""
    return (np.asarray(p1) >= 0.5 - TIE_TOLERANCE).astype(np.int64)


def bayes_predict(sample, classifier_prior, theta_prior, test_point, mu_hard, seed=0):
    """
    Label predicted by the Bayes act for one test point.

    Args:
        sample: Training sample
        classifier_prior: ClassifierPrior
        theta_prior: ThetaPrior
        test_point: TestPoint
        mu_hard: Bad-classifier error rate on hard points
        seed: Stream seed for the binomial split

    Returns:
        0 or 1
    """
    groups = posterior_groups(sample, classifier_prior, theta_prior)
    rng = StreamSplitter(seed).generator('bayes-votes')
    p1 = vote_for_one(groups, [test_point.label], [test_point.hard],
                      [test_point.good_error], mu_hard, rng)
    return int(predict_labels(p1)[0])


@dataclass
class BayesEstimate:
    """Monte-Carlo estimate of the Bayes classifier's generalization error."""

    error: float
    ci_low: float
    ci_high: float
    n_test: int
    hard_error: float
    easy_error: float
    posterior_good_weight: float
    log2_evidence: float = 0.0


def bayes_generalization(sample, classifier_prior, theta_prior, spec, m_test, seed=0):
    """
    Estimate e_D of the Bayes classifier on m_test fresh examples.

    Args:
        sample: Training sample
        classifier_prior: ClassifierPrior
        theta_prior: ThetaPrior
        spec: ProblemSpec generating the test data
        m_test: Number of test examples
        seed: Stream seed

    Returns:
        BayesEstimate with a Wilson 95% interval
    """
    groups = posterior_groups(sample, classifier_prior, theta_prior)
    test = ProblemGenerator(spec).fresh_test_batch(m_test, seed)
    rng = StreamSplitter(seed).generator('bayes-votes')
    p1 = vote_for_one(groups, test.labels, test.hard_flags, test.good_error_bits,
                      spec.mu_hard, rng)
    wrong = predict_labels(p1) != test.labels
    errors = int(np.count_nonzero(wrong))
    low, high = wilson_interval(errors, m_test)
    hard = test.hard_flags
    n_hard = int(np.count_nonzero(hard))
    good_weight = float(groups.weight[groups.is_good].sum())
    logger.debug("Bayes: posterior weight on c0 %.3g, %d/%d test errors",
                 good_weight, errors, m_test)
    return BayesEstimate(
        error=errors / m_test if m_test else 0.0,
        ci_low=low,
        ci_high=high,
        n_test=m_test,
        hard_error=float(np.mean(wrong[hard])) if n_hard else 0.0,
        easy_error=float(np.mean(wrong[~hard])) if n_hard < m_test else 0.0,
        posterior_good_weight=good_weight,
        log2_evidence=groups.log2_normalizer,
    )


@dataclass
class SequentialResult:
    """
    Outcome of sequential Bayes classification over one sample.

    Attributes:
        m: Number of examples
        mistakes: Number of misclassified y_i
        log_loss_bits: -log2 P(y_i | x_i, S^(i-1)) per step
        joint_log2_evidence: log2 P(y^m | x^m) computed directly
        n_max: Prior blocks simulated (block-histogram runs only, else 0)
    """

    m: int
    mistakes: int
    log_loss_bits: np.ndarray
    joint_log2_evidence: float
    n_max: int = 0

    @property
    def total_log_loss(self):
        return float(math.fsum(self.log_loss_bits))

    @property
    def mistake_rate(self):
        return self.mistakes / self.m if self.m else 0.0

    @property
    def chain_rule_gap(self):
        """|sum of prefix log losses + log2 joint evidence|, in bits."""
        return abs(self.total_log_loss + self.joint_log2_evidence)


def _step(p_y, label):
    p1 = p_y if label == 1 else 1.0 - p_y
    predicted = 1 if p1 >= 0.5 - TIE_TOLERANCE else 0
    return -math.log2(p_y), int(predicted != label)


def _sequential_explicit(sample, classifier_prior, theta_prior):
    m, K = sample.m, sample.K
    log2_prior = classifier_prior.log2_prior_many(np.arange(K + 1))
    column = np.full(m, -1, dtype=np.int64)
    column[sample.hard_index] = np.arange(sample.m_hard)
    errors = np.zeros(K + 1, dtype=np.int64)
    losses = np.empty(m)
    mistakes = 0
    for i in range(m):
        wrong = np.zeros(K + 1, dtype=bool)
        wrong[0] = sample.good_error_bits[i]
        if column[i] >= 0:
            wrong[1:] = sample.bad_error_bits[:, column[i]]
        lw = log2_prior + theta_prior.log2_evidence(errors, i)
        w = np.exp2(lw - lw.max())
        tb = theta_prior.posterior_mean(errors, i)
        p_y = float(np.sum(w * np.where(wrong, tb, 1.0 - tb)) / np.sum(w))
        losses[i], miss = _step(p_y, int(sample.labels[i]))
        mistakes += miss
        errors += wrong
    joint = (logsumexp2(log2_prior + theta_prior.log2_evidence(errors, m))
             - logsumexp2(log2_prior))
    return SequentialResult(m=m, mistakes=mistakes, log_loss_bits=losses,
                            joint_log2_evidence=joint)


def _sequential_aggregated(skeleton, classifier_prior, theta_prior, mu_hard, n_max, rng):
    m = skeleton.m
    m_hard = int(np.count_nonzero(skeleton.hard_flags))
    if n_max is None:
        log2_zero = m_hard * math.log2(1.0 - mu_hard) if mu_hard < 1.0 else -math.inf
        n_max = ProblemGenerator.default_n_max(log2_zero)
    n_exact = min(n_max, EXACT_BLOCK_LIMIT)

    # exact int64 cells for small blocks, one expected-count profile for the rest
    cells = np.zeros((n_exact, m_hard + 2), dtype=np.int64)
    cells[:, 0] = np.left_shift(np.int64(1), np.arange(n_exact, dtype=np.int64))
    lp_exact = np.asarray(classifier_prior.log2_block_member(np.arange(1, n_exact + 1)))
    if n_max > n_exact:
        big = np.arange(n_exact + 1, n_max + 1)
        log2_super = logsumexp2((big - 1.0) + classifier_prior.log2_block_member(big))
    else:
        log2_super = -math.inf
    profile = np.full(m_hard + 2, -math.inf)
    profile[0] = log2_super
    lp0 = classifier_prior.log2_prior(0)
    log2_initial = logsumexp2(np.concatenate(
        ([lp0, log2_super], np.arange(n_exact) + lp_exact)))

    with np.errstate(divide='ignore'):
        log2_keep = math.log2(1.0 - mu_hard) if mu_hard < 1.0 else -math.inf
        log2_move = math.log2(mu_hard)

    a0 = 0
    t = 0
    losses = np.empty(m)
    mistakes = 0
    for i in range(m):
        hs = np.arange(t + 1)
        ev = np.atleast_1d(theta_prior.log2_evidence(hs, i))
        tb = np.atleast_1d(theta_prior.posterior_mean(hs, i))
        ev0 = theta_prior.log2_evidence(a0, i)
        tb0 = theta_prior.posterior_mean(a0, i)
        counts = cells[:, :t + 1]
        member = lp_exact[:, None] + ev[None, :]
        with np.errstate(divide='ignore'):
            lw_exact = np.log2(counts.astype(np.float64)) + member
        lw_super = profile[:t + 1] + ev
        lw0 = lp0 + ev0
        top = max(float(lw_exact.max()), float(lw_super.max()), lw0)
        w_cell = np.exp2(lw_exact - top)
        w_super = np.exp2(lw_super - top)
        w0 = 2.0 ** (lw0 - top)
        den = float(w_cell.sum()) + float(w_super.sum()) + w0

        if skeleton.hard_flags[i]:
            moved = np.zeros_like(counts)
            occupied = counts > 0
            moved[occupied] = rng.binomial(counts[occupied], mu_hard)
            frac = moved / np.maximum(counts, 1)
            num = float(np.sum(w_cell * ((1.0 - frac) * (1.0 - tb) + frac * tb)))
            num += float(np.sum(w_super * ((1.0 - mu_hard) * (1.0 - tb) + mu_hard * tb)))
        else:
            num = float(np.sum(w_cell * (1.0 - tb)))
            num += float(np.sum(w_super * (1.0 - tb)))
        good_wrong = bool(skeleton.good_error_bits[i])
        num += w0 * (tb0 if good_wrong else 1.0 - tb0)

        losses[i], miss = _step(num / den, int(skeleton.labels[i]))
        mistakes += miss

        if skeleton.hard_flags[i]:
            cells[:, :t + 1] -= moved
            cells[:, 1:t + 2] += moved
            stay = profile[:t + 1] + log2_keep
            shift = profile[:t + 1] + log2_move
            profile[:t + 2] = np.logaddexp2(np.append(stay, -math.inf),
                                            np.insert(shift, 0, -math.inf))
            t += 1
        a0 += int(good_wrong)

    hs = np.arange(t + 1)
    ev = np.atleast_1d(theta_prior.log2_evidence(hs, m))
    with np.errstate(divide='ignore'):
        lw_exact = np.log2(cells[:, :t + 1].astype(np.float64)) + lp_exact[:, None] + ev[None, :]
    final = np.concatenate((lw_exact.ravel(), profile[:t + 1] + ev,
                            [lp0 + theta_prior.log2_evidence(a0, m)]))
    joint = logsumexp2(final) - log2_initial
    return SequentialResult(m=m, mistakes=mistakes, log_loss_bits=losses,
                            joint_log2_evidence=joint, n_max=n_max)


def sequential_bayes(sample, classifier_prior, theta_prior, mu_hard=None, n_max=None, seed=0):
    """
    Classify y_1..y_m in turn with the Bayes act on the preceding examples.

    With an ExplicitSample that carries bad classifiers, every classifier
    is tracked. With a skeleton sample (K = 0) the bad classifiers of
    blocks 1..n_max are simulated as block histograms that are split
    binomially on each hard example.

    Args:
        sample: ExplicitSample
        classifier_prior: ClassifierPrior
        theta_prior: ThetaPrior
        mu_hard: Bad-classifier error rate on hard examples (skeleton mode)
        n_max: Number of prior blocks (skeleton mode)
        seed: Stream seed for the splits (skeleton mode)

    Returns:
        SequentialResult
    """
    if sample.m == 0:
        return SequentialResult(m=0, mistakes=0, log_loss_bits=np.zeros(0),
                                joint_log2_evidence=0.0)
    if sample.K > 0:
        return _sequential_explicit(sample, classifier_prior, theta_prior)
    if mu_hard is None or not classifier_prior.has_dyadic_blocks:
        raise ValueError("Block-histogram sequential runs need mu_hard and a dyadic-block prior")
    rng = StreamSplitter(seed).generator('sequential-splits')
    return _sequential_aggregated(sample, classifier_prior, theta_prior, mu_hard, n_max, rng)
