"""
Statistical helpers for pass/fail checks: binomial confidence
intervals, 3-sigma proportion tests and two-sample chi-square tests.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2_contingency, norm

HARD = 'hard'
STATISTICAL = 'statistical'


@dataclass
class CheckResult:
    """
    One summary check of an experiment.

    Attributes:
        statistic: Name of the checked quantity
        value: Observed value
        threshold: Value it was compared against
        passed: Outcome
        kind: 'hard' (invariant, must hold) or 'statistical'
        m: Sample size the check refers to (0 when not applicable)
        algorithm: Learner the check refers to ('' when not applicable)
    """

    statistic: str
    value: float
    threshold: float
    passed: bool
    kind: str = STATISTICAL
    m: int = 0
    algorithm: str = ''


def wilson_interval(successes, n, confidence=0.95):
    """
    Wilson score interval for a binomial proportion.

    Args:
        successes: Number of successes
        n: Number of trials
        confidence: Two-sided confidence level

    Returns:
        Tuple of (low, high); (0, 1) when n = 0
    """
    if n == 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def binomial_sigma(p, n):
    """Standard deviation of a sample proportion."""
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else 0.0


def at_least(statistic, value, target, n, kind=STATISTICAL, m=0, algorithm=''):
    """Check value >= target - 3 sigma, sigma from Binomial(n, target)."""
    threshold = target - 3.0 * binomial_sigma(target, n)
    return CheckResult(statistic, value, threshold, value >= threshold, kind, m, algorithm)


def at_most(statistic, value, target, n, kind=STATISTICAL, m=0, algorithm=''):
    """Check value <= target + 3 sigma, sigma from Binomial(n, target)."""
    threshold = target + 3.0 * binomial_sigma(target, n)
    return CheckResult(statistic, value, threshold, value <= threshold, kind, m, algorithm)


def within_sigmas(observed, expected, n, sigmas=4.0):
    """Whether a sample proportion lies within `sigmas` binomial sigmas."""
    return abs(observed - expected) <= sigmas * binomial_sigma(expected, n)


def two_sample_chi2(first, second):
    """
    Chi-square test that two samples of discrete values share a distribution.

    Args:
        first: Array of observed categories
        second: Array of observed categories

    Returns:
        p-value (1.0 when only one category occurs)
    """
    first = np.asarray(first)
    second = np.asarray(second)
    categories = np.union1d(first, second)
    if categories.size < 2:
        return 1.0
    table = np.array([
        [np.count_nonzero(first == c) for c in categories],
        [np.count_nonzero(second == c) for c in categories],
    ])
    _, p_value, _, _ = chi2_contingency(table)
    return float(p_value)


def pooled_categories(values, min_count=5):
    """
    Merge rare trailing categories so chi-square expectations stay sane.

    Values are sorted; categories with fewer than min_count observations
    in the pooled data are merged into their lower neighbour.

    Args:
        values: Concatenation of both samples
        min_count: Minimum pooled count per category

    Returns:
        Array of category edges for np.digitize
    """
    uniq, counts = np.unique(np.asarray(values), return_counts=True)
    edges = []
    acc = 0
    for u, c in zip(uniq, counts):
        if not edges or acc >= min_count:
            edges.append(u)
            acc = 0
        acc += c
    if acc < min_count and len(edges) > 1:
        edges.pop()
    return np.asarray(edges)


def binned_two_sample_chi2(first, second, min_count=5):
    """Two-sample chi-square after pooling rare categories."""
    edges = pooled_categories(np.concatenate((first, second)), min_count)
    return two_sample_chi2(np.digitize(first, edges), np.digitize(second, edges))
