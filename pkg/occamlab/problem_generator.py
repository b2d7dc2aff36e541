"""
The adversarial learning problem and its two sample representations.

Each example is easy or hard. The good classifier c_0 errs with
probability mu on every example; every bad classifier is always right
on easy examples and errs independently with probability mu_hard on
hard ones, which occur with probability p_hard = mu_prime / mu_hard.

ExplicitSample stores one bit per (bad classifier, hard example).
AggregatedSample stores, for each dyadic prior block, how many of its
classifiers made h errors, which is all the learners look at.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binom

from occamlab.codelengths import LOG2_E, binary_entropy, logsumexp2
from occamlab.rng_streams import StreamSplitter

logger = logging.getLogger(__name__)

# Blocks up to this index have populations that fit in int64
EXACT_BLOCK_LIMIT = 62
BAND_MIN_EXPECTED = 1e4
POISSON_MIN_EXPECTED = 1e-12
ZERO_ERROR_TARGET = 1e3
TRUNCATION_WARN_PROB = 1e-6


@dataclass(frozen=True)
class ProblemSpec:
    """
    The triple (mu, mu_prime, mu_hard) defining the learning problem.

    Attributes:
        mu: True error of the good classifier c_0
        mu_prime: True error of every bad classifier
        mu_hard: Error rate of a bad classifier on a hard example
    """

    mu: float
    mu_prime: float
    mu_hard: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if not self.mu <= self.mu_prime <= 1.0:
            raise ValueError(
                f"mu_prime must satisfy mu <= mu_prime <= 1, got mu={self.mu}, "
                f"mu_prime={self.mu_prime}")
        if not 0.5 <= self.mu_hard <= 1.0:
            raise ValueError(f"mu_hard must lie in [0.5, 1], got {self.mu_hard}")
        if self.p_hard > 1.0 + 1e-12:
            raise ValueError(
                f"p_hard = mu_prime / mu_hard = {self.p_hard:.4f} exceeds 1")

    @property
    def p_hard(self):
        """Probability that an example is hard."""
        return self.mu_prime / self.mu_hard

    def in_regime(self, degree=1.0):
        """True iff mu_prime < H(mu) / (2 degree)."""
        return self.mu_prime < binary_entropy(self.mu) / (2.0 * degree)

    @property
    def inconsistency_regime(self):
        """True iff mu_prime < H(mu) / 2, where MAP and MDL provably fail."""
        return self.in_regime(1.0)

    def true_error(self, j):
        """
        True error of classifier j (closed form).

        Args:
            j: Classifier index >= 0

        Returns:
            mu for j = 0, mu_prime otherwise
        """
        if j < 0:
            raise ValueError(f"Classifier index must be non-negative, got {j}")
        return self.mu if j == 0 else self.mu_prime

    def predicted_score_bits(self, m):
        """
        Leading-order MAP scores at sample size m.

        Returns:
            Dict with the good-classifier score m H(mu) and the score of the
            first zero-error bad classifier, m p_hard (-log2(1 - mu_hard))
        """
        good = m * binary_entropy(self.mu)
        if self.mu_hard >= 1.0:
            bad = math.inf
        else:
            bad = -m * self.p_hard * math.log2(1.0 - self.mu_hard)
        return {'good_bits': good, 'bad_bits': bad, 'margin_bits': good - bad}

    def as_dict(self):
        return {'mu': self.mu, 'mu_prime': self.mu_prime, 'mu_hard': self.mu_hard,
                'p_hard': self.p_hard, 'inconsistency_regime': self.inconsistency_regime}


@dataclass
class ExplicitSample:
    """
    A sample with every bad-classifier error bit materialized.

    Attributes:
        labels: y_i in {0, 1}, length m
        hard_flags: True on hard examples, length m
        good_error_bits: True where c_0 disagrees with y_i, length m
        bad_error_bits: K x m_hard matrix, row j-1 holds classifier j's
            errors on the hard examples (easy columns are implicit zeros)
        is_test: Marks fresh test data, never used for fitting
    """

    labels: np.ndarray
    hard_flags: np.ndarray
    good_error_bits: np.ndarray
    bad_error_bits: np.ndarray
    is_test: bool = False

    @property
    def m(self):
        return int(self.labels.shape[0])

    @property
    def m_hard(self):
        return int(self.bad_error_bits.shape[1])

    @property
    def K(self):
        """Number of bad classifiers represented."""
        return int(self.bad_error_bits.shape[0])

    @property
    def hard_index(self):
        """Sample position of each hard column."""
        return np.flatnonzero(self.hard_flags)

    @property
    def good_error_count(self):
        return int(np.count_nonzero(self.good_error_bits))

    @property
    def bad_error_counts(self):
        """Error count of classifiers 1..K."""
        return self.bad_error_bits.sum(axis=1, dtype=np.int64)

    def error_counts(self):
        """Error counts of classifiers 0..K, indexed by classifier."""
        return np.concatenate(([self.good_error_count], self.bad_error_counts))

    def empirical_error(self, j):
        """Empirical error rate of classifier j."""
        if self.m == 0:
            return 0.0
        return float(self.error_counts()[j]) / self.m

    def min_error_per_block(self, prior):
        """
        Minimum error count within each complete prior block.

        Args:
            prior: Classifier prior with dyadic blocks

        Returns:
            Array indexed by block n - 1
        """
        counts = self.bad_error_counts
        n_blocks = (self.K + 1).bit_length() - 1
        mins = np.empty(n_blocks, dtype=np.int64)
        for n in range(1, n_blocks + 1):
            lo, hi = prior.block_range(n)
            mins[n - 1] = counts[lo - 1:hi].min()
        return mins

    def permuted(self, order):
        """Copy with bad-classifier rows reordered."""
        return replace(self, bad_error_bits=self.bad_error_bits[np.asarray(order)])


@dataclass
class AggregatedSample:
    """
    Block-count histograms of the bad-classifier error counts.

    Blocks n <= n_exact hold exact int64 counts. Larger blocks are
    stored implicitly: cell (n, h) is deterministic with log2 count
    (n - 1) + log2_pmf[h] once n >= band_start[h], Poisson-sampled
    (sparse arrays) below that, and skipped when its expectation is
    below POISSON_MIN_EXPECTED.
    """

    m: int
    m_hard: int
    good_error_count: int
    n_max: int
    log2_pmf: np.ndarray
    exact_counts: np.ndarray
    band_start: np.ndarray
    sparse_n: np.ndarray
    sparse_h: np.ndarray
    sparse_count: np.ndarray
    skipped_mass: float = 0.0
    p_no_zero_error: float = 0.0
    truncation_warning: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_exact(self):
        return int(self.exact_counts.shape[0])

    def block_cells(self, n):
        """
        Occupied cells of block n.

        Args:
            n: Block index, 1 <= n <= n_max

        Returns:
            Tuple of (h, log2_count) arrays sorted by error count h
        """
        if n < 1 or n > self.n_max:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        if n <= self.n_exact:
            row = self.exact_counts[n - 1]
            h = np.flatnonzero(row)
            return h, np.log2(row[h].astype(np.float64))
        band_h = np.flatnonzero(self.band_start <= n)
        band_log2 = (n - 1.0) + self.log2_pmf[band_h]
        lo = np.searchsorted(self.sparse_n, n, side='left')
        hi = np.searchsorted(self.sparse_n, n, side='right')
        if lo == hi:
            return band_h, band_log2
        h = np.concatenate((band_h, self.sparse_h[lo:hi]))
        log2_count = np.concatenate(
            (band_log2, np.log2(self.sparse_count[lo:hi].astype(np.float64))))
        order = np.argsort(h, kind='stable')
        return h[order], log2_count[order]

    def exact_count(self, n, h):
        """Integer count of cell (n, h), or None when only its log2 is known."""
        if n <= self.n_exact:
            return int(self.exact_counts[n - 1, h])
        h_cells, log2_count = self.block_cells(n)
        idx = np.searchsorted(h_cells, h)
        if idx < h_cells.size and h_cells[idx] == h:
            return int(round(2.0 ** log2_count[idx])) if log2_count[idx] < 62 else None
        return 0

    def block_total_log2(self, n):
        """log2 of the number of classifiers represented in block n."""
        return logsumexp2(self.block_cells(n)[1])

    def min_error_per_block(self):
        """Smallest occupied error count in each block 1..n_max."""
        if 'min_error' not in self._cache:
            mins = np.empty(self.n_max, dtype=np.int64)
            for n in range(1, self.n_max + 1):
                h, _ = self.block_cells(n)
                mins[n - 1] = h[0] if h.size else self.m_hard + 1
            self._cache['min_error'] = mins
        return self._cache['min_error']

    def first_zero_error_block(self):
        """Smallest block holding a zero-error classifier, or None."""
        zero = np.flatnonzero(self.min_error_per_block() == 0)
        return int(zero[0]) + 1 if zero.size else None


@dataclass(frozen=True)
class KOfM:
    """
    Proof-scale classifier count k(m) = 2 m eps^2 / (1 - mu_hard)^(m (p_hard + eps)).

    Attributes:
        m: Sample size
        epsilon: Chernoff slack m^(-1/4)
        log2_k: log2 k(m)
        ceil_log2_k: ceil(log2 k(m))
        k: ceil(k(m)) when it fits in a float, else None
    """

    m: int
    epsilon: float
    log2_k: float
    ceil_log2_k: int
    k: int = None

    @property
    def failure_bound(self):
        """a_m = 3 exp(-2 sqrt(m))."""
        return 3.0 * math.exp(-2.0 * math.sqrt(self.m))


class ProblemGenerator:
    """Draw samples from the learning problem defined by a ProblemSpec."""

    def __init__(self, spec):
        """
        Initialize generator.

        Args:
            spec: ProblemSpec
        """
        self.spec = spec

    def _draw(self, m, K, rng):
        spec = self.spec
        labels = rng.integers(0, 2, size=m, dtype=np.uint8)
        hard = rng.random(m) < spec.p_hard
        good_err = rng.random(m) < spec.mu
        m_hard = int(np.count_nonzero(hard))
        bad = rng.random((K, m_hard)) < spec.mu_hard
        return ExplicitSample(labels=labels, hard_flags=hard,
                              good_error_bits=good_err, bad_error_bits=bad)

    def sample_explicit(self, m, K, seed):
        """
        Draw a sample with K bad classifiers materialized.

        Args:
            m: Sample size >= 0
            K: Number of bad classifiers >= 1
            seed: Stream seed

        Returns:
            ExplicitSample
        """
        if m < 0:
            raise ValueError(f"Sample size must be non-negative, got {m}")
        if K < 1:
            raise ValueError(f"Need at least one bad classifier, got K={K}")
        return self._draw(m, K, StreamSplitter(seed).generator('explicit'))

    def sample_skeleton(self, m, seed):
        """Labels, hardness and c_0 errors only (no bad-classifier bits)."""
        return self._draw(m, 0, StreamSplitter(seed).generator('skeleton'))

    def fresh_test_batch(self, m_test, seed, K=0):
        """
        Draw held-out test examples.

        Bad-classifier outputs on test points are independent of the
        training record, so K defaults to 0 and callers draw them per group.

        Args:
            m_test: Number of test examples
            seed: Stream seed
            K: Number of bad classifiers to materialize

        Returns:
            ExplicitSample with is_test set
        """
        sample = self._draw(m_test, K, StreamSplitter(seed).generator('test'))
        return replace(sample, is_test=True)

    @staticmethod
    def default_n_max(log2_pmf_zero):
        """
        Smallest n with (2^n - 1) P(h = 0) > ZERO_ERROR_TARGET.

        Args:
            log2_pmf_zero: log2 probability that a bad classifier makes no error

        Returns:
            Block count
        """
        if not np.isfinite(log2_pmf_zero):
            return EXACT_BLOCK_LIMIT
        x = math.log2(ZERO_ERROR_TARGET) - log2_pmf_zero
        return max(1, int(math.floor(np.logaddexp2(x, 0.0))) + 1)

    def sample_aggregated(self, m, prior, n_max=None, seed=0):
        """
        Draw block-count histograms equal in distribution to the explicit sampler.

        Args:
            m: Sample size >= 0
            prior: Classifier prior with dyadic blocks
            n_max: Number of prior blocks to represent (default: enough for
                ZERO_ERROR_TARGET expected zero-error classifiers)
            seed: Stream seed

        Returns:
            AggregatedSample
        """
        if not prior.has_dyadic_blocks:
            raise ValueError(
                f"Aggregated sampling needs a prior with dyadic blocks, got '{prior.variant}'")
        if m < 0:
            raise ValueError(f"Sample size must be non-negative, got {m}")
        spec = self.spec
        rng = StreamSplitter(seed).generator('aggregated')
        m_hard = int(rng.binomial(m, spec.p_hard))
        good_errors = int(rng.binomial(m, spec.mu))

        h = np.arange(m_hard + 1)
        with np.errstate(divide='ignore'):
            log2_pmf = binom.logpmf(h, m_hard, spec.mu_hard) * LOG2_E
        if n_max is None:
            n_max = self.default_n_max(log2_pmf[0])
        n_max = int(n_max)
        if n_max < 1:
            raise ValueError(f"n_max must be at least 1, got {n_max}")

        n_exact = min(n_max, EXACT_BLOCK_LIMIT)
        pmf = np.exp2(log2_pmf)
        pmf /= pmf.sum()
        populations = np.left_shift(np.int64(1), np.arange(n_exact, dtype=np.int64))
        exact_counts = rng.multinomial(populations, pmf).astype(np.int64)
        exact_counts = exact_counts.reshape(n_exact, m_hard + 1)

        finite = np.isfinite(log2_pmf)
        never = n_max + 1
        band_start = np.full(m_hard + 1, never, dtype=np.int64)
        poisson_start = np.full(m_hard + 1, never, dtype=np.int64)
        band_start[finite] = np.ceil(
            1.0 + math.log2(BAND_MIN_EXPECTED) - log2_pmf[finite]).astype(np.int64)
        poisson_start[finite] = np.ceil(
            1.0 + math.log2(POISSON_MIN_EXPECTED) - log2_pmf[finite]).astype(np.int64)
        band_start = np.clip(band_start, n_exact + 1, never)
        poisson_start = np.clip(poisson_start, n_exact + 1, never)
        poisson_stop = np.minimum(band_start, never)

        lengths = np.maximum(poisson_stop - poisson_start, 0)
        cell_h = np.repeat(h, lengths)
        offsets = np.arange(cell_h.size) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        cell_n = np.repeat(poisson_start, lengths) + offsets
        expected = np.exp2(cell_n - 1.0 + log2_pmf[cell_h])
        drawn = rng.poisson(expected)
        keep = drawn > 0
        order = np.lexsort((cell_h[keep], cell_n[keep]))
        sparse_n = cell_n[keep][order]
        sparse_h = cell_h[keep][order]
        sparse_count = drawn[keep][order].astype(np.int64)

        skip_hi = np.minimum(poisson_start, never) - 1
        skipped = finite & (skip_hi > n_exact)
        skipped_mass = float(np.sum(
            np.exp2(skip_hi[skipped] + log2_pmf[skipped])
            - np.exp2(n_exact + log2_pmf[skipped])))

        if np.isfinite(log2_pmf[0]):
            log2_expected_zero = n_max + math.log2(1.0 - 2.0 ** -n_max) + log2_pmf[0]
            p_none = 0.0 if log2_expected_zero > 10 else math.exp(-2.0 ** log2_expected_zero)
        else:
            p_none = 1.0
        warn = p_none > TRUNCATION_WARN_PROB
        if warn:
            logger.warning(
                "n_max=%d leaves P(no zero-error classifier) = %.3g (m=%d, m_hard=%d)",
                n_max, p_none, m, m_hard)

        return AggregatedSample(
            m=m, m_hard=m_hard, good_error_count=good_errors, n_max=n_max,
            log2_pmf=log2_pmf, exact_counts=exact_counts, band_start=band_start,
            sparse_n=sparse_n, sparse_h=sparse_h, sparse_count=sparse_count,
            skipped_mass=skipped_mass, p_no_zero_error=p_none,
            truncation_warning=warn)

    def k_of_m(self, m):
        """
        Classifier-count threshold k(m), in the log domain.

        Args:
            m: Sample size >= 1

        Returns:
            KOfM
        """
        if m < 1:
            raise ValueError(f"k(m) needs m >= 1, got {m}")
        if self.spec.mu_hard >= 1.0:
            raise ValueError("k(m) is undefined for mu_hard = 1")
        eps = m ** -0.25
        log2_k = (math.log2(2.0 * m * eps * eps)
                  - m * (self.spec.p_hard + eps) * math.log2(1.0 - self.spec.mu_hard))
        k = math.ceil(2.0 ** log2_k) if log2_k < 1000 else None
        return KOfM(m=m, epsilon=eps, log2_k=log2_k,
                    ceil_log2_k=int(math.ceil(log2_k)), k=k)

    def true_error(self, j):
        return self.spec.true_error(j)

    def zero_error_event(self, sample, k_info):
        """
        Whether some bad classifier with index <= k(m) has no training error.

        Args:
            sample: ExplicitSample or AggregatedSample
            k_info: KOfM for the sample size

        Returns:
            bool
        """
        if isinstance(sample, AggregatedSample):
            block = sample.first_zero_error_block()
            if block is None:
                return False
            # block n starts at index 2^(n-1)
            return block - 1 <= k_info.log2_k
        zero = np.flatnonzero(sample.bad_error_counts == 0)
        if zero.size == 0:
            return False
        first_index = int(zero[0]) + 1
        return k_info.log2_k >= math.log2(first_index)
