"""
Candidate classifier groups for the learners.

A pool walks a sample in increasing classifier-index order and yields
chunks of groups. A group is one explicit classifier, or one aggregated
cell (block n, error count h) of exchangeable classifiers.
"""

from dataclasses import dataclass

import numpy as np

from occamlab.problem_generator import AggregatedSample

MAX_EXACT_LOG2 = 62.0


@dataclass
class GroupChunk:
    """
    Aligned arrays describing a run of candidate groups.

    Attributes:
        log2_prior: Per-member log2 P(c)
        log2_multiplicity: log2 of the group size
        errors: Training error count shared by the group
        index: Classifier index (explicit groups) or -1 (cells)
        block: Prior block of the group (0 for c_0)
        count: Group size when it fits in int64, else -1
    """

    log2_prior: np.ndarray
    log2_multiplicity: np.ndarray
    errors: np.ndarray
    index: np.ndarray
    block: np.ndarray
    count: np.ndarray

    def __len__(self):
        return int(self.errors.shape[0])

    @property
    def is_good(self):
        return self.block == 0

    def describe(self, i):
        """Human-readable descriptor of group i."""
        if self.block[i] == 0:
            return 'c0'
        if self.index[i] >= 0:
            return f'c{int(self.index[i])}'
        return f'block{int(self.block[i])}:h{int(self.errors[i])}'


def _good_chunk(prior, good_errors):
    return GroupChunk(
        log2_prior=np.array([prior.log2_prior(0)]),
        log2_multiplicity=np.zeros(1),
        errors=np.array([good_errors], dtype=np.int64),
        index=np.zeros(1, dtype=np.int64),
        block=np.zeros(1, dtype=np.int64),
        count=np.ones(1, dtype=np.int64),
    )


class CandidatePool:
    """Iterate the classifier groups represented by a sample."""

    def __init__(self, sample, prior):
        """
        Initialize pool.

        Args:
            sample: ExplicitSample or AggregatedSample
            prior: ClassifierPrior matching the sample's indexing
        """
        if isinstance(sample, AggregatedSample) and not prior.has_dyadic_blocks:
            raise ValueError("Aggregated samples need a prior with dyadic blocks")
        self.sample = sample
        self.prior = prior

    @property
    def m(self):
        return self.sample.m

    @property
    def aggregated(self):
        return isinstance(self.sample, AggregatedSample)

    def good_chunk(self):
        """Chunk holding c_0 alone."""
        return _good_chunk(self.prior, self.sample.good_error_count)

    def chunks(self):
        """Yield GroupChunk objects in increasing classifier-index order."""
        if self.aggregated:
            yield self.good_chunk()
            yield from self._aggregated_chunks()
        else:
            yield self._explicit_chunk()

    def _explicit_chunk(self):
        sample = self.sample
        K = sample.K
        index = np.arange(K + 1, dtype=np.int64)
        if self.prior.has_dyadic_blocks:
            block = np.zeros(K + 1, dtype=np.int64)
            block[1:] = np.frexp(index[1:].astype(np.float64))[1]
        else:
            block = index.copy()
        return GroupChunk(
            log2_prior=self.prior.log2_prior_many(index),
            log2_multiplicity=np.zeros(K + 1),
            errors=sample.error_counts().astype(np.int64),
            index=index,
            block=block,
            count=np.ones(K + 1, dtype=np.int64),
        )

    def _aggregated_chunks(self):
        sample = self.sample
        for n in range(1, sample.n_max + 1):
            h, log2_count = sample.block_cells(n)
            if h.size == 0:
                continue
            if n <= sample.n_exact:
                count = sample.exact_counts[n - 1, h].astype(np.int64)
            else:
                count = np.full(h.size, -1, dtype=np.int64)
                small = log2_count < MAX_EXACT_LOG2
                count[small] = np.rint(np.exp2(log2_count[small])).astype(np.int64)
            yield GroupChunk(
                log2_prior=np.full(h.size, float(self.prior.log2_block_member(n))),
                log2_multiplicity=log2_count,
                errors=h.astype(np.int64),
                index=np.full(h.size, -1, dtype=np.int64),
                block=np.full(h.size, n, dtype=np.int64),
                count=count,
            )
