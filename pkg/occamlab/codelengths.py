"""
Shared information-theoretic quantities, all in bits.

Entropies, Bernoulli-noise likelihoods, binomial codelengths, the
evidence sandwich bounds and the per-group evidence table consumed by
the learners.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, entr, logsumexp, xlog1py, xlogy

LN2 = math.log(2.0)
LOG2_E = 1.0 / LN2


def binary_entropy(mu):
    """
    Binary entropy H(mu) in bits, with H(0) = H(1) = 0.

    Args:
        mu: Probability or array of probabilities in [0, 1]

    Returns:
        Entropy in bits (float for scalar input)
    """
    mu_arr = np.asarray(mu, dtype=np.float64)
    if np.any((mu_arr < 0.0) | (mu_arr > 1.0)):
        raise ValueError(f"Entropy argument must lie in [0, 1], got {mu}")
    h = (entr(mu_arr) + entr(1.0 - mu_arr)) * LOG2_E
    return float(h) if h.ndim == 0 else h


def log_likelihood(a, m, theta):
    """
    log2 of theta^a (1 - theta)^(m - a), using 0 * log 0 = 0.

    Args:
        a: Number of errors
        m: Number of examples
        theta: Noise rate in [0, 1]

    Returns:
        Log-likelihood in bits
    """
    a = np.asarray(a, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any((theta < 0.0) | (theta > 1.0)):
        raise ValueError(f"Noise rate must lie in [0, 1], got {theta}")
    ll = (xlogy(a, theta) + xlog1py(m - a, -theta)) * LOG2_E
    return float(ll) if np.ndim(ll) == 0 else ll


def _check_counts(a, m):
    a_arr = np.asarray(a)
    if np.any(a_arr < 0) or np.any(a_arr > m):
        raise ValueError(f"Error count must satisfy 0 <= a <= m (m={m}), got {a}")
    return a_arr


def profile_loglik(a, m):
    """Maximized log-likelihood -m H(a/m) in bits (0 when m = 0)."""
    a_arr = _check_counts(a, m)
    if m == 0:
        return 0.0 if a_arr.ndim == 0 else np.zeros(a_arr.shape)
    return -m * binary_entropy(a_arr / m)


def log2_binomial(m, a):
    """
    log2 C(m, a) through the Beta function.

    Args:
        m: Number of trials
        a: Number of successes (scalar or array)

    Returns:
        Codelength of the error positions in bits
    """
    a_arr = _check_counts(a, m).astype(np.float64)
    val = -(np.log(m + 1.0) + betaln(m - a_arr + 1.0, a_arr + 1.0)) * LOG2_E
    # C(m, 0) = C(m, m) = 1 exactly
    val = np.where((a_arr == 0) | (a_arr == m), 0.0, val)
    return float(val) if val.ndim == 0 else val


def two_part_codelength(prior, j, a, m):
    """
    Two-part MDL codelength -log2 P(c_j) + log2 C(m, a).

    Args:
        prior: ClassifierPrior
        j: Classifier index
        a: Empirical error count of c_j
        m: Sample size

    Returns:
        Codelength in bits
    """
    return -prior.log2_prior(j) + log2_binomial(m, a)


def stirling_gap(m, a):
    """|log2 C(m, a) - m H(a/m)|, the slack between MDL and profile scores."""
    return np.abs(log2_binomial(m, a) + profile_loglik(a, m))


def stirling_bound(m):
    """Upper bound 0.5 log2 m + 2 on stirling_gap for 1 <= a <= m - 1."""
    return 0.5 * math.log2(m) + 2.0


def lemma1_sandwich(a, m, gamma, alpha):
    """
    Bounds on -log2 of the theta-integrated likelihood.

    For alpha + 1/sqrt(m) < a/m <= 1/2 the evidence codelength lies
    between the profile codelength m H(a/m) and that codelength plus
    0.5 log2 m + log2(e) / (2 alpha (1 - alpha)) - log2 gamma.

    Args:
        a: Error count
        m: Sample size
        gamma: Density floor of the theta-prior, in (0, 1]
        alpha: Margin parameter, in (0, 1/2)

    Returns:
        Tuple of (lower, upper) in bits
    """
    if m <= 0:
        raise ValueError(f"Sample size must be positive, got {m}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"Density floor must lie in (0, 1], got {gamma}")
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"Margin alpha must lie in (0, 1/2), got {alpha}")
    rate = a / m
    if not (alpha + 1.0 / math.sqrt(m) < rate <= 0.5):
        raise ValueError(
            f"Evidence bounds need alpha + 1/sqrt(m) < a/m <= 1/2, "
            f"got a={a}, m={m}, alpha={alpha}"
        )
    lower = -profile_loglik(a, m)
    upper = (lower + 0.5 * math.log2(m)
             + 0.5 / (alpha * (1.0 - alpha)) * LOG2_E
             - math.log2(gamma))
    return float(lower), float(upper)


def smap_mdl_gap_bounds(m, theta_prior):
    """
    Range of sMAP score minus MDL score for any classifier.

    The gap equals log2(m+1) - log2 of a prior-weighted average of the
    theta-density, so it lies in [log2(m+1) - log2 p_max, log2(m+1) - log2 gamma].

    Returns:
        Tuple of (lower, upper) in bits; upper is inf when gamma = 0
    """
    base = math.log2(m + 1.0)
    lower = base - math.log2(theta_prior.max_density())
    upper = base - math.log2(theta_prior.gamma) if theta_prior.gamma > 0 else math.inf
    return lower, upper


def logsumexp2(values):
    """log2 of sum(2^values); -inf for empty input."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return -math.inf
    return float(logsumexp(values * LN2) * LOG2_E)


@dataclass
class EvidenceTable:
    """
    Per-group scores for a set of candidate classifier groups.

    A group is either one classifier or a cell of exchangeable classifiers
    sharing the same prior weight and error count. All arrays are aligned.

    Attributes:
        m: Sample size
        log2_prior: Per-member log2 P(c)
        log2_multiplicity: log2 of the number of classifiers in the group
        errors: Empirical error count per group
        profile_bits: -log2 max_theta likelihood, i.e. m H(a/m)
        evidence_bits: log2 of the theta-integrated likelihood
        codelength_bits: -log2 P(c) + log2 C(m, a)
    """

    m: int
    log2_prior: np.ndarray
    log2_multiplicity: np.ndarray
    errors: np.ndarray
    profile_bits: np.ndarray
    evidence_bits: np.ndarray
    codelength_bits: np.ndarray

    @classmethod
    def build(cls, log2_prior, log2_multiplicity, errors, m, theta_prior):
        """
        Compute every score for the given groups.

        Args:
            log2_prior: Array of per-member log2 prior weights
            log2_multiplicity: Array of log2 group sizes (0 for single classifiers)
            errors: Array of error counts
            m: Sample size
            theta_prior: ThetaPrior used for the evidence

        Returns:
            EvidenceTable
        """
        errors = np.asarray(errors, dtype=np.int64)
        log2_prior = np.asarray(log2_prior, dtype=np.float64)
        return cls(
            m=m,
            log2_prior=log2_prior,
            log2_multiplicity=np.asarray(log2_multiplicity, dtype=np.float64),
            errors=errors,
            profile_bits=-profile_loglik(errors, m) if errors.size else np.zeros(0),
            evidence_bits=theta_prior.log2_evidence(errors, m),
            codelength_bits=-log2_prior + (log2_binomial(m, errors) if errors.size else 0.0),
        )

    @property
    def log2_joint(self):
        """Unnormalized log2 posterior mass of each group."""
        return self.log2_multiplicity + self.log2_prior + self.evidence_bits

    @property
    def log2_normalizer(self):
        """log2 of the total posterior mass over all groups."""
        return logsumexp2(self.log2_joint)

    def posterior_weights(self, log2_normalizer=None):
        """Posterior weight of each group; sums to 1 over the table."""
        if log2_normalizer is None:
            log2_normalizer = self.log2_normalizer
        return np.exp2(self.log2_joint - log2_normalizer)
