"""
Priors over classifier indices and over noise rates.

Classifier priors are heavy-tailed distributions on the indices
0, 1, 2, ... (index 0 is the good classifier). Block priors group the
indices {2^(n-1), ..., 2^n - 1} into block n so that exchangeable
classifiers can be simulated by histogram. Theta priors are Beta
densities mixed with a uniform floor, or a point mass.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import betaln, xlog1py, xlogy, zeta
from scipy.stats import beta as beta_dist

from occamlab.codelengths import LN2, LOG2_E

HEAD_SUM_CUTOFF = 100_000


class ClassifierPrior:
    """Base class for priors over classifier indices."""

    variant = None
    has_dyadic_blocks = False

    def log2_prior(self, j):
        """Exact log2 P(c_j) for a (possibly very large) integer index."""
        raise NotImplementedError

    def log2_prior_many(self, j):
        """Vectorized log2 P(c_j) over an integer array."""
        return np.array([self.log2_prior(int(k)) for k in np.ravel(j)]).reshape(np.shape(j))

    def tail_mass(self, J):
        """Prior mass of all indices j > J."""
        raise NotImplementedError

    def block_index(self, j):
        """Block containing classifier j (block 0 is c_0)."""
        return int(j)

    def block_range(self, n):
        """First and last classifier index of block n."""
        return n, n

    def describe(self):
        """Parameters echoed into run metadata."""
        return {'variant': self.variant}


class DyadicBlockPrior(ClassifierPrior):
    """
    P(c_0) = 1/2 and block n >= 1 gets mass 1/(2 n (n+1)), spread evenly
    over its 2^(n-1) members.
    """

    variant = 'dyadic'
    has_dyadic_blocks = True

    def log2_block_member(self, n):
        """Per-member log2 prior of block n (n may be an array, n >= 1)."""
        n = np.asarray(n, dtype=np.float64)
        return -1.0 - np.log2(n * (n + 1.0)) - (n - 1.0)

    def log2_block_mass(self, n):
        """log2 of the total prior mass of block n >= 1."""
        n = np.asarray(n, dtype=np.float64)
        return -1.0 - np.log2(n * (n + 1.0))

    def log2_prior(self, j):
        j = int(j)
        if j < 0:
            raise ValueError(f"Classifier index must be non-negative, got {j}")
        if j == 0:
            return -1.0
        return float(self.log2_block_member(j.bit_length()))

    def log2_prior_many(self, j):
        j = np.asarray(j, dtype=np.int64)
        out = np.full(j.shape, -1.0)
        pos = j > 0
        if np.any(pos):
            # frexp exponent equals bit_length for indices below 2^53
            n = np.frexp(j[pos].astype(np.float64))[1]
            out[pos] = self.log2_block_member(n)
        return out

    def tail_mass(self, J):
        J = int(J)
        if J < 0:
            return 1.0
        if J == 0:
            return 0.5
        n = J.bit_length()
        remaining_in_block = (1 << n) - 1 - J
        return (remaining_in_block * 2.0 ** float(self.log2_block_member(n))
                + 0.5 / (n + 1.0))

    def block_index(self, j):
        return int(j).bit_length()

    def block_range(self, n):
        if n == 0:
            return 0, 0
        return 1 << (n - 1), (1 << n) - 1


class BlockPolynomialPrior(DyadicBlockPrior):
    """
    Dyadic blocks whose masses decay geometrically, so that
    -log2 P(c_k) = d log2 k + O(1).

    Block n >= 1 carries mass (1/2)(1 - 2^(1-d)) 2^(-(d-1)(n-1)).
    """

    variant = 'block-polynomial'

    def __init__(self, degree=2.0):
        """
        Args:
            degree: Tail degree d, must exceed 1
        """
        if degree <= 1.0:
            raise ValueError(f"Block polynomial prior needs degree > 1, got {degree}")
        self.degree = float(degree)
        self._log2_norm = math.log2(1.0 - 2.0 ** (1.0 - self.degree))

    def log2_block_mass(self, n):
        n = np.asarray(n, dtype=np.float64)
        return -1.0 + self._log2_norm - (self.degree - 1.0) * (n - 1.0)

    def log2_block_member(self, n):
        n = np.asarray(n, dtype=np.float64)
        return -1.0 + self._log2_norm - self.degree * (n - 1.0)

    def tail_mass(self, J):
        J = int(J)
        if J < 0:
            return 1.0
        if J == 0:
            return 0.5
        n = J.bit_length()
        remaining_in_block = (1 << n) - 1 - J
        ratio = 2.0 ** (1.0 - self.degree)
        return (remaining_in_block * 2.0 ** float(self.log2_block_member(n))
                + 0.5 * ratio ** n)

    def describe(self):
        return {'variant': self.variant, 'degree': self.degree}


def log_star(x):
    """
    Iterated logarithm log2 x + log2 log2 x + ..., positive terms only.

    Args:
        x: Integer or float >= 1 (Python ints of any size are accepted)

    Returns:
        log*(x) in bits
    """
    total = 0.0
    v = math.log2(x)
    while v > 0.0:
        total += v
        v = math.log2(v)
    return total


def _log_star_array(x):
    v = np.log2(np.asarray(x, dtype=np.float64))
    total = np.zeros_like(v)
    active = v > 0.0
    while np.any(active):
        total[active] += v[active]
        nxt = np.zeros_like(v)
        nxt[active] = np.log2(v[active])
        v = nxt
        active &= v > 0.0
    return total


def _rissanen_tail(x):
    """
    Sum over integers y > x of 2^(-log* y), by Euler-Maclaurin.

    While the terms L_1..L_k of log* are positive, 2^(-log* y) dy equals
    (ln 2)^k dL_k, so the integral from x to infinity is closed form.
    """
    iterates = []
    v = math.log2(x)
    while v > 0.0:
        iterates.append(v)
        v = math.log2(v)
    k = len(iterates)
    integral = LN2 ** k * (1.0 - iterates[-1]) + LN2 ** (k + 1) / (1.0 - LN2)
    f = 2.0 ** (-sum(iterates))
    slope_terms = 0.0
    prod = 1.0
    for i in range(1, k + 1):
        slope_terms += 1.0 / (x * LN2 ** i * prod)
        prod *= iterates[i - 1]
    derivative = -f * LN2 * slope_terms
    return integral - f / 2.0 - derivative / 12.0


@lru_cache(maxsize=None)
def rissanen_constant():
    """Normalizer sum_{x >= 1} 2^(-log* x), approximately 2.865064."""
    xs = np.arange(1, HEAD_SUM_CUTOFF + 1, dtype=np.float64)
    head = math.fsum(np.exp2(-_log_star_array(xs)))
    return head + _rissanen_tail(HEAD_SUM_CUTOFF)


class UniversalIntegerPrior(ClassifierPrior):
    """Rissanen's universal prior P(c_j) = 2^(-log*(j+1)) / c."""

    variant = 'universal'

    def __init__(self):
        self._log2_c = math.log2(rissanen_constant())

    def log2_prior(self, j):
        j = int(j)
        if j < 0:
            raise ValueError(f"Classifier index must be non-negative, got {j}")
        return -log_star(j + 1) - self._log2_c

    def log2_prior_many(self, j):
        return -_log_star_array(np.asarray(j, dtype=np.float64) + 1.0) - self._log2_c

    def tail_mass(self, J):
        J = int(J)
        if J + 1 < HEAD_SUM_CUTOFF:
            head = math.fsum(np.exp2(self.log2_prior_many(np.arange(J + 1))))
            return 1.0 - head
        return _rissanen_tail(J + 1) / rissanen_constant()

    def describe(self):
        return {'variant': self.variant, 'normalizer': rissanen_constant()}


def _log_tail_term(x):
    return 1.0 / (x * math.log(x + 1.0) ** 2)


def _log_tail_sum_beyond(x):
    """Sum over integers y > x of 1/(y ln^2(y+1)), by Euler-Maclaurin."""
    integral, _ = integrate.quad(
        lambda t: 1.0 / (t + math.log1p(math.exp(-t))) ** 2,
        math.log(x), np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    f = _log_tail_term(x)
    derivative = -f * (1.0 / x + 2.0 / ((x + 1.0) * math.log(x + 1.0)))
    return integral - f / 2.0 - derivative / 12.0


@lru_cache(maxsize=None)
def log_tail_constant():
    """Normalizer sum_{x >= 1} 1/(x ln^2(x+1)) of the degree-1 tail prior."""
    xs = np.arange(1, HEAD_SUM_CUTOFF + 1, dtype=np.float64)
    head = math.fsum(1.0 / (xs * np.log(xs + 1.0) ** 2))
    return head + _log_tail_sum_beyond(HEAD_SUM_CUTOFF)


class PolynomialTailPrior(ClassifierPrior):
    """
    P(c_j) = (j+1)^(-d) / zeta(d) for d > 1.

    For d = 1 the tail 1/((j+1) ln^2(j+2)) is used instead; its normalizer
    is computed numerically, so this variant is approximate.
    """

    variant = 'polynomial'

    def __init__(self, degree=2.0):
        """
        Args:
            degree: Tail degree d >= 1
        """
        if degree < 1.0:
            raise ValueError(f"Polynomial tail prior needs degree >= 1, got {degree}")
        self.degree = float(degree)
        if self.degree == 1.0:
            self._log2_norm = math.log2(log_tail_constant())
        else:
            self._log2_norm = math.log2(zeta(self.degree))

    @property
    def approximate(self):
        """True when the normalizer is a numerical estimate (d = 1)."""
        return self.degree == 1.0

    def log2_prior(self, j):
        j = int(j)
        if j < 0:
            raise ValueError(f"Classifier index must be non-negative, got {j}")
        if self.approximate:
            return (-math.log2(j + 1) - 2.0 * math.log2(math.log(j + 2))
                    - self._log2_norm)
        return -self.degree * math.log2(j + 1) - self._log2_norm

    def log2_prior_many(self, j):
        x = np.asarray(j, dtype=np.float64) + 1.0
        if self.approximate:
            return -np.log2(x) - 2.0 * np.log2(np.log(x + 1.0)) - self._log2_norm
        return -self.degree * np.log2(x) - self._log2_norm

    def tail_mass(self, J):
        J = int(J)
        if self.approximate:
            if J + 1 < HEAD_SUM_CUTOFF:
                return 1.0 - math.fsum(np.exp2(self.log2_prior_many(np.arange(J + 1))))
            return _log_tail_sum_beyond(J + 1) / log_tail_constant()
        return float(zeta(self.degree, J + 2) / zeta(self.degree))

    def describe(self):
        info = {'variant': self.variant, 'degree': self.degree}
        if self.approximate:
            info['normalizer'] = log_tail_constant()
            info['note'] = 'degree-1 tail uses a numerically computed normalizer'
        return info


CLASSIFIER_PRIORS = {
    'dyadic': DyadicBlockPrior,
    'universal': UniversalIntegerPrior,
    'polynomial': PolynomialTailPrior,
    'block-polynomial': BlockPolynomialPrior,
}


def make_classifier_prior(name, degree=None):
    """
    Build a classifier prior by config name.

    Args:
        name: One of 'dyadic', 'universal', 'polynomial', 'block-polynomial'
        degree: Tail degree for the polynomial variants (default 2)

    Returns:
        ClassifierPrior instance
    """
    if name not in CLASSIFIER_PRIORS:
        raise ValueError(
            f"Unknown classifier prior: {name}. "
            f"Supported: {', '.join(CLASSIFIER_PRIORS)}"
        )
    cls = CLASSIFIER_PRIORS[name]
    if name in ('polynomial', 'block-polynomial'):
        return cls(2.0 if degree is None else degree)
    return cls()


@dataclass(frozen=True)
class ThetaPrior:
    """
    Prior density on the noise rate theta.

    p(theta) = (1 - floor) Beta(alpha, beta)(theta) + floor, or a point
    mass at `point` when it is set.
    """

    alpha: float = 1.0
    beta: float = 1.0
    floor: float = 0.0
    point: float = None

    def __post_init__(self):
        if self.point is not None:
            if not 0.0 < self.point < 1.0:
                raise ValueError(f"Point-mass theta must lie in (0, 1), got {self.point}")
            return
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(
                f"Beta shape parameters must be positive, got ({self.alpha}, {self.beta})")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError(f"Floor weight must lie in [0, 1), got {self.floor}")

    @classmethod
    def uniform(cls):
        return cls()

    @classmethod
    def point_mass(cls, theta):
        return cls(point=theta)

    @property
    def is_uniform(self):
        return self.point is None and self.alpha == 1.0 and self.beta == 1.0

    @property
    def gamma(self):
        """Lower bound on the density; 0 when none exists."""
        if self.point is not None:
            return 0.0
        if self.is_uniform:
            return 1.0
        return self.floor

    def max_density(self):
        """Supremum of the density (inf for point masses and U-shaped Betas)."""
        if self.point is not None or self.alpha < 1.0 or self.beta < 1.0:
            return math.inf
        if self.is_uniform:
            return 1.0
        if self.alpha == 1.0 or self.beta == 1.0:
            peak = max(self.alpha, self.beta)
        else:
            mode = (self.alpha - 1.0) / (self.alpha + self.beta - 2.0)
            peak = beta_dist.pdf(mode, self.alpha, self.beta)
        return (1.0 - self.floor) * peak + self.floor

    def log2_density(self, theta):
        """log2 p(theta); 0 everywhere for the uniform prior."""
        if self.point is not None:
            raise ValueError("A point-mass theta prior has no density")
        theta = np.asarray(theta, dtype=np.float64)
        if self.is_uniform:
            out = np.zeros(theta.shape)
        else:
            dens = (1.0 - self.floor) * beta_dist.pdf(theta, self.alpha, self.beta) + self.floor
            with np.errstate(divide='ignore'):
                out = np.log2(dens)
        return float(out) if out.ndim == 0 else out

    def _component_logs(self, a, m):
        """Natural-log evidence of the Beta part and of the uniform part."""
        beta_part = betaln(self.alpha + a, self.beta + m - a) - betaln(self.alpha, self.beta)
        uniform_part = betaln(a + 1.0, m - a + 1.0)
        return beta_part, uniform_part

    def log2_evidence(self, a, m):
        """
        log2 of the integral of theta^a (1-theta)^(m-a) p(theta).

        Args:
            a: Error count (scalar or array), 0 <= a <= m
            m: Sample size

        Returns:
            Log evidence in bits
        """
        a_arr = np.asarray(a, dtype=np.float64)
        if np.any(a_arr < 0) or np.any(a_arr > m):
            raise ValueError(f"Error count must satisfy 0 <= a <= m (m={m}), got {a}")
        if self.point is not None:
            out = (xlogy(a_arr, self.point) + xlog1py(m - a_arr, -self.point)) * LOG2_E
        else:
            beta_part, uniform_part = self._component_logs(a_arr, m)
            if self.floor == 0.0 or self.is_uniform:
                out = beta_part * LOG2_E
            else:
                out = np.logaddexp(math.log1p(-self.floor) + beta_part,
                                   math.log(self.floor) + uniform_part) * LOG2_E
        return float(out) if out.ndim == 0 else out

    def posterior_mean(self, a, m):
        """
        Posterior mean of theta after a errors in m trials.

        Args:
            a: Error count (scalar or array)
            m: Sample size

        Returns:
            E[theta | a, m]
        """
        a_arr = np.asarray(a, dtype=np.float64)
        if np.any(a_arr < 0) or np.any(a_arr > m):
            raise ValueError(f"Error count must satisfy 0 <= a <= m (m={m}), got {a}")
        if self.point is not None:
            out = np.full(a_arr.shape, self.point)
        else:
            beta_mean = (self.alpha + a_arr) / (self.alpha + self.beta + m)
            if self.floor == 0.0 or self.is_uniform:
                out = beta_mean
            else:
                beta_part, uniform_part = self._component_logs(a_arr, m)
                lw_beta = math.log1p(-self.floor) + beta_part
                lw_unif = math.log(self.floor) + uniform_part
                w_beta = 1.0 / (1.0 + np.exp(lw_unif - lw_beta))
                out = w_beta * beta_mean + (1.0 - w_beta) * (a_arr + 1.0) / (m + 2.0)
        return float(out) if out.ndim == 0 else out

    def describe(self):
        if self.point is not None:
            return {'point': self.point}
        return {'alpha': self.alpha, 'beta': self.beta, 'floor': self.floor,
                'gamma': self.gamma}
