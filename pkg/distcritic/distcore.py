#!/usr/bin/env python3

""" distcore.py
    Quantile-distribution mathematics: fraction sets, the quantile Huber
    loss, Wasserstein distances between discrete distributions, the
    W1-optimal quantile projection, the weighted mean of a quantile
    distribution, and the W1 gradient used to train learned fractions.

    Every function here is pure. Randomness only enters through an
    explicit `numpy.random.Generator`.
"""

import math
import operator

import numpy as np

from .common_base import dcValueError

__all__ = [
    'DiscreteDistribution',
    'FractionSet',
    'QuantileDistribution',
    'aligned_quantiles',
    'fixed_fractions',
    'fqf_mean',
    'fraction_gradient_array',
    'fraction_logit_gradient',
    'fractions_from_logit_array',
    'fractions_from_logits',
    'huber_quantile_loss',
    'inverse_cdf',
    'pairwise_qr_loss',
    'project_w1',
    'quantile_huber_pairwise',
    'quantile_loss_gradient',
    'sample_fraction_array',
    'sample_fractions',
    'w1_fraction_gradient',
    'wasserstein_p',
]

# Probability mass tolerance for discrete distributions.
PROB_TOL = 1e-12
# CDF levels closer than this are the same breakpoint.
CDF_TOL = 1e-12
# Smallest share of proposed fraction mass; keeps boundaries strictly
# increasing when the proposal logits saturate.
PROB_FLOOR = 1e-12


def _readonly(values):
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _check_count(n, name='n'):
    try:
        n = operator.index(n)
    except TypeError:
        raise dcValueError(
            '`{}` must be an integer, got: {!r}'.format(name, n)
        ) from None
    if n < 1:
        raise dcValueError('`{}` must be >= 1, got: {}'.format(name, n))
    return n


class FractionSet(object):
    """ Sorted quantile-fraction boundaries tau_0 = 0 < ... < tau_N = 1,
        with the midpoints (tau_i + tau_i+1) / 2 at which quantile values
        are estimated.
    """
    __slots__ = ('boundaries', 'midpoints')

    def __init__(self, boundaries):
        b = np.array(boundaries, dtype=np.float64)
        if b.ndim != 1 or b.size < 2:
            raise dcValueError(
                'FractionSet needs at least two boundaries, got: {!r}'.format(
                    boundaries,
                )
            )
        if not np.all(np.isfinite(b)):
            raise dcValueError('FractionSet boundaries must be finite.')
        if b[0] != 0.0 or b[-1] != 1.0:
            raise dcValueError(
                'FractionSet must start at 0 and end at 1, got: {} .. {}'
                .format(b[0], b[-1])
            )
        if np.any(np.diff(b) <= 0):
            raise dcValueError(
                'FractionSet boundaries must be strictly increasing.'
            )
        object.__setattr__(self, 'boundaries', _readonly(b))
        object.__setattr__(self, 'midpoints', _readonly((b[:-1] + b[1:]) / 2))

    def __setattr__(self, key, value):
        raise AttributeError('FractionSet is immutable.')

    def __eq__(self, other):
        if not isinstance(other, FractionSet):
            return NotImplemented
        return np.array_equal(self.boundaries, other.boundaries)

    def __hash__(self):
        return hash(self.boundaries.tobytes())

    def __len__(self):
        return self.n

    def __repr__(self):
        return 'FractionSet({})'.format(
            ', '.join('{:g}'.format(x) for x in self.boundaries)
        )

    @property
    def n(self):
        """ Number of atoms (midpoints). """
        return self.midpoints.size

    @property
    def widths(self):
        return np.diff(self.boundaries)


class QuantileDistribution(object):
    """ Quantile values theta_i estimating F^-1 at the midpoints of a
        FractionSet. Values are not required to be monotone.
    """
    __slots__ = ('fractions', 'values')

    def __init__(self, fractions, values):
        if not isinstance(fractions, FractionSet):
            fractions = FractionSet(fractions)
        vals = np.array(values, dtype=np.float64).reshape(-1)
        if vals.size != fractions.n:
            raise dcValueError(
                'Expected {} quantile values, got: {}'.format(
                    fractions.n,
                    vals.size,
                )
            )
        if not np.all(np.isfinite(vals)):
            raise dcValueError('Quantile values must be finite.')
        object.__setattr__(self, 'fractions', fractions)
        object.__setattr__(self, 'values', _readonly(vals))

    def __setattr__(self, key, value):
        raise AttributeError('QuantileDistribution is immutable.')

    def __eq__(self, other):
        if not isinstance(other, QuantileDistribution):
            return NotImplemented
        return (
            self.fractions == other.fractions and
            np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.fractions, self.values.tobytes()))

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return 'QuantileDistribution(n={}, values=[{}])'.format(
            len(self),
            ', '.join('{:g}'.format(x) for x in self.values),
        )

    def mean(self):
        return fqf_mean(self)

    def to_discrete(self):
        """ Atoms at the quantile values weighted by fraction widths. """
        return DiscreteDistribution.from_atoms(
            self.values,
            self.fractions.widths,
        )


class DiscreteDistribution(object):
    """ Finitely supported distribution. Atoms are sorted by value with
        positive probabilities summing to 1 (within PROB_TOL).
        Construct from unsorted or repeated atoms with `from_atoms()`.
    """
    __slots__ = ('values', 'probs', 'cdf')

    def __init__(self, atoms):
        pairs = [(float(v), float(p)) for v, p in atoms]
        if not pairs:
            raise dcValueError('DiscreteDistribution needs at least one atom.')
        values = np.array([v for v, _ in pairs])
        probs = np.array([p for _, p in pairs])
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(probs))):
            raise dcValueError('Atoms must be finite.')
        if np.any(probs <= 0):
            raise dcValueError('Atom probabilities must be positive.')
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise dcValueError(
                'Atom probabilities must sum to 1, got: {!r}'.format(total)
            )
        if np.any(np.diff(values) <= 0):
            raise dcValueError('Atoms must be sorted by distinct value.')
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        object.__setattr__(self, 'values', _readonly(values))
        object.__setattr__(self, 'probs', _readonly(probs))
        object.__setattr__(self, 'cdf', _readonly(cdf))

    def __setattr__(self, key, value):
        raise AttributeError('DiscreteDistribution is immutable.')

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values) and
            np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.values.tobytes(), self.probs.tobytes()))

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return 'DiscreteDistribution({})'.format(
            ', '.join(
                '{:g}: {:g}'.format(v, p)
                for v, p in zip(self.values, self.probs)
            )
        )

    @property
    def atoms(self):
        return list(zip(self.values.tolist(), self.probs.tolist()))

    @classmethod
    def from_atoms(cls, values, probs, tol=1e-12):
        """ Sort atoms, merge values closer than `tol`, drop zero masses and
            renormalize away rounding drift.
        """
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        probs = np.asarray(probs, dtype=np.float64).reshape(-1)
        if values.size != probs.size:
            raise dcValueError('Atom values and probabilities differ in size.')
        keep = probs > 0
        values, probs = values[keep], probs[keep]
        order = np.argsort(values, kind='stable')
        values, probs = values[order], probs[order]
        merged_values = []
        merged_probs = []
        for v, p in zip(values, probs):
            if merged_values and (v - merged_values[-1]) <= tol:
                merged_probs[-1] += p
            else:
                merged_values.append(v)
                merged_probs.append(p)
        total = math.fsum(merged_probs)
        if abs(total - 1.0) > 1e-9:
            raise dcValueError(
                'Atom probabilities must sum to 1, got: {!r}'.format(total)
            )
        return cls(zip(merged_values, [p / total for p in merged_probs]))

    @classmethod
    def point_mass(cls, value):
        return cls([(value, 1.0)])

    def mean(self):
        return float(np.dot(self.values, self.probs))

    def quantiles(self, omegas):
        """ Vectorized generalized inverse CDF. `omegas` must be in (0, 1]. """
        omegas = np.asarray(omegas, dtype=np.float64)
        idx = np.searchsorted(self.cdf, omegas - CDF_TOL, side='left')
        return self.values[np.minimum(idx, self.values.size - 1)]


def fixed_fractions(n):
    """ Equidistant fractions i/n, midpoints (2i + 1) / (2n). """
    n = _check_count(n)
    return FractionSet(np.arange(n + 1, dtype=np.float64) / n)


def _draw_interior(n, rng):
    """ n - 1 sorted uniform draws, redrawn until strictly inside (0, 1) and
        strictly increasing.
    """
    while True:
        interior = np.sort(rng.random(n - 1))
        if interior.size == 0:
            return interior
        if interior[0] > 0.0 and np.all(np.diff(interior) > 0):
            return interior


def sample_fractions(n, rng):
    """ Sorted uniform fractions. `rng` is a numpy Generator. """
    n = _check_count(n)
    interior = _draw_interior(n, rng)
    return FractionSet(np.concatenate(([0.0], interior, [1.0])))


def sample_fraction_array(n, rng, size):
    """ Batched `sample_fractions()`: returns a (size, n + 1) boundary array,
        one FractionSet per row.
    """
    n = _check_count(n)
    out = np.empty((size, n + 1), dtype=np.float64)
    out[:, 0] = 0.0
    out[:, -1] = 1.0
    if n == 1:
        return out
    interior = np.sort(rng.random((size, n - 1)), axis=1)
    bad = (interior[:, 0] <= 0.0) | np.any(np.diff(interior, axis=1) <= 0,
                                           axis=1)
    for row in np.flatnonzero(bad):
        interior[row] = _draw_interior(n, rng)
    out[:, 1:-1] = interior
    return out


def _softmax(logits):
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def fractions_from_logit_array(logits):
    """ Softmax, then cumulative sum, row-wise.
        Every probability is lifted to at least PROB_FLOOR (then
        renormalized), so any finite logits give valid boundaries.
        Returns (probs (B, N), boundaries (B, N + 1)); the last boundary of
        every row is exactly 1.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    n = logits.shape[1]
    probs = (_softmax(logits) + PROB_FLOOR) / (1.0 + n * PROB_FLOOR)
    boundaries = np.zeros((logits.shape[0], logits.shape[1] + 1))
    boundaries[:, 1:] = np.cumsum(probs, axis=1)
    boundaries[:, -1] = 1.0
    return probs, boundaries


def fractions_from_logits(logits):
    """ FractionSet from n proposal logits (softmax + cumulative sum). """
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if logits.size < 1:
        raise dcValueError('At least one logit is required.')
    if not np.all(np.isfinite(logits)):
        raise dcValueError('Logits must be finite, got: {!r}'.format(
            logits.tolist(),
        ))
    _, boundaries = fractions_from_logit_array(logits[None, :])
    return FractionSet(boundaries[0])


def _check_kappa(kappa, allow_zero=False):
    if (kappa < 0) or (kappa == 0 and not allow_zero) or \
            not math.isfinite(kappa):
        raise dcValueError('`kappa` must be > 0, got: {!r}'.format(kappa))


def _huber_quantile(u, tau, kappa):
    """ Elementwise rho_tau^kappa(u) and its derivative in u. """
    absu = np.abs(u)
    weight = np.abs(tau - (u < 0))
    quad = absu <= kappa
    loss = np.where(quad, 0.5 * u * u, kappa * (absu - 0.5 * kappa))
    dloss = np.where(quad, u, kappa * np.sign(u))
    return weight * loss / kappa, weight * dloss / kappa


def huber_quantile_loss(u, tau, kappa=1.0):
    """ rho_tau^kappa(u) = |tau - 1{u < 0}| * L_kappa(u) / kappa """
    _check_kappa(kappa)
    if not 0.0 <= tau <= 1.0:
        raise dcValueError('`tau` must be in [0, 1], got: {!r}'.format(tau))
    loss, _ = _huber_quantile(np.float64(u), tau, kappa)
    return float(loss)


def quantile_loss_gradient(u, tau, kappa=1.0):
    """ Derivative of rho_tau^kappa in u, elementwise, 0 at u = 0.
        kappa = 0 selects the pure quantile (pinball) subgradient
        |tau - 1{u < 0}| * sign(u).
    """
    _check_kappa(kappa, allow_zero=True)
    u = np.asarray(u, dtype=np.float64)
    if kappa == 0:
        return np.abs(tau - (u < 0)) * np.sign(u)
    _, grad = _huber_quantile(u, tau, kappa)
    return grad


def quantile_huber_pairwise(values, taus, targets, kappa=1.0):
    """ Batched pairwise quantile Huber loss.
        Arguments:
            values   : (B, N) predicted quantile values.
            taus     : (B, N) fractions the values were predicted at.
            targets  : (B, M) target samples, treated as constants.
            kappa    : Huber threshold.
        Returns (loss (B,), grad (B, N)) where
            loss_b = 1/M sum_j sum_i rho_{tau_bi}(y_bj - theta_bi).
    """
    _check_kappa(kappa)
    values = np.atleast_2d(values)
    taus = np.atleast_2d(taus)
    targets = np.atleast_2d(targets)
    m = targets.shape[1]
    if m < 1:
        raise dcValueError('At least one target value is required.')
    u = targets[:, None, :] - values[:, :, None]
    loss, dloss = _huber_quantile(u, taus[:, :, None], kappa)
    return loss.sum(axis=(1, 2)) / m, -dloss.sum(axis=2) / m


def pairwise_qr_loss(predicted, target_values, kappa=1.0):
    """ Quantile regression loss of one predicted distribution against M
        target samples, averaged over targets and summed over quantiles.
        Returns (loss, grad_values).
    """
    targets = np.asarray(target_values, dtype=np.float64).reshape(-1)
    if targets.size == 0:
        raise dcValueError('`target_values` must not be empty.')
    loss, grad = quantile_huber_pairwise(
        predicted.values[None, :],
        predicted.fractions.midpoints[None, :],
        targets[None, :],
        kappa,
    )
    return float(loss[0]), grad[0]


def inverse_cdf(d, omega):
    """ Generalized inverse inf{x : F(x) >= omega} for omega in (0, 1]. """
    if not (0.0 < omega <= 1.0):
        raise dcValueError(
            '`omega` must be in (0, 1], got: {!r}'.format(omega)
        )
    return float(d.quantiles(omega))


def aligned_quantiles(u, v):
    """ Merge the CDF breakpoints of two discrete distributions.
        Returns (widths, u_values, v_values): on each merged segment both
        inverse CDFs are constant.
    """
    levels = np.sort(np.concatenate(([0.0], u.cdf, v.cdf)))
    keep = np.concatenate(([True], np.diff(levels) > CDF_TOL))
    levels = levels[keep]
    levels[-1] = 1.0
    widths = np.diff(levels)
    mids = (levels[:-1] + levels[1:]) / 2
    return widths, u.quantiles(mids), v.quantiles(mids)


def wasserstein_p(u, v, p=1.0):
    """ Exact p-Wasserstein distance between discrete distributions. """
    if not p >= 1:
        raise dcValueError('`p` must be >= 1, got: {!r}'.format(p))
    widths, xs, ys = aligned_quantiles(u, v)
    total = math.fsum(widths * np.abs(xs - ys) ** p)
    return total ** (1.0 / p)


def project_w1(d, n):
    """ W1-optimal n-atom equal-weight approximation of `d`. """
    fractions = fixed_fractions(n)
    return QuantileDistribution(fractions, d.quantiles(fractions.midpoints))


def fqf_mean(q):
    """ sum_i (tau_i+1 - tau_i) * theta_i """
    return float(np.dot(q.fractions.widths, q.values))


def fraction_gradient_array(q_boundaries, q_midpoints):
    """ Batched dW1/dtau_i = 2 F(tau_i) - F(tau^_i) - F(tau^_i-1).
        Arguments:
            q_boundaries : (B, N - 1) quantile values at interior boundaries.
            q_midpoints  : (B, N) quantile values at the midpoints.
    """
    q_midpoints = np.atleast_2d(q_midpoints)
    q_boundaries = np.atleast_2d(q_boundaries)
    return 2 * q_boundaries - q_midpoints[:, 1:] - q_midpoints[:, :-1]


def fraction_logit_gradient(probs, grad_boundaries):
    """ Chain dW1/dtau (B, N - 1) back through cumulative sum and softmax
        to the (B, N) proposal logits.
    """
    probs = np.atleast_2d(probs)
    grad_boundaries = np.atleast_2d(grad_boundaries)
    dprobs = np.zeros_like(probs)
    if grad_boundaries.shape[1]:
        # tau_i = sum_{k < i} p_k, so dp_k collects every g_i with i > k.
        rev = np.cumsum(grad_boundaries[:, ::-1], axis=1)[:, ::-1]
        dprobs[:, :-1] = rev
    inner = np.sum(probs * dprobs, axis=1, keepdims=True)
    return probs * (dprobs - inner)


def w1_fraction_gradient(quantile_fn, fractions):
    """ dW1/dtau_i for every interior boundary of `fractions`, where
        `quantile_fn` is the quantile function being approximated.
    """
    if fractions.n < 2:
        return np.zeros(0)
    interior = fractions.boundaries[1:-1]
    q_b = np.array([quantile_fn(float(t)) for t in interior])
    q_m = np.array([quantile_fn(float(t)) for t in fractions.midpoints])
    return fraction_gradient_array(q_b[None, :], q_m[None, :])[0]
