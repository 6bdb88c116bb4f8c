#!/usr/bin/env python3

""" critics.py
    ...Distributional critics mapping (state, action) to quantile values.

    Three fraction strategies share one topology:
        fixed    : equidistant fractions, the head emits all N values at once.
        sampled  : uniformly sampled fractions, cosine-embedded and combined
                   with the trunk features by a Hadamard product; the head
                   emits one value per fraction.
        learned  : like sampled, but a single linear fraction proposal layer
                   on the trunk features picks the fractions.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .common_base import (
    dcStateError,
    dcValueError,
)
from .distcore import (
    FractionSet,
    QuantileDistribution,
    fixed_fractions,
    fraction_gradient_array,
    fraction_logit_gradient,
    fractions_from_logit_array,
    quantile_huber_pairwise,
    sample_fraction_array,
)
from .nn import (
    ACTIVATIONS,
    CosineEmbedding,
    Mlp,
    OptimizerState,
    hadamard_combine,
    load_arrays,
    save_arrays,
)

__all__ = [
    'CriticConfig',
    'DistCritic',
    'STRATEGIES',
    'critic_td_loss',
    'fpn_update',
    'predict',
]

log = logging.getLogger(__name__)

STRATEGIES = ('fixed', 'sampled', 'learned')


@dataclass
class CriticConfig(object):
    strategy: str = 'fixed'
    n_atoms: int = 7
    kappa: float = 1.0
    hidden: tuple = field(default=(256, 256))
    activation: str = 'tanh'
    n_cos: int = 64
    # Width of the cosine embedding. It must match the trunk features, so
    # when set it replaces the first hidden width.
    embed_dim: int = None

    def __post_init__(self):
        self.strategy = str(self.strategy).lower()
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.strategy not in STRATEGIES:
            raise dcValueError('Unknown fraction strategy: {!r}'.format(
                self.strategy,
            ))
        if int(self.n_atoms) < 1:
            raise dcValueError('`n_atoms` must be >= 1, got: {}'.format(
                self.n_atoms,
            ))
        self.n_atoms = int(self.n_atoms)
        if not self.kappa > 0:
            raise dcValueError('`kappa` must be > 0, got: {}'.format(
                self.kappa,
            ))
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise dcValueError('Bad hidden widths: {!r}'.format(self.hidden))
        if self.activation not in ACTIVATIONS:
            raise dcValueError('Unknown activation: {!r}'.format(
                self.activation,
            ))
        if self.n_cos < 1:
            raise dcValueError('`n_cos` must be >= 1.')

    @property
    def trunk_width(self):
        return int(self.embed_dim or self.hidden[0])


class DistCritic(object):
    """ Distributional critic Z(s, a) over one of the three fraction
        strategies. The trunk consumes the concatenated (state, action);
        fractions are combined after its first hidden layer.
    """
    def __init__(self, config, obs_dim, act_dim, rng, fpn_lr=2e-6):
        """ Arguments:
                config   : CriticConfig.
                obs_dim  : State width.
                act_dim  : Action width.
                rng      : numpy Generator for weight init.
                fpn_lr   : RMSprop learning rate of the fraction proposal
                           layer (learned strategy only).
        """
        self.config = config
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        width = config.trunk_width
        act = config.activation
        rest = list(config.hidden[1:])
        self.trunk = Mlp([self.obs_dim + self.act_dim, width], [act], rng)
        self.embedding = None
        self.fpn = None
        self.fpn_optimizer = None
        if config.strategy == 'fixed':
            self.head = Mlp(
                [width] + rest + [config.n_atoms],
                [act] * len(rest) + ['identity'],
                rng,
            )
        else:
            self.embedding = CosineEmbedding(width, config.n_cos, rng)
            self.head = Mlp(
                [width] + rest + [1],
                [act] * len(rest) + ['identity'],
                rng,
            )
        if config.strategy == 'learned':
            self.fpn = Mlp([width, config.n_atoms], ['identity'], rng)
            self.fpn_optimizer = OptimizerState(
                self.fpn.parameters(),
                variant='rmsprop',
                lr=fpn_lr,
            )
        self._fixed = fixed_fractions(config.n_atoms).boundaries
        self._cache = None

    def __repr__(self):
        return 'DistCritic({}, n_atoms={}, trunk={!r}, head={!r})'.format(
            self.strategy,
            self.n_atoms,
            self.trunk,
            self.head,
        )

    @property
    def n_atoms(self):
        return self.config.n_atoms

    @property
    def strategy(self):
        return self.config.strategy

    def _check_boundaries(self, boundaries, batch):
        if isinstance(boundaries, FractionSet):
            boundaries = boundaries.boundaries
        b = np.asarray(boundaries, dtype=np.float64)
        if b.ndim == 1:
            b = np.broadcast_to(b, (batch, b.size))
        if b.shape != (batch, self.n_atoms + 1):
            raise dcValueError(
                'Expected fractions for {} atoms, got shape: {}'.format(
                    self.n_atoms,
                    b.shape,
                )
            )
        if self.strategy == 'fixed' and \
                not np.allclose(b, self._fixed, rtol=0, atol=1e-12):
            raise dcValueError(
                'The fixed strategy only accepts its equidistant fractions.'
            )
        return b

    def _head_at(self, features, taus):
        """ Head values at fractions `taus` (B, K); returns (values, emb). """
        batch, k = taus.shape
        emb = self.embedding.forward(taus.reshape(-1))
        emb = emb.reshape(batch, k, -1)
        combined = hadamard_combine(
            np.broadcast_to(features[:, None, :], emb.shape),
            emb,
        )
        out = self.head.forward(combined.reshape(batch * k, -1))
        return out.reshape(batch, k), emb

    def _inputs(self, states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[1] != self.obs_dim or actions.shape[1] != self.act_dim:
            raise dcValueError(
                'Expected state/action widths {}/{}, got: {}/{}'.format(
                    self.obs_dim,
                    self.act_dim,
                    states.shape[1],
                    actions.shape[1],
                )
            )
        if states.shape[0] != actions.shape[0]:
            raise dcValueError('State and action batches differ in size.')
        return np.concatenate([states, actions], axis=1)

    def backward(self, grad_values):
        """ Reverse pass for the last forward().
            Returns (grads aligned with parameters(), input gradient over
            the concatenated (state, action)).
        """
        if self._cache is None:
            raise dcStateError('backward() called before forward().')
        batch, emb, features = self._cache
        grad_values = np.atleast_2d(grad_values)
        if self.strategy == 'fixed':
            head_grads, dfeatures = self.head.backward(grad_values)
            emb_grads = []
        else:
            k = grad_values.shape[1]
            head_grads, dcombined = self.head.backward(
                grad_values.reshape(batch * k, 1)
            )
            dcombined = dcombined.reshape(batch, k, -1)
            emb_grads = self.embedding.backward(
                (dcombined * features[:, None, :]).reshape(batch * k, -1)
            )
            dfeatures = (dcombined * emb).sum(axis=1)
        trunk_grads, dinputs = self.trunk.backward(dfeatures)
        return trunk_grads + emb_grads + head_grads, dinputs

    def copy(self):
        other = DistCritic.__new__(DistCritic)
        other.config = self.config
        other.obs_dim = self.obs_dim
        other.act_dim = self.act_dim
        other.trunk = self.trunk.copy()
        other.head = self.head.copy()
        other.embedding = self.embedding.copy() if self.embedding else None
        other.fpn = self.fpn.copy() if self.fpn else None
        other.fpn_optimizer = None
        if other.fpn is not None:
            other.fpn_optimizer = OptimizerState(
                other.fpn.parameters(),
                variant='rmsprop',
                lr=self.fpn_optimizer.lr,
            )
        other._fixed = self._fixed
        other._cache = None
        return other

    def default_boundaries(self, features, rng=None):
        """ Fractions the strategy picks on its own, one row per sample. """
        batch = features.shape[0]
        if self.strategy == 'fixed':
            return np.broadcast_to(self._fixed, (batch, self.n_atoms + 1))
        if self.strategy == 'sampled':
            if rng is None:
                raise dcValueError('The sampled strategy needs an `rng`.')
            return sample_fraction_array(self.n_atoms, rng, batch)
        _, boundaries = self.propose(features)
        return boundaries

    def forward(self, states, actions, boundaries=None, rng=None):
        """ Quantile values for a batch.
            Arguments:
                states, actions : (B, obs_dim), (B, act_dim).
                boundaries      : Optional FractionSet, (N + 1,) or
                                  (B, N + 1) boundaries. The strategy's own
                                  choice is used when omitted.
                rng             : Generator for the sampled strategy.
            Returns (values (B, N), boundaries (B, N + 1)).
        """
        inputs = self._inputs(states, actions)
        features = self.trunk.forward(inputs)
        batch = features.shape[0]
        if boundaries is None:
            boundaries = self.default_boundaries(features, rng)
        else:
            boundaries = self._check_boundaries(boundaries, batch)
        if self.strategy == 'fixed':
            values = self.head.forward(features)
            emb = None
        else:
            taus = (boundaries[:, :-1] + boundaries[:, 1:]) / 2
            values, emb = self._head_at(features, taus)
        self._cache = (batch, emb, features)
        return values, boundaries

    def features(self, states, actions):
        """ Trunk features, treated as constants by the caller. """
        self._cache = None
        return self.trunk.forward(self._inputs(states, actions))

    def fpn_parameters(self):
        return self.fpn.parameters() if self.fpn is not None else []

    def parameters(self):
        params = self.trunk.parameters()
        if self.embedding is not None:
            params += self.embedding.parameters()
        return params + self.head.parameters()

    def propose(self, features):
        """ (probs, boundaries) from the fraction proposal layer. """
        if self.fpn is None:
            raise dcStateError(
                'Only the learned strategy has a fraction proposal layer.'
            )
        return fractions_from_logit_array(self.fpn.forward(features))

    def q_values(self, states, actions, boundaries=None, rng=None):
        """ Fraction-weighted mean of the predicted quantiles, per row. """
        values, boundaries = self.forward(states, actions, boundaries, rng)
        return np.sum(np.diff(boundaries, axis=1) * values, axis=1)

    def quantile_values(self, features, taus):
        """ Head evaluated at arbitrary fractions `taus` (B, K) on given trunk
            features. Invalidates the cache of the last forward().
        """
        if self.strategy == 'fixed':
            raise dcStateError(
                'The fixed strategy cannot evaluate arbitrary fractions.'
            )
        self._cache = None
        values, _ = self._head_at(features, np.atleast_2d(taus))
        return values

    def save(self, path):
        header = {
            'strategy': self.strategy,
            'n_atoms': self.n_atoms,
            'obs_dim': self.obs_dim,
            'act_dim': self.act_dim,
            'config': asdict(self.config),
            'fpn_lr': self.fpn_optimizer.lr if self.fpn_optimizer else None,
        }
        return save_arrays(
            path,
            self.parameters() + self.fpn_parameters(),
            header,
        )

    @classmethod
    def load(cls, path):
        arrays, header = load_arrays(path)
        config = dict(header['config'])
        config['hidden'] = tuple(config['hidden'])
        critic = cls(
            CriticConfig(**config),
            header['obs_dim'],
            header['act_dim'],
            rng=None,
            fpn_lr=header.get('fpn_lr') or 0.0,
        )
        critic.set_arrays(arrays)
        return critic

    def set_arrays(self, arrays):
        params = self.parameters() + self.fpn_parameters()
        if len(arrays) != len(params):
            raise dcValueError('Expected {} arrays, got: {}'.format(
                len(params),
                len(arrays),
            ))
        for dest, src in zip(params, arrays):
            if dest.shape != np.shape(src):
                raise dcValueError('Shape mismatch: {} != {}'.format(
                    dest.shape,
                    np.shape(src),
                ))
            dest[...] = src


def predict(critic, state, action, fractions=None, rng=None):
    """ QuantileDistribution for a single (state, action). """
    values, boundaries = critic.forward(
        np.asarray(state, dtype=np.float64).reshape(1, -1),
        np.asarray(action, dtype=np.float64).reshape(1, -1),
        boundaries=fractions,
        rng=rng,
    )
    return QuantileDistribution(FractionSet(boundaries[0]), values[0])


def critic_td_loss(
        critic, states, actions, target_values, rng=None, boundaries=None):
    """ Mean over the batch of the pairwise quantile Huber loss between the
        predicted distributions and per-sample target values.
        Returns (loss, grads aligned with critic.parameters()).
    """
    target_values = np.atleast_2d(np.asarray(target_values, dtype=np.float64))
    batch = np.atleast_2d(states).shape[0]
    if batch == 0 or target_values.size == 0:
        raise dcValueError('critic_td_loss() needs a non-empty batch.')
    if target_values.shape[0] != batch:
        raise dcValueError('Got {} target rows for a batch of {}.'.format(
            target_values.shape[0],
            batch,
        ))
    values, boundaries = critic.forward(states, actions, boundaries, rng)
    taus = (boundaries[:, :-1] + boundaries[:, 1:]) / 2
    losses, dvalues = quantile_huber_pairwise(
        values,
        taus,
        target_values,
        critic.config.kappa,
    )
    grads, _ = critic.backward(dvalues / batch)
    return float(np.mean(losses)), grads


def fpn_update(critic, states, actions):
    """ One RMSprop step on the fraction proposal layer towards fractions
        with lower W1 approximation error. The critic's own head is the
        quantile function; nothing but the proposal layer changes.
        Returns the fraction loss proxy sum_i dW1/dtau_i * tau_i.
    """
    if critic.strategy != 'learned':
        raise dcStateError(
            'fpn_update() needs a learned-fraction critic, got: {}'.format(
                critic.strategy,
            )
        )
    features = critic.features(states, actions)
    batch = features.shape[0]
    probs, boundaries = critic.propose(features)
    interior = boundaries[:, 1:-1]
    if interior.shape[1]:
        taus = (boundaries[:, :-1] + boundaries[:, 1:]) / 2
        q_interior = critic.quantile_values(features, interior)
        q_midpoints = critic.quantile_values(features, taus)
        grad_tau = fraction_gradient_array(q_interior, q_midpoints)
    else:
        grad_tau = np.zeros((batch, 0))
    dlogits = fraction_logit_gradient(probs, grad_tau) / batch
    grads, _ = critic.fpn.backward(dlogits)
    critic.fpn_optimizer.step(critic.fpn.parameters(), grads)
    return float(np.mean(np.sum(grad_tau * interior, axis=1)))
