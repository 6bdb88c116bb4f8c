#!/usr/bin/env python3

""" agents.py
    ...Distributional TD3 and SAC on top of twin distributional critics.

    Actions live in the normalized box [-1, 1]^act_dim. Environments rescale
    them to their own bounds.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .common_base import (
    BackedUpWriter,
    dcDivergenceError,
    dcError,
    dcStateError,
    dcValueError,
)
from .critics import (
    CriticConfig,
    DistCritic,
    critic_td_loss,
    fpn_update,
)
from .nn import (
    Mlp,
    OptimizerState,
    load_arrays,
    polyak_update,
    save_arrays,
)

__all__ = [
    'AgentConfig',
    'BASES',
    'Batch',
    'DeterministicActor',
    'DistributionalAgent',
    'GaussianActor',
    'ReplayBuffer',
    'Transition',
    'actor_objective',
    'actor_update',
    'bellman_targets',
    'build_target_distribution',
    'evaluate',
    'load_checkpoint',
    'make_actor',
    'random_policy_returns',
    'save_checkpoint',
]

log = logging.getLogger(__name__)

BASES = ('td3', 'sac')

# Shared actor/critic learning rates per (base, strategy).
LEARNING_RATES = {
    'td3': {'fixed': 4e-4, 'sampled': 2e-4, 'learned': 2e-4},
    'sac': {'fixed': 8e-4, 'sampled': 6e-4, 'learned': 5e-4},
}
FPN_LEARNING_RATES = {'td3': 2e-6, 'sac': 5e-6}

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
# Keeps log(1 - tanh(u)^2) finite at saturation.
SQUASH_EPS = 1e-6


@dataclass
class AgentConfig(object):
    base: str = 'sac'
    critic: CriticConfig = field(default_factory=CriticConfig)
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    learning_rate: float = None
    fpn_learning_rate: float = None
    learning_starts: int = 10000
    buffer_size: int = 1000000
    policy_delay: int = 2
    exploration_noise: float = 0.1
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    ent_coef: float = 0.05
    n_critics: int = 2
    actor_hidden: tuple = (256, 256)
    actor_activation: str = None

    def __post_init__(self):
        self.base = str(self.base).lower()
        if self.base not in BASES:
            raise dcValueError('Unknown base algorithm: {!r}'.format(
                self.base,
            ))
        if isinstance(self.critic, dict):
            self.critic = CriticConfig(**self.critic)
        if self.learning_rate is None:
            self.learning_rate = LEARNING_RATES[self.base][
                self.critic.strategy
            ]
        if self.fpn_learning_rate is None:
            self.fpn_learning_rate = FPN_LEARNING_RATES[self.base]
        if self.actor_activation is None:
            self.actor_activation = self.critic.activation
        self.actor_hidden = tuple(int(h) for h in self.actor_hidden)
        if not 0.0 <= self.gamma <= 1.0:
            raise dcValueError('`gamma` must be in [0, 1], got: {}'.format(
                self.gamma,
            ))
        if not 0.0 < self.tau < 1.0:
            raise dcValueError('`tau` must be in (0, 1), got: {}'.format(
                self.tau,
            ))
        # Zero is allowed so tests can freeze every parameter.
        if self.learning_rate < 0 or self.fpn_learning_rate < 0:
            raise dcValueError('Learning rates must be >= 0.')
        if self.n_critics != 2:
            raise dcValueError('Exactly two critics are supported, got: {}'
                               .format(self.n_critics))
        if self.batch_size < 1 or self.policy_delay < 1:
            raise dcValueError('`batch_size` and `policy_delay` must be >= 1.')
        if self.buffer_size < self.batch_size:
            raise dcValueError('`buffer_size` must hold at least one batch.')
        if self.ent_coef < 0:
            raise dcValueError('`ent_coef` must be >= 0.')

    @classmethod
    def for_variant(cls, base, strategy, n_atoms, **overrides):
        """ Config with the per-variant defaults: learning rates from the
            tables above, and ReLU instead of tanh for TD3 with fixed
            fractions. Critic fields may be passed as keyword overrides.
        """
        base = str(base).lower()
        critic_fields = {
            k: overrides.pop(k)
            for k in list(overrides)
            if k in CriticConfig.__dataclass_fields__
        }
        critic_fields.setdefault(
            'activation',
            'relu' if (base, strategy) == ('td3', 'fixed') else 'tanh',
        )
        critic = CriticConfig(
            strategy=strategy,
            n_atoms=n_atoms,
            **critic_fields
        )
        return cls(base=base, critic=critic, **overrides)

    def to_dict(self):
        return asdict(self)


@dataclass
class Transition(object):
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class Batch(object):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return self.rewards.size


class ReplayBuffer(object):
    """ Fixed-capacity FIFO ring of transitions with uniform sampling. """
    def __init__(self, obs_dim, act_dim, capacity=1000000):
        if capacity < 1:
            raise dcValueError('`capacity` must be >= 1.')
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, act_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, obs_dim))
        self.dones = np.zeros(self.capacity)
        self.pos = 0
        self.full = False

    def __len__(self):
        return self.capacity if self.full else self.pos

    def add(self, transition):
        t = transition
        if not (np.all(np.isfinite(t.state)) and
                np.all(np.isfinite(t.next_state)) and
                np.all(np.isfinite(t.action)) and
                math.isfinite(t.reward)):
            raise dcValueError('Transitions must be finite.')
        i = self.pos
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = float(t.done)
        self.pos = (i + 1) % self.capacity
        if self.pos == 0:
            self.full = True

    def sample(self, batch_size, rng):
        size = len(self)
        if size < batch_size:
            raise dcStateError(
                'Cannot sample {} transitions from a buffer of {}.'.format(
                    batch_size,
                    size,
                )
            )
        idx = rng.integers(0, size, size=batch_size)
        return Batch(
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


class DeterministicActor(object):
    """ tanh-squashed deterministic policy. """
    def __init__(self, obs_dim, act_dim, hidden=(256, 256), activation='tanh',
                 rng=None):
        hidden = list(hidden)
        self.act_dim = int(act_dim)
        self.net = Mlp(
            [obs_dim] + hidden + [act_dim],
            [activation] * len(hidden) + ['tanh'],
            rng,
        )

    def act(self, states):
        return self.net.forward(states)

    def backward(self, grad_actions):
        grads, _ = self.net.backward(grad_actions)
        return grads

    def copy(self):
        other = DeterministicActor.__new__(DeterministicActor)
        other.act_dim = self.act_dim
        other.net = self.net.copy()
        return other

    def deterministic(self, states):
        return self.act(states)

    def parameters(self):
        return self.net.parameters()


class GaussianActor(object):
    """ Diagonal Gaussian policy squashed by tanh. The network emits the
        mean and the log standard deviation (clipped to [-20, 2]).
    """
    def __init__(self, obs_dim, act_dim, hidden=(256, 256), activation='tanh',
                 rng=None):
        hidden = list(hidden)
        self.act_dim = int(act_dim)
        self.net = Mlp(
            [obs_dim] + hidden + [2 * act_dim],
            [activation] * len(hidden) + ['identity'],
            rng,
        )
        self._cache = None

    def _split(self, states):
        out = self.net.forward(states)
        mean = out[:, :self.act_dim]
        raw = out[:, self.act_dim:]
        return mean, raw, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)

    def backward(self, grad_actions, grad_log_prob):
        """ Reparameterized gradients for the last sample().
            Arguments:
                grad_actions  : (B, act_dim) dLoss/d(squashed action).
                grad_log_prob : (B,) dLoss/d(log pi).
            Returns grads aligned with parameters().
        """
        if self._cache is None:
            raise dcStateError('backward() called before sample().')
        raw, noise, std, squashed = self._cache
        one_minus = 1.0 - squashed * squashed
        dlogp = np.asarray(grad_log_prob, dtype=np.float64)[:, None]
        du = grad_actions * one_minus + \
            dlogp * 2.0 * squashed * one_minus / (one_minus + SQUASH_EPS)
        dlog_std = du * std * noise - dlogp
        dlog_std = np.where(
            (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX),
            dlog_std,
            0.0,
        )
        grads, _ = self.net.backward(np.concatenate([du, dlog_std], axis=1))
        return grads

    def copy(self):
        other = GaussianActor.__new__(GaussianActor)
        other.act_dim = self.act_dim
        other.net = self.net.copy()
        other._cache = None
        return other

    def deterministic(self, states):
        """ tanh of the mean. """
        self._cache = None
        mean, _, _ = self._split(states)
        return np.tanh(mean)

    def parameters(self):
        return self.net.parameters()

    def sample(self, states, rng=None, noise=None):
        """ Reparameterized tanh-Gaussian sample.
            Returns (actions (B, act_dim), log_prob (B,)).
        """
        mean, raw, log_std = self._split(states)
        if noise is None:
            noise = rng.standard_normal(mean.shape)
        std = np.exp(log_std)
        squashed = np.tanh(mean + std * noise)
        log_prob = np.sum(
            -0.5 * noise * noise - log_std - 0.5 * math.log(2 * math.pi) -
            np.log(1.0 - squashed * squashed + SQUASH_EPS),
            axis=1,
        )
        self._cache = (raw, noise, std, squashed)
        return squashed, log_prob


def make_actor(cfg, obs_dim, act_dim, rng):
    cls = DeterministicActor if cfg.base == 'td3' else GaussianActor
    return cls(obs_dim, act_dim, cfg.actor_hidden, cfg.actor_activation, rng)


def bellman_targets(cfg, rewards, dones, next_values, log_prob=None):
    """ r + (1 - done) * gamma * (values - alpha * log pi), per atom.
        The entropy term only applies to SAC and only when `log_prob` is
        given.
    """
    next_values = np.atleast_2d(next_values)
    if cfg.base == 'sac' and log_prob is not None:
        entropy = cfg.ent_coef * np.asarray(log_prob, dtype=np.float64)
        next_values = next_values - entropy[:, None]
    rewards = np.asarray(rewards, dtype=np.float64)[:, None]
    live = 1.0 - np.asarray(dones, dtype=np.float64)[:, None]
    return rewards + live * cfg.gamma * next_values


def shared_boundaries(critic, states, actions, rng=None):
    """ One FractionSet per sample, picked by `critic`'s strategy. """
    return critic.default_boundaries(critic.features(states, actions), rng)


def build_target_distribution(cfg, batch, target_actor, target_critics,
                              rng=None, actor=None):
    """ Target quantile values for a batch from the twin target critics.
        Arguments:
            cfg             : AgentConfig.
            batch           : Batch of transitions.
            target_actor    : TD3 target actor. Ignored for SAC.
            target_critics  : Two target DistCritics.
            rng             : Generator for smoothing noise, policy samples
                              and sampled fractions.
            actor           : SAC policy; a' is sampled from it.
        Returns (targets (B, N), boundaries (B, N + 1)).
    """
    if len(target_critics) != 2:
        raise dcValueError('Two target critics are required, got: {}'.format(
            len(target_critics),
        ))
    first, second = target_critics
    if first.n_atoms != second.n_atoms:
        raise dcError(
            'Target critics disagree on atom count: {} != {}'.format(
                first.n_atoms,
                second.n_atoms,
            )
        )
    next_states = batch.next_states
    log_prob = None
    if cfg.base == 'td3':
        next_actions = target_actor.act(next_states)
        noise = np.clip(
            rng.normal(0.0, cfg.target_noise, next_actions.shape),
            -cfg.target_noise_clip,
            cfg.target_noise_clip,
        )
        next_actions = np.clip(next_actions + noise, -1.0, 1.0)
    else:
        policy = actor if actor is not None else target_actor
        next_actions, log_prob = policy.sample(next_states, rng)
    boundaries = shared_boundaries(first, next_states, next_actions, rng)
    v1, _ = first.forward(next_states, next_actions, boundaries)
    v2, _ = second.forward(next_states, next_actions, boundaries)
    targets = bellman_targets(
        cfg,
        batch.rewards,
        batch.dones,
        np.minimum(v1, v2),
        log_prob,
    )
    return targets, boundaries


def _critic_means(critic, states, actions, rng):
    values, boundaries = critic.forward(states, actions, rng=rng)
    widths = np.diff(boundaries, axis=1)
    return np.sum(widths * values, axis=1), widths


def actor_objective(cfg, states, actor, critics, rng=None, noise=None):
    """ Actor loss and its gradient. Critic parameters and fractions are
        held constant.
        TD3: -mean fqf_mean of critic 1 at (s, actor(s)).
        SAC: mean of alpha * log pi - min_k fqf_mean_k at a reparameterized
             sample.
        Returns (loss, grads aligned with actor.parameters()).
    """
    states = np.atleast_2d(states)
    batch = states.shape[0]
    if cfg.base == 'td3':
        actions = actor.act(states)
        q, widths = _critic_means(critics[0], states, actions, rng)
        _, dinputs = critics[0].backward(-widths / batch)
        dactions = dinputs[:, -actions.shape[1]:]
        return float(-np.mean(q)), actor.backward(dactions)

    actions, log_prob = actor.sample(states, rng, noise)
    means = [_critic_means(c, states, actions, rng) for c in critics]
    qs = np.stack([q for q, _ in means])
    chosen = np.argmin(qs, axis=0)
    q_min = qs[chosen, np.arange(batch)]
    dactions = np.zeros_like(actions)
    for k, (critic, (_, widths)) in enumerate(zip(critics, means)):
        mask = (chosen == k).astype(np.float64)[:, None]
        _, dinputs = critic.backward(-widths * mask / batch)
        dactions += dinputs[:, -actions.shape[1]:]
    loss = float(np.mean(cfg.ent_coef * log_prob - q_min))
    grads = actor.backward(dactions, np.full(batch, cfg.ent_coef / batch))
    return loss, grads


def actor_update(cfg, batch, actor, critics, optimizer, rng=None):
    """ One optimizer step on the actor. Returns the actor loss. """
    loss, grads = actor_objective(cfg, batch.states, actor, critics, rng)
    optimizer.step(actor.parameters(), grads)
    return loss


def evaluate(actor, env, episodes, rng, initial_state=None):
    """ Undiscounted returns of the deterministic policy.
        Returns (mean return, per-episode returns).
    """
    if episodes < 1:
        raise dcValueError('`episodes` must be >= 1, got: {}'.format(
            episodes,
        ))
    returns = []
    for _ in range(episodes):
        obs = env.reset(rng, state=initial_state)
        total = 0.0
        done = False
        while not done:
            action = actor.deterministic(obs[None, :])[0]
            obs, reward, terminated, truncated, _ = env.step(action)
            total += reward
            done = terminated or truncated
        returns.append(total)
    return float(np.mean(returns)), returns


def random_policy_returns(env, episodes, rng):
    """ Returns of uniformly random normalized actions. """
    returns = []
    for _ in range(episodes):
        env.reset(rng)
        total = 0.0
        done = False
        while not done:
            action = rng.uniform(-1.0, 1.0, env.spec.act_dim)
            _, reward, terminated, truncated, _ = env.step(action)
            total += reward
            done = terminated or truncated
        returns.append(total)
    return returns


class DistributionalAgent(object):
    """ One training run's worth of networks, optimizers, replay buffer and
        random streams.
    """
    rng_streams = ('env', 'init', 'explore', 'replay', 'fractions', 'eval')

    def __init__(self, config, env, seed=0, buffer_size=None):
        """ Arguments:
                config      : AgentConfig.
                env         : Environment to collect from.
                seed        : Master seed; split into independent streams.
                buffer_size : Optional replay capacity below
                              config.buffer_size (a short run never fills
                              the full buffer).
        """
        self.config = config
        self.env = env
        self.seed = int(seed)
        seeds = np.random.SeedSequence(self.seed).spawn(len(self.rng_streams))
        self.rngs = {
            name: np.random.default_rng(s)
            for name, s in zip(self.rng_streams, seeds)
        }
        obs_dim, act_dim = env.spec.obs_dim, env.spec.act_dim
        init = self.rngs['init']
        self.actor = make_actor(config, obs_dim, act_dim, init)
        self.critics = [
            DistCritic(config.critic, obs_dim, act_dim, init,
                       fpn_lr=config.fpn_learning_rate)
            for _ in range(config.n_critics)
        ]
        self.target_critics = [c.copy() for c in self.critics]
        self.target_actor = self.actor.copy() if config.base == 'td3' else None
        lr = config.learning_rate
        self.actor_optimizer = OptimizerState(self.actor.parameters(), lr=lr)
        self.critic_optimizers = [
            OptimizerState(c.parameters(), lr=lr) for c in self.critics
        ]
        capacity = config.buffer_size
        if buffer_size is not None:
            capacity = max(min(capacity, buffer_size), config.batch_size)
        self.buffer = ReplayBuffer(obs_dim, act_dim, capacity)
        self.num_timesteps = 0
        self.n_updates = 0
        self.episode_return = 0.0
        self.episode_returns = []
        self._obs = env.reset(self.rngs['env'])

    def __repr__(self):
        return 'DistributionalAgent({}/{}, n_atoms={}, steps={})'.format(
            self.config.base,
            self.config.critic.strategy,
            self.config.critic.n_atoms,
            self.num_timesteps,
        )

    def collect_step(self):
        """ Act once in the env and store the transition. """
        cfg = self.config
        rng = self.rngs['explore']
        act_dim = self.env.spec.act_dim
        if self.num_timesteps < cfg.learning_starts:
            action = rng.uniform(-1.0, 1.0, act_dim)
        elif cfg.base == 'td3':
            action = self.actor.act(self._obs[None, :])[0]
            action = np.clip(
                action + rng.normal(0.0, cfg.exploration_noise, act_dim),
                -1.0,
                1.0,
            )
        else:
            action, _ = self.actor.sample(self._obs[None, :], rng)
            action = action[0]
        obs, reward, terminated, truncated, _ = self.env.step(action)
        # Time-limit truncation is not a terminal.
        self.buffer.add(Transition(self._obs, action, reward, obs, terminated))
        self.episode_return += reward
        if terminated or truncated:
            self.episode_returns.append(self.episode_return)
            self.episode_return = 0.0
            obs = self.env.reset(self.rngs['env'])
        self._obs = obs
        self.num_timesteps += 1

    def critic_update(self, batch):
        """ One step on both critics against shared targets. Returns the
            mean of the two critic losses.
        """
        cfg = self.config
        rng = self.rngs['fractions']
        targets, _ = build_target_distribution(
            cfg,
            batch,
            self.target_actor,
            self.target_critics,
            rng=rng,
            actor=self.actor,
        )
        losses = []
        for critic, optimizer in zip(self.critics, self.critic_optimizers):
            loss, grads = critic_td_loss(
                critic,
                batch.states,
                batch.actions,
                targets,
                rng=rng,
            )
            optimizer.step(critic.parameters(), grads)
            losses.append(loss)
        return float(np.mean(losses))

    def polyak(self):
        tau = self.config.tau
        for target, online in zip(self.target_critics, self.critics):
            polyak_update(
                target.parameters() + target.fpn_parameters(),
                online.parameters() + online.fpn_parameters(),
                tau,
            )
        if self.target_actor is not None:
            polyak_update(
                self.target_actor.parameters(),
                self.actor.parameters(),
                tau,
            )

    def train_step(self):
        """ Collect one transition, then (once warm) update the critics, the
            fraction proposal layers, and on schedule the actor and targets.
            Returns a diagnostics dict; losses are None when not updated.
        """
        cfg = self.config
        self.collect_step()
        diagnostics = {
            'step': self.num_timesteps,
            'critic_loss': None,
            'actor_loss': None,
            'fpn_loss': None,
        }
        if self.num_timesteps <= cfg.learning_starts or \
                len(self.buffer) < cfg.batch_size:
            return diagnostics
        batch = self.buffer.sample(cfg.batch_size, self.rngs['replay'])
        diagnostics['critic_loss'] = self.critic_update(batch)
        if cfg.critic.strategy == 'learned':
            diagnostics['fpn_loss'] = float(np.mean([
                fpn_update(c, batch.states, batch.actions)
                for c in self.critics
            ]))
        self.n_updates += 1
        if cfg.base == 'sac' or self.n_updates % cfg.policy_delay == 0:
            diagnostics['actor_loss'] = actor_update(
                cfg,
                batch,
                self.actor,
                self.critics,
                self.actor_optimizer,
                rng=self.rngs['fractions'],
            )
            self.polyak()
        for key in ('critic_loss', 'actor_loss', 'fpn_loss'):
            val = diagnostics[key]
            if val is not None and not math.isfinite(val):
                log.warning('Divergence at step {}: {!r}'.format(
                    self.num_timesteps,
                    diagnostics,
                ))
                raise dcDivergenceError(
                    '{} is {} at step {}.'.format(key, val,
                                                  self.num_timesteps),
                    diagnostics,
                )
        return diagnostics


def _optimizer_blobs(agent):
    blobs = {'optim_actor': agent.actor_optimizer}
    for k, opt in enumerate(agent.critic_optimizers):
        blobs['optim_critic{}'.format(k)] = opt
        fpn_opt = agent.critics[k].fpn_optimizer
        if fpn_opt is not None:
            blobs['optim_fpn{}'.format(k)] = fpn_opt
    return blobs


def save_checkpoint(agent, directory):
    """ Write actor, critics, targets and optimizer state to `directory`.
        The replay buffer is not saved.
    """
    os.makedirs(directory, exist_ok=True)
    agent.actor.net.save(os.path.join(directory, 'actor'))
    if agent.target_actor is not None:
        agent.target_actor.net.save(os.path.join(directory, 'target_actor'))
    for k, (critic, target) in enumerate(
            zip(agent.critics, agent.target_critics)):
        critic.save(os.path.join(directory, 'critic{}'.format(k)))
        target.save(os.path.join(directory, 'target_critic{}'.format(k)))
    for name, opt in _optimizer_blobs(agent).items():
        save_arrays(os.path.join(directory, name), opt.arrays(), opt.header())
    with BackedUpWriter(os.path.join(directory, 'checkpoint.json')) as f:
        json.dump(
            {
                'config': agent.config.to_dict(),
                'seed': agent.seed,
                'num_timesteps': agent.num_timesteps,
                'n_updates': agent.n_updates,
            },
            f,
            indent=4,
            sort_keys=True,
        )
    log.debug('Saved checkpoint: {}'.format(directory))
    return directory


def _copy_into(dest_params, path):
    arrays, _ = load_arrays(path)
    if len(arrays) != len(dest_params):
        raise dcValueError('{} holds {} arrays, expected {}.'.format(
            path,
            len(arrays),
            len(dest_params),
        ))
    for dest, src in zip(dest_params, arrays):
        dest[...] = src


def load_checkpoint(agent, directory):
    """ Restore a save_checkpoint() directory into a compatible agent. """
    with open(os.path.join(directory, 'checkpoint.json'), 'r') as f:
        meta = json.load(f)
    _copy_into(agent.actor.parameters(), os.path.join(directory, 'actor'))
    if agent.target_actor is not None:
        _copy_into(
            agent.target_actor.parameters(),
            os.path.join(directory, 'target_actor'),
        )
    for k, (critic, target) in enumerate(
            zip(agent.critics, agent.target_critics)):
        _copy_into(critic.parameters() + critic.fpn_parameters(),
                   os.path.join(directory, 'critic{}'.format(k)))
        _copy_into(target.parameters() + target.fpn_parameters(),
                   os.path.join(directory, 'target_critic{}'.format(k)))
    for name, opt in _optimizer_blobs(agent).items():
        arrays, header = load_arrays(os.path.join(directory, name))
        opt.restore(arrays, header)
    agent.num_timesteps = int(meta['num_timesteps'])
    agent.n_updates = int(meta['n_updates'])
    return agent
