#!/usr/bin/env python3

""" envs.py
    ...Toy continuous-control environments and small tabular MDPs.

    The step functions are pure: the same (state, action) always gives the
    same (next state, reward). Only resets draw from a random source.
    Agents act in the normalized box [-1, 1]^act_dim; the env classes
    rescale to their own bounds.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .common_base import (
    dcStateError,
    dcValueError,
)

__all__ = [
    'ChainEnv',
    'EnvSpec',
    'PendulumEnv',
    'PointMassEnv',
    'TabularMdp',
    'chain_mdp',
    'make_env',
    'pendulum_step',
    'pointmass_step',
    'random_mdp',
]

log = logging.getLogger(__name__)

PENDULUM_G = 10.0
PENDULUM_M = 1.0
PENDULUM_L = 1.0
PENDULUM_DT = 0.05
PENDULUM_MAX_SPEED = 8.0
PENDULUM_MAX_TORQUE = 2.0
PENDULUM_REWARD_MIN = -(math.pi ** 2 + 0.1 * 64 + 0.001 * 4)

POINTMASS_LIMIT = 2.0
POINTMASS_REWARD_MIN = -(8.0 + 0.02)


@dataclass(frozen=True)
class EnvSpec(object):
    obs_dim: int
    act_dim: int
    action_low: tuple
    action_high: tuple
    max_steps: int

    def __post_init__(self):
        if self.max_steps < 1:
            raise dcValueError('`max_steps` must be >= 1.')
        low = np.asarray(self.action_low, dtype=np.float64)
        high = np.asarray(self.action_high, dtype=np.float64)
        if low.shape != (self.act_dim,) or high.shape != (self.act_dim,):
            raise dcValueError('Action bounds must have act_dim entries.')
        if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
            raise dcValueError('Action bounds must be finite.')
        if np.any(low >= high):
            raise dcValueError('Action bounds must satisfy low < high.')

    def unscale(self, action):
        """ Map a normalized action in [-1, 1] to env bounds. """
        low = np.asarray(self.action_low)
        high = np.asarray(self.action_high)
        return low + (np.asarray(action, dtype=np.float64) + 1.0) * \
            0.5 * (high - low)


def wrap_angle(theta):
    """ Wrap into [-pi, pi). """
    return ((theta + math.pi) % (2 * math.pi)) - math.pi


def _clip_action(action, low, high):
    clipped = np.clip(action, low, high)
    return clipped, bool(np.any(clipped != action))


def pendulum_step(state, action):
    """ Swing-up pendulum with theta = 0 upright.
        Arguments:
            state  : (theta, theta_dot).
            action : Torque in [-2, 2], clipped if outside.
        Returns ((theta', theta_dot'), reward, info).
    """
    theta, theta_dot = (float(x) for x in state)
    if not (math.isfinite(theta) and math.isfinite(theta_dot)):
        raise dcValueError('Pendulum state must be finite.')
    torque, clipped = _clip_action(
        float(np.asarray(action, dtype=np.float64).reshape(-1)[0]),
        -PENDULUM_MAX_TORQUE,
        PENDULUM_MAX_TORQUE,
    )
    torque = float(torque)
    reward = -(
        wrap_angle(theta) ** 2 +
        0.1 * theta_dot ** 2 +
        0.001 * torque ** 2
    )
    accel = (
        3 * PENDULUM_G / (2 * PENDULUM_L) * math.sin(theta) +
        3.0 / (PENDULUM_M * PENDULUM_L ** 2) * torque
    )
    new_theta_dot = min(
        max(theta_dot + accel * PENDULUM_DT, -PENDULUM_MAX_SPEED),
        PENDULUM_MAX_SPEED,
    )
    new_theta = theta + new_theta_dot * PENDULUM_DT
    return (new_theta, new_theta_dot), reward, {'clipped': clipped}


def pointmass_step(state, action):
    """ 2-D point mass pulled towards the origin.
        Arguments:
            state  : (x, v), each a 2-vector.
            action : Force in [-1, 1]^2, clipped if outside.
        Returns ((x', v'), reward, info).
    """
    x = np.asarray(state[0], dtype=np.float64)
    v = np.asarray(state[1], dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise dcValueError('Point-mass state must be finite.')
    a, clipped = _clip_action(
        np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0,
    )
    new_v = 0.95 * v + 0.1 * a
    new_x = np.clip(x + 0.1 * new_v, -POINTMASS_LIMIT, POINTMASS_LIMIT)
    reward = -float(new_x @ new_x) - 0.01 * float(a @ a)
    return (new_x, new_v), reward, {'clipped': clipped}


class _Env(object):
    """ Shared episode bookkeeping. Subclasses implement _reset/_step and
        _observe, and set `spec` and `reward_bounds`.
    """
    spec = None
    reward_bounds = (-math.inf, math.inf)

    def __init__(self):
        self.state = None
        self.steps = 0
        self.clip_count = 0

    def _check_reward(self, reward):
        low, high = self.reward_bounds
        if not (low - 1e-9 <= reward <= high + 1e-9):
            raise dcStateError(
                '{} reward {!r} outside [{}, {}].'.format(
                    type(self).__name__,
                    reward,
                    low,
                    high,
                )
            )

    def reset(self, rng, state=None):
        """ Start an episode. `state` overrides the random initial state.
            Returns the first observation.
        """
        self.steps = 0
        self.state = self._reset(rng) if state is None else state
        return self._observe()

    def step(self, action):
        """ Advance one step with a normalized action in [-1, 1].
            Returns (observation, reward, terminated, truncated, info).
        """
        if self.state is None:
            raise dcStateError('step() called before reset().')
        env_action = self.spec.unscale(np.clip(action, -1.0, 1.0))
        self.state, reward, terminated, info = self._step(
            self.state,
            env_action,
        )
        if info.get('clipped'):
            self.clip_count += 1
            log.warning('{}: action clipped to bounds: {!r}'.format(
                type(self).__name__,
                action,
            ))
        self._check_reward(reward)
        self.steps += 1
        truncated = (not terminated) and self.steps >= self.spec.max_steps
        return self._observe(), reward, terminated, truncated, info


class PendulumEnv(_Env):
    """ Pendulum swing-up, 200 steps, observation (cos, sin, theta_dot). """
    spec = EnvSpec(3, 1, (-2.0,), (2.0,), 200)
    reward_bounds = (PENDULUM_REWARD_MIN, 0.0)

    def _observe(self):
        theta, theta_dot = self.state
        return np.array([math.cos(theta), math.sin(theta), theta_dot])

    def _reset(self, rng):
        return (
            float(rng.uniform(-math.pi, math.pi)),
            float(rng.uniform(-1.0, 1.0)),
        )

    def _step(self, state, action):
        state, reward, info = pendulum_step(state, action)
        return state, reward, False, info


class PointMassEnv(_Env):
    """ Point mass in the plane, 100 steps, observation (x, v). """
    spec = EnvSpec(4, 2, (-1.0, -1.0), (1.0, 1.0), 100)
    reward_bounds = (POINTMASS_REWARD_MIN, 0.0)

    def _observe(self):
        x, v = self.state
        return np.concatenate([x, v])

    def _reset(self, rng):
        return (rng.uniform(-1.0, 1.0, size=2), np.zeros(2))

    def _step(self, state, action):
        state, reward, info = pointmass_step(state, action)
        return state, reward, False, info


@dataclass
class TabularMdp(object):
    """ Finite MDP with finitely supported reward distributions.
        Attributes:
            transitions : (S, A, S) array, P(s' | s, a).
            rewards     : rewards[s][a] is a list of (value, prob) pairs.
            gamma       : Discount.
            terminal    : (S,) bool array; terminal states are absorbing
                          with zero reward.
    """
    transitions: np.ndarray
    rewards: list
    gamma: float
    terminal: np.ndarray

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        if self.transitions.ndim != 3 or \
                self.transitions.shape[0] != self.transitions.shape[2]:
            raise dcValueError('Transitions must have shape (S, A, S).')
        if not np.allclose(self.transitions.sum(axis=2), 1.0, atol=1e-12):
            raise dcValueError('Transition rows must sum to 1.')
        if np.any(self.transitions < 0):
            raise dcValueError('Transition probabilities must be >= 0.')
        if not 0.0 <= self.gamma <= 1.0:
            raise dcValueError('`gamma` must be in [0, 1].')
        if self.terminal.shape != (self.n_states,):
            raise dcValueError('`terminal` needs one flag per state.')
        if len(self.rewards) != self.n_states or any(
                len(row) != self.n_actions for row in self.rewards):
            raise dcValueError('`rewards` must be indexed [state][action].')
        for row in self.rewards:
            for support in row:
                probs = [p for _, p in support]
                if not support or abs(math.fsum(probs) - 1.0) > 1e-12:
                    raise dcValueError(
                        'Reward distributions must be finite and sum to 1.'
                    )

    @property
    def n_actions(self):
        return self.transitions.shape[1]

    @property
    def n_states(self):
        return self.transitions.shape[0]

    def max_abs_reward(self):
        return max(
            abs(v)
            for row in self.rewards
            for support in row
            for v, _ in support
        )


def chain_mdp(n_states, p_reward, gamma=0.99):
    """ Left-to-right chain with one action. Every step pays a Bernoulli
        (p_reward) reward; the last state is terminal.
    """
    if n_states < 2:
        raise dcValueError('`n_states` must be >= 2, got: {}'.format(
            n_states,
        ))
    if not 0.0 <= p_reward <= 1.0:
        raise dcValueError('`p_reward` must be in [0, 1], got: {!r}'.format(
            p_reward,
        ))
    transitions = np.zeros((n_states, 1, n_states))
    for s in range(n_states - 1):
        transitions[s, 0, s + 1] = 1.0
    transitions[-1, 0, -1] = 1.0
    bernoulli = [(v, p) for v, p in ((0.0, 1.0 - p_reward), (1.0, p_reward))
                 if p > 0]
    rewards = [[list(bernoulli)] for _ in range(n_states - 1)]
    rewards.append([[(0.0, 1.0)]])
    terminal = np.zeros(n_states, dtype=bool)
    terminal[-1] = True
    return TabularMdp(transitions, rewards, gamma, terminal)


def random_mdp(n_states, n_actions, rng, gamma=0.9, n_rewards=2):
    """ Random dense MDP with no terminal states and small reward supports.
    """
    transitions = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transitions /= transitions.sum(axis=2, keepdims=True)
    rewards = []
    for _ in range(n_states):
        row = []
        for _ in range(n_actions):
            values = rng.uniform(-1.0, 1.0, size=n_rewards)
            probs = rng.dirichlet(np.ones(n_rewards))
            probs[-1] = 1.0 - math.fsum(probs[:-1])
            row.append([(float(v), float(p)) for v, p in zip(values, probs)
                        if p > 0])
        rewards.append(row)
    return TabularMdp(
        transitions,
        rewards,
        gamma,
        np.zeros(n_states, dtype=bool),
    )


class ChainEnv(_Env):
    """ A chain MDP as a continuous-control env: one-hot observation, a 1-D
        action that is ignored, Bernoulli rewards and a true terminal.
    """
    reward_bounds = (0.0, 1.0)

    def __init__(self, n_states=10, p_reward=0.5, rng=None):
        super(ChainEnv, self).__init__()
        self.mdp = chain_mdp(n_states, p_reward)
        self.spec = EnvSpec(n_states, 1, (-1.0,), (1.0,), n_states - 1)
        # Rewards are stochastic, so the env owns its reward stream.
        self.reward_rng = rng or np.random.default_rng(0)

    def _observe(self):
        obs = np.zeros(self.mdp.n_states)
        obs[self.state] = 1.0
        return obs

    def _reset(self, rng):
        return 0

    def reset(self, rng, state=None):
        obs = super(ChainEnv, self).reset(rng, state)
        self.reward_rng = np.random.default_rng(rng.integers(2 ** 63))
        return obs

    def _step(self, state, action):
        support = self.mdp.rewards[state][0]
        values = [v for v, _ in support]
        probs = [p for _, p in support]
        reward = float(values[self.reward_rng.choice(len(values), p=probs)])
        next_state = int(np.flatnonzero(self.mdp.transitions[state, 0])[0])
        return next_state, reward, bool(self.mdp.terminal[next_state]), {}


ENVS = {
    'pendulum': PendulumEnv,
    'pointmass': PointMassEnv,
    'chain': ChainEnv,
}


def make_env(name, **kwargs):
    try:
        cls = ENVS[str(name).lower()]
    except KeyError:
        raise dcValueError('Unknown env {!r}, expected one of: {}'.format(
            name,
            ', '.join(sorted(ENVS)),
        )) from None
    return cls(**kwargs)
