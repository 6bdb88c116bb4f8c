#!/usr/bin/env python3

""" oracle.py
    ...Brute-force ground truth for the distributional math: exact return
    distributions of tabular MDPs, the projected distributional Bellman
    operator, tabular quantile TD, finite-difference gradient checks and an
    exhaustive W1 minimizer.
"""

import bisect
import itertools
import logging
import math

import numpy as np
from scipy import integrate

from .agents import (
    AgentConfig,
    Batch,
    actor_objective,
    build_target_distribution,
    make_actor,
)
from .common_base import (
    dcResourceError,
    dcValueError,
)
from .critics import (
    CriticConfig,
    DistCritic,
    critic_td_loss,
    fpn_update,
)
from .distcore import (
    DiscreteDistribution,
    FractionSet,
    QuantileDistribution,
    aligned_quantiles,
    fixed_fractions,
    project_w1,
    quantile_loss_gradient,
    sample_fraction_array,
    sample_fractions,
    w1_fraction_gradient,
    wasserstein_p,
)
from .envs import (
    chain_mdp,
    random_mdp,
)
from .nn import Mlp

__all__ = [
    'AnalyticQuantileCritic',
    'MAX_ATOMS',
    'brute_force_w1_min',
    'contraction_moduli',
    'distributional_bellman_apply',
    'enumerate_return_distribution',
    'exhaustive_path_distribution',
    'finite_diff_check',
    'fraction_gradient_fd',
    'max_w_infinity',
    'numeric_w1',
    'tabular_quantile_td',
    'uniform_policy',
    'verify_suite',
    'w_infinity',
]

log = logging.getLogger(__name__)

MAX_ATOMS = 10 ** 7
MAX_CANDIDATES = 10 ** 7
MAX_PATHS = 10 ** 6
MERGE_TOL = 1e-12


def uniform_policy(mdp):
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def _check_policy(mdp, policy):
    if policy is None:
        return uniform_policy(mdp)
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise dcValueError('Policy must have shape (S, A) = {}.'.format(
            (mdp.n_states, mdp.n_actions),
        ))
    if not np.allclose(policy.sum(axis=1), 1.0, atol=1e-12):
        raise dcValueError('Policy rows must sum to 1.')
    return policy


def _merge(values, probs):
    """ Sort atoms and merge values within MERGE_TOL of each other. """
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if values.size > MAX_ATOMS:
        raise dcResourceError(
            'Return distribution has {} atoms (limit {}).'.format(
                values.size,
                MAX_ATOMS,
            )
        )
    order = np.argsort(values, kind='stable')
    values, probs = values[order], probs[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(values) >
                                                 MERGE_TOL) + 1))
    return values[starts], np.add.reduceat(probs, starts)


def _branches(mdp, policy, state):
    """ (prob, reward, next_state) for every positive-probability branch. """
    out = []
    for a in range(mdp.n_actions):
        pa = policy[state, a]
        if pa <= 0:
            continue
        for r, pr in mdp.rewards[state][a]:
            for s2 in np.flatnonzero(mdp.transitions[state, a] > 0):
                out.append((pa * pr * mdp.transitions[state, a, s2], r,
                            int(s2)))
    return out


def enumerate_return_distribution(mdp, start, horizon, policy=None):
    """ Exact distribution of sum_{t < H} gamma^t R_t from `start`, by
        dynamic programming over (state, steps left).
        Returns (DiscreteDistribution, tail_bound) where tail_bound bounds
        the contribution of the truncated steps.
    """
    if horizon < 1:
        raise dcValueError('`horizon` must be >= 1, got: {}'.format(horizon))
    policy = _check_policy(mdp, policy)
    gamma = mdp.gamma
    zero = (np.zeros(1), np.ones(1))
    memo = {}

    def dist(state, left):
        if left == 0 or mdp.terminal[state]:
            return zero
        key = (state, left)
        if key in memo:
            return memo[key]
        values, probs = [], []
        for p, r, s2 in _branches(mdp, policy, state):
            v2, p2 = dist(s2, left - 1)
            values.append(r + gamma * v2)
            probs.append(p * p2)
        memo[key] = _merge(np.concatenate(values), np.concatenate(probs))
        return memo[key]

    values, probs = dist(start, horizon)
    if gamma < 1:
        tail = gamma ** horizon * mdp.max_abs_reward() / (1 - gamma)
    else:
        tail = 0.0 if mdp.max_abs_reward() == 0 else math.inf
    return DiscreteDistribution.from_atoms(values, probs), tail


def exhaustive_path_distribution(mdp, start, horizon, policy=None):
    """ The same distribution as enumerate_return_distribution(), by
        walking every path explicitly. Small instances only.
    """
    policy = _check_policy(mdp, policy)
    values, probs = [], []
    stack = [(start, 0, 0.0, 1.0)]
    while stack:
        state, t, ret, prob = stack.pop()
        if t == horizon or mdp.terminal[state]:
            values.append(ret)
            probs.append(prob)
            if len(values) > MAX_PATHS:
                raise dcResourceError('More than {} paths.'.format(MAX_PATHS))
            continue
        for p, r, s2 in _branches(mdp, policy, state):
            stack.append((s2, t + 1, ret + (mdp.gamma ** t) * r, prob * p))
    values, probs = _merge(values, probs)
    return DiscreteDistribution.from_atoms(values, probs)


def distributional_bellman_apply(mdp, policy, current, n):
    """ One projected distributional Bellman backup.
        Arguments:
            mdp      : TabularMdp.
            policy   : (S, A) action probabilities, or None for uniform.
            current  : One QuantileDistribution per state.
            n        : Atoms of the projected result.
        Returns a list of QuantileDistribution, one per state.
    """
    policy = _check_policy(mdp, policy)
    if len(current) != mdp.n_states:
        raise dcValueError('Need one distribution per state.')
    fractions = fixed_fractions(n)
    out = []
    for s in range(mdp.n_states):
        if mdp.terminal[s]:
            out.append(QuantileDistribution(fractions, np.zeros(n)))
            continue
        values, probs = [], []
        for p, r, s2 in _branches(mdp, policy, s):
            if mdp.terminal[s2]:
                values.append(np.array([r]))
                probs.append(np.array([p]))
            else:
                nxt = current[s2]
                values.append(r + mdp.gamma * nxt.values)
                probs.append(p * nxt.fractions.widths)
        values, probs = _merge(np.concatenate(values),
                               np.concatenate(probs))
        out.append(project_w1(DiscreteDistribution.from_atoms(values, probs),
                              n))
    return out


def w_infinity(u, v):
    """ W_inf between discrete distributions: the largest inverse-CDF gap
        over the merged fraction breakpoints.
    """
    _, xs, ys = aligned_quantiles(u, v)
    return float(np.max(np.abs(xs - ys)))


def max_w_infinity(first, second):
    """ Maximal W_inf over states between two per-state representations. """
    return max(
        w_infinity(a.to_discrete(), b.to_discrete())
        for a, b in zip(first, second)
    )


def contraction_moduli(mdp, n, iterations=50, policy=None, tol=1e-9):
    """ Iterate the projected operator from all-zero distributions and
        return the successive ratios d(z_k+2, z_k+1) / d(z_k+1, z_k),
        stopping once distances fall below `tol`.
    """
    fractions = fixed_fractions(n)
    z = [QuantileDistribution(fractions, np.zeros(n))
         for _ in range(mdp.n_states)]
    distances = []
    for _ in range(iterations):
        nxt = distributional_bellman_apply(mdp, policy, z, n)
        distances.append(max_w_infinity(nxt, z))
        z = nxt
        if distances[-1] < tol:
            break
    return [
        b / a
        for a, b in zip(distances[:-1], distances[1:])
        if a >= tol and b >= tol
    ]


def tabular_quantile_td(
        mdp, policy, n, lr_schedule=None, steps=200000, rng=None,
        kappa=0.0, start=0):
    """ Tabular quantile TD on sampled transitions.
        Arguments:
            mdp          : Episodic TabularMdp.
            policy       : (S, A) action probabilities, or None for uniform.
            n            : Atoms per state (fixed fractions).
            lr_schedule  : Callable update index -> learning rate.
                           Default 0.1 / (1 + t / 1000).
            steps        : Number of updates.
            rng          : numpy Generator.
            kappa        : Huber threshold; 0 is plain quantile regression,
                           whose fixed point is the exact quantile.
            start        : Episode start state.
        Returns a list of QuantileDistribution, one per state.
    """
    policy = _check_policy(mdp, policy)
    if lr_schedule is None:
        def lr_schedule(t):
            return 0.1 / (1.0 + t / 1000.0)
    rng = rng if rng is not None else np.random.default_rng(0)
    fractions = fixed_fractions(n)
    taus = fractions.midpoints[:, None]
    theta = np.zeros((mdp.n_states, n))

    # Cumulative tables for cheap sampling.
    policy_cdf = np.cumsum(policy, axis=1)
    trans_cdf = np.cumsum(mdp.transitions, axis=2)
    reward_tables = [
        [
            (
                [v for v, _ in support],
                list(itertools.accumulate(p for _, p in support)),
            )
            for support in row
        ]
        for row in mdp.rewards
    ]

    def draw(cdf):
        idx = bisect.bisect_right(cdf, rng.random() * cdf[-1])
        return min(idx, len(cdf) - 1)

    state = start
    for t in range(steps):
        a = draw(policy_cdf[state].tolist())
        values, cdf = reward_tables[state][a]
        r = values[draw(cdf)]
        s2 = draw(trans_cdf[state, a].tolist())
        if mdp.terminal[s2]:
            targets = np.full(n, r)
        else:
            targets = r + mdp.gamma * theta[s2]
        u = targets[None, :] - theta[state][:, None]
        grad = quantile_loss_gradient(u, taus, kappa).mean(axis=1)
        theta[state] += lr_schedule(t) * grad
        state = start if mdp.terminal[s2] else s2
    return [QuantileDistribution(fractions, row) for row in theta]


def finite_diff_check(f, params, analytic_grad, eps=1e-6, indices=None):
    """ Max relative error max|fd - an| / max(1, |an|) between central
        differences of `f` and `analytic_grad`.
        Arguments:
            f             : Callable taking no arguments, reading `params`.
            params        : float ndarray perturbed in place (and restored).
            analytic_grad : Array shaped like `params`.
            eps           : Step size.
            indices       : Optional flat indices to check (default all).
    """
    flat = params.reshape(-1)
    grad = np.asarray(analytic_grad, dtype=np.float64).reshape(-1)
    if grad.size != flat.size:
        raise dcValueError('Gradient has {} entries, params have {}.'.format(
            grad.size,
            flat.size,
        ))
    if indices is None:
        indices = range(flat.size)
    worst = 0.0
    for i in indices:
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        fd = (up - down) / (2 * eps)
        worst = max(worst, abs(fd - grad[i]) / max(1.0, abs(grad[i])))
    return worst


def brute_force_w1_min(d, n, grid_step=0.01):
    """ Exhaustive search over grid values for the n-atom equal-weight
        distribution closest to `d` in W1. Ties go to smaller values.
        Returns (values, w1).
    """
    if grid_step <= 0:
        raise dcValueError('`grid_step` must be > 0.')
    fractions = fixed_fractions(n)
    lo, hi = float(d.values[0]), float(d.values[-1])
    grid = lo + grid_step * np.arange(int(math.floor((hi - lo) / grid_step
                                                     + 1e-9)) + 1)
    if float(grid.size) ** n > MAX_CANDIDATES:
        raise dcResourceError(
            '{}^{} candidates exceed the limit of {}.'.format(
                grid.size,
                n,
                MAX_CANDIDATES,
            )
        )
    # W1 to an equal-weight candidate separates into one cost per slot:
    # cost[i, g] = integral over slot i of |F^-1(w) - grid[g]|.
    levels = np.unique(np.concatenate((d.cdf, fractions.boundaries)))
    levels = levels[np.concatenate(([True], np.diff(levels) > 1e-12))]
    widths = np.diff(levels)
    mids = (levels[:-1] + levels[1:]) / 2
    slots = np.minimum((mids * n).astype(int), n - 1)
    cost = np.zeros((n, grid.size))
    np.add.at(
        cost,
        slots,
        widths[:, None] * np.abs(d.quantiles(mids)[:, None] - grid[None, :]),
    )
    total = cost[0]
    for i in range(1, n):
        total = total[..., None] + cost[i]
    best = np.unravel_index(np.argmin(total), total.shape)
    return grid[list(best)], float(total[best])


def numeric_w1(quantile_fn, fractions):
    """ W1 between a continuous quantile function and its step
        approximation at the midpoints of `fractions`, by quadrature.
    """
    if not isinstance(fractions, FractionSet):
        fractions = FractionSet(fractions)
    total = 0.0
    b = fractions.boundaries
    for lo, hi, mid in zip(b[:-1], b[1:], fractions.midpoints):
        level = quantile_fn(float(mid))
        val, _ = integrate.quad(
            lambda w: abs(quantile_fn(w) - level),
            lo,
            hi,
            points=[mid],
            epsabs=1e-14,
            epsrel=1e-12,
            limit=200,
        )
        total += val
    return total


def fraction_gradient_fd(quantile_fn, fractions, eps=1e-5):
    """ Central differences of numeric_w1() in each interior boundary. """
    b = np.array(fractions.boundaries)
    out = np.zeros(max(b.size - 2, 0))
    for i in range(1, b.size - 1):
        up = b.copy()
        up[i] += eps
        down = b.copy()
        down[i] -= eps
        out[i - 1] = (
            numeric_w1(quantile_fn, up) - numeric_w1(quantile_fn, down)
        ) / (2 * eps)
    return out


class AnalyticQuantileCritic(DistCritic):
    """ Learned-fraction critic whose head is replaced by a known quantile
        function, so the fraction proposal layer can be trained against an
        exact target.
    """
    def __init__(self, quantile_fn, obs_dim=1, act_dim=1, n_atoms=5,
                 rng=None, fpn_lr=1e-4, hidden=(8,)):
        config = CriticConfig('learned', n_atoms=n_atoms, hidden=hidden,
                              n_cos=4)
        super(AnalyticQuantileCritic, self).__init__(
            config, obs_dim, act_dim, rng, fpn_lr=fpn_lr,
        )
        self.quantile_fn = quantile_fn

    def quantile_values(self, features, taus):
        self._cache = None
        return self.quantile_fn(np.atleast_2d(taus))


def _check(name, measured, bound, passed):
    return {
        'name': name,
        'measured': float(measured),
        'bound': float(bound),
        'passed': bool(passed),
    }


def _small_critic(strategy, rng, n_atoms=3, activation='tanh'):
    config = CriticConfig(strategy, n_atoms=n_atoms, hidden=(6, 6),
                          activation=activation, n_cos=8)
    return DistCritic(config, 3, 2, rng)


def _away_from_relu_kinks(critic, boundaries, margin=1e-5):
    """ True if no cosine-embedding unit sits within `margin` of its ReLU
        kink at these fractions.
    """
    if critic.embedding is None:
        return True
    taus = (boundaries[:, :-1] + boundaries[:, 1:]) / 2
    w, b = critic.embedding.parameters()
    pre = critic.embedding.features(taus.reshape(-1)) @ w + b
    return float(np.min(np.abs(pre))) > margin


def _param_indices(param, rng, limit):
    if param.size <= limit:
        return range(param.size)
    return rng.choice(param.size, size=limit, replace=False)


def _mlp_gradient_error(rng, limit):
    sizes = [4] + list(rng.integers(2, 7, size=2)) + [3]
    net = Mlp(sizes, ['tanh', 'tanh', 'identity'], rng)
    inputs = rng.normal(size=(5, 4))
    weights = rng.normal(size=(5, 3))

    def f():
        return float(np.sum(net.forward(inputs) * weights))

    net.forward(inputs)
    grads, _ = net.backward(weights)
    return max(
        finite_diff_check(f, p, g, indices=_param_indices(p, rng, limit))
        for p, g in zip(net.parameters(), grads)
    )


def _critic_gradient_error(strategy, rng, limit):
    while True:
        critic = _small_critic(strategy, rng)
        batch = 4
        states = rng.normal(size=(batch, 3))
        actions = rng.uniform(-1, 1, size=(batch, 2))
        if strategy == 'fixed':
            boundaries = fixed_fractions(critic.n_atoms).boundaries
            boundaries = np.broadcast_to(boundaries, (batch, boundaries.size))
        else:
            boundaries = sample_fraction_array(critic.n_atoms, rng, batch)
        if _away_from_relu_kinks(critic, boundaries):
            break
    targets = rng.normal(scale=2.0, size=(batch, critic.n_atoms))

    def f():
        loss, _ = critic_td_loss(critic, states, actions, targets,
                                 boundaries=boundaries)
        return loss

    _, grads = critic_td_loss(critic, states, actions, targets,
                              boundaries=boundaries)
    return max(
        finite_diff_check(f, p, g, indices=_param_indices(p, rng, limit))
        for p, g in zip(critic.parameters(), grads)
    )


def _actor_gradient_error(base, rng, limit):
    cfg = AgentConfig.for_variant(base, 'fixed', 3, hidden=(6, 6),
                                  activation='tanh', actor_hidden=(5,))
    while True:
        critics = [_small_critic('fixed', rng) for _ in range(2)]
        actor = make_actor(cfg, 3, 2, rng)
        states = rng.normal(size=(4, 3))
        noise = rng.normal(size=(4, 2))
        if base == 'td3':
            break
        actions, _ = actor.sample(states, noise=noise)
        q1 = critics[0].q_values(states, actions)
        q2 = critics[1].q_values(states, actions)
        # The min over critics has a kink where they agree.
        if np.min(np.abs(q1 - q2)) > 1e-4:
            break

    def f():
        loss, _ = actor_objective(cfg, states, actor, critics, noise=noise)
        return loss

    _, grads = actor_objective(cfg, states, actor, critics, noise=noise)
    return max(
        finite_diff_check(f, p, g, indices=_param_indices(p, rng, limit))
        for p, g in zip(actor.parameters(), grads)
    )


def gradient_checks(instances=100, rng=None, limit=12, tol=1e-4):
    """ Analytic against central-difference gradients for networks,
        critic losses and actor objectives.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    records = []
    worst = max(_mlp_gradient_error(rng, limit) for _ in range(instances))
    records.append(_check('gradient/mlp', worst, tol, worst < tol))
    for strategy in ('fixed', 'sampled', 'learned'):
        worst = max(
            _critic_gradient_error(strategy, rng, limit)
            for _ in range(instances)
        )
        records.append(_check('gradient/critic/{}'.format(strategy), worst,
                              tol, worst < tol))
    for base in ('td3', 'sac'):
        worst = max(
            _actor_gradient_error(base, rng, limit)
            for _ in range(instances)
        )
        records.append(_check('gradient/actor/{}'.format(base), worst, tol,
                              worst < tol))
    return records


def projection_check(instances=50, rng=None, grid_step=0.01, max_atoms=3):
    """ project_w1 against the exhaustive grid optimum. """
    rng = rng if rng is not None else np.random.default_rng(1)
    worst = -math.inf
    for _ in range(instances):
        k = int(rng.integers(1, 11))
        d = DiscreteDistribution.from_atoms(
            np.round(rng.uniform(0.0, 1.0, size=k), 2),
            rng.dirichlet(np.ones(k)),
        )
        n = int(rng.integers(1, max_atoms + 1))
        _, best = brute_force_w1_min(d, n, grid_step)
        projected = wasserstein_p(project_w1(d, n).to_discrete(), d)
        worst = max(worst, projected - best)
    return _check('projection_optimality', worst, grid_step,
                  worst <= grid_step)


def tabular_check(steps=200000, rng=None, tol=0.05):
    """ Tabular quantile TD on chain(3, p=0.5, gamma=0.5) with 4 atoms. """
    rng = rng if rng is not None else np.random.default_rng(2)
    mdp = chain_mdp(3, 0.5, gamma=0.5)
    learned = tabular_quantile_td(mdp, None, 4, steps=steps, rng=rng)
    worst = 0.0
    for s in range(mdp.n_states - 1):
        exact, _ = enumerate_return_distribution(mdp, s, 10)
        target = exact.quantiles(learned[s].fractions.midpoints)
        worst = max(worst, float(np.max(np.abs(learned[s].values - target))))
    return _check('tabular_convergence', worst, tol, worst < tol)


def contraction_check(instances=20, rng=None, gamma=0.9, n=5, slack=0.01,
                      share=0.99):
    """ Share of measured moduli at or below gamma + slack on random MDPs.
    """
    rng = rng if rng is not None else np.random.default_rng(3)
    ratios = []
    for _ in range(instances):
        mdp = random_mdp(int(rng.integers(2, 6)), 2, rng, gamma=gamma)
        ratios.extend(contraction_moduli(mdp, n, iterations=60))
    if not ratios:
        return _check('contraction', 1.0, share, True)
    measured = float(np.mean(np.array(ratios) <= gamma + slack))
    return _check('contraction', measured, share, measured >= share)


def _as_scalar(fn):
    def scalar(w):
        return float(fn(w))
    return scalar


def smooth_quantile_fn(rng):
    """ Random strictly increasing smooth quantile function on [0, 1]. """
    a, b, c = rng.uniform(0.5, 3.0, size=3)
    shift = rng.normal()

    def fn(w):
        w = np.asarray(w, dtype=np.float64)
        return shift + a * w + b * w ** 3 + c * np.expm1(w)

    return fn


def fqf_gradient_checks(instances=20, rng=None, tol=1e-5, fpn_steps=100):
    """ The closed-form fraction gradient against quadrature, then strict
        W1 descent of fraction proposal updates on an analytic critic.
    """
    rng = rng if rng is not None else np.random.default_rng(4)
    worst = 0.0
    for _ in range(instances):
        scalar = _as_scalar(smooth_quantile_fn(rng))
        fractions = sample_fractions(int(rng.integers(2, 8)), rng)
        while np.min(fractions.widths) < 1e-3:
            fractions = sample_fractions(fractions.n, rng)
        analytic = w1_fraction_gradient(scalar, fractions)
        numeric = fraction_gradient_fd(scalar, fractions)
        err = np.max(np.abs(analytic - numeric) /
                     np.maximum(1.0, np.abs(analytic)))
        worst = max(worst, float(err))
    records = [_check('fqf_gradient/finite_difference', worst, tol,
                      worst < tol)]
    increases = fpn_descent(fpn_steps, rng)
    records.append(_check('fqf_gradient/fpn_descent', increases, 0,
                          increases == 0))
    return records


def fpn_descent(steps=100, rng=None, n_atoms=5):
    """ Number of fraction proposal updates that failed to lower W1 on the
        quantile function w -> w^4.
    """
    rng = rng if rng is not None else np.random.default_rng(5)

    def fn(w):
        return np.asarray(w, dtype=np.float64) ** 4

    critic = AnalyticQuantileCritic(fn, n_atoms=n_atoms, rng=rng)
    state, action = np.zeros((1, 1)), np.zeros((1, 1))

    def current_w1():
        _, boundaries = critic.propose(critic.features(state, action))
        return numeric_w1(_as_scalar(fn), boundaries[0])

    before = current_w1()
    failures = 0
    for _ in range(steps):
        fpn_update(critic, state, action)
        after = current_w1()
        failures += int(not after < before)
        before = after
    return failures


def degeneracy_checks(batches=100, rng=None, tol=1e-10):
    """ One atom with fixed fractions against scalar TD3/SAC: targets and
        critic losses.
    """
    rng = rng if rng is not None else np.random.default_rng(6)
    records = []
    for base in ('td3', 'sac'):
        cfg = AgentConfig.for_variant(base, 'fixed', 1, hidden=(6, 6),
                                      activation='tanh', actor_hidden=(5,))
        worst = 0.0
        for _ in range(batches):
            critic = DistCritic(cfg.critic, 3, 2, rng)
            targets_net = [DistCritic(cfg.critic, 3, 2, rng)
                           for _ in range(2)]
            actor = make_actor(cfg, 3, 2, rng)
            size = 8
            batch = Batch(
                rng.normal(size=(size, 3)),
                rng.uniform(-1, 1, size=(size, 2)),
                rng.normal(size=size),
                rng.normal(size=(size, 3)),
                (rng.random(size) < 0.2).astype(np.float64),
            )
            seed = int(rng.integers(2 ** 32))
            targets, _ = build_target_distribution(
                cfg, batch, actor, targets_net,
                rng=np.random.default_rng(seed), actor=actor,
            )
            # Scalar reference with the same random draws.
            ref_rng = np.random.default_rng(seed)
            ns = batch.next_states
            if base == 'td3':
                a2 = actor.act(ns)
                a2 = np.clip(a2 + np.clip(
                    ref_rng.normal(0.0, cfg.target_noise, a2.shape),
                    -cfg.target_noise_clip, cfg.target_noise_clip,
                ), -1.0, 1.0)
                bonus = 0.0
            else:
                a2, logp = actor.sample(ns, ref_rng)
                bonus = cfg.ent_coef * logp
            q_next = np.minimum(
                targets_net[0].q_values(ns, a2),
                targets_net[1].q_values(ns, a2),
            )
            y = batch.rewards + (1.0 - batch.dones) * cfg.gamma * \
                (q_next - bonus)
            loss, _ = critic_td_loss(critic, batch.states, batch.actions,
                                     targets)
            u = y - critic.q_values(batch.states, batch.actions)
            huber = np.where(np.abs(u) <= 1.0, 0.5 * u * u, np.abs(u) - 0.5)
            reference = float(np.mean(0.5 * huber))
            worst = max(
                worst,
                float(np.max(np.abs(targets[:, 0] - y))),
                abs(loss - reference),
            )
        records.append(_check('degeneracy/{}'.format(base), worst, tol,
                              worst < tol))
    return records


def verify_suite(fast=False):
    """ Every oracle check, as records of (name, measured, bound, passed).
        `fast` shrinks instance counts for a quick smoke run.
    """
    rng = np.random.default_rng(0)
    scale = 0.1 if fast else 1.0

    def count(n):
        return max(2, int(n * scale))

    records = []
    records.extend(gradient_checks(count(100), rng))
    records.append(projection_check(count(50), rng,
                                    max_atoms=2 if fast else 3))
    records.append(tabular_check(200000, rng))
    records.append(contraction_check(count(20), rng))
    records.extend(fqf_gradient_checks(count(20), rng))
    records.extend(degeneracy_checks(count(100), rng))
    for record in records:
        level = logging.INFO if record['passed'] else logging.WARNING
        log.log(level, '{name}: {measured:.3g} (bound {bound:g}) {status}'
                .format(status='ok' if record['passed'] else 'FAILED',
                        **record))
    return records
