#!/usr/bin/env python3
""" test_critics.py
    Unit tests for the distributional critics.
"""

import math
import os
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from .common_base import (
    dcStateError,
    dcValueError,
)
from .critics import (
    CriticConfig,
    DistCritic,
    critic_td_loss,
    fpn_update,
    predict,
)
from .distcore import (
    QuantileDistribution,
    fixed_fractions,
    sample_fraction_array,
)
from .oracle import (
    AnalyticQuantileCritic,
    _critic_gradient_error,
)


def small_critic(strategy, n_atoms=3, seed=0, **kwargs):
    kwargs.setdefault('hidden', (6, 6))
    kwargs.setdefault('n_cos', 8)
    config = CriticConfig(strategy, n_atoms=n_atoms, **kwargs)
    return DistCritic(config, 3, 2, np.random.default_rng(seed))


def small_batch(size=4, seed=1):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(size, 3)), rng.uniform(-1, 1, size=(size, 2))


class CriticConfigTests(unittest.TestCase):
    def test_invalid(self):
        bad = (
            {'strategy': 'random'},
            {'n_atoms': 0},
            {'kappa': 0.0},
            {'hidden': ()},
            {'activation': 'sigmoid'},
            {'n_cos': 0},
        )
        for kwargs in bad:
            with self.assertRaises(dcValueError, msg=repr(kwargs)):
                CriticConfig(**kwargs)

    def test_embed_dim(self):
        """ embed_dim replaces the width of the first hidden layer. """
        critic = small_critic('sampled', embed_dim=4)
        self.assertEqual(critic.trunk.sizes, [5, 4])
        self.assertEqual(critic.embedding.embed_dim, 4)
        self.assertEqual(critic.head.sizes, [4, 6, 1])


class ForwardTests(unittest.TestCase):
    def test_shapes(self):
        """ Every strategy returns (B, N) values and (B, N + 1) fractions. """
        states, actions = small_batch()
        rng = np.random.default_rng(2)
        for strategy in ('fixed', 'sampled', 'learned'):
            critic = small_critic(strategy, n_atoms=5)
            values, boundaries = critic.forward(states, actions, rng=rng)
            self.assertEqual(values.shape, (4, 5), msg=strategy)
            self.assertEqual(boundaries.shape, (4, 6), msg=strategy)
            assert_array_equal(boundaries[:, 0], 0.0)
            assert_array_equal(boundaries[:, -1], 1.0)
            self.assertTrue(np.all(np.diff(boundaries, axis=1) > 0))

    def test_fixed_single_atom(self):
        """ One fixed atom is an expected-value critic at fraction 0.5. """
        critic = small_critic('fixed', n_atoms=1)
        dist = predict(critic, np.zeros(3), np.zeros(2))
        self.assertIsInstance(dist, QuantileDistribution)
        assert_array_equal(dist.fractions.midpoints, [0.5])

    def test_fixed_fractions_only(self):
        """ The fixed strategy should refuse other fraction sets. """
        critic = small_critic('fixed', n_atoms=3)
        states, actions = small_batch()
        values, boundaries = critic.forward(states, actions)
        assert_array_equal(boundaries[0], fixed_fractions(3).boundaries)
        same, _ = critic.forward(states, actions, fixed_fractions(3))
        assert_array_equal(same, values)
        with self.assertRaises(dcValueError):
            critic.forward(states, actions, [0.0, 0.2, 0.7, 1.0])
        with self.assertRaises(dcValueError):
            critic.forward(states, actions, fixed_fractions(4))

    def test_fixed_repeatable(self):
        critic = small_critic('fixed')
        states, actions = small_batch()
        first, b1 = critic.forward(states, actions)
        second, b2 = critic.forward(states, actions)
        assert_array_equal(first, second)
        assert_array_equal(b1, b2)

    def test_sampled_fractions(self):
        """ Sampled fractions need an rng and vary between draws. """
        critic = small_critic('sampled')
        states, actions = small_batch()
        with self.assertRaises(dcValueError):
            critic.forward(states, actions)
        rng = np.random.default_rng(3)
        _, first = critic.forward(states, actions, rng=rng)
        _, second = critic.forward(states, actions, rng=rng)
        self.assertFalse(np.array_equal(first, second))

    def test_explicit_fractions(self):
        """ Given fractions override the strategy's own choice. """
        critic = small_critic('sampled')
        states, actions = small_batch()
        boundaries = sample_fraction_array(3, np.random.default_rng(4), 4)
        values, used = critic.forward(states, actions, boundaries)
        assert_array_equal(used, boundaries)
        again, _ = critic.forward(states, actions, boundaries)
        assert_array_equal(values, again)

    def test_learned_zero_fpn(self):
        """ A zero fraction proposal layer proposes equidistant fractions. """
        critic = small_critic('learned', n_atoms=4)
        for p in critic.fpn_parameters():
            p[...] = 0.0
        states, actions = small_batch()
        _, boundaries = critic.forward(states, actions)
        assert_allclose(
            boundaries,
            np.broadcast_to([0.0, 0.25, 0.5, 0.75, 1.0], (4, 5)),
        )

    def test_learned_saturated_fpn(self):
        """ A saturated proposal layer still gives a valid distribution. """
        critic = small_critic('learned', n_atoms=3)
        for p in critic.fpn_parameters():
            p[...] = 0.0
        critic.fpn.biases[-1][...] = [800.0, 0.0, 0.0]
        states, actions = small_batch(size=1)
        q = predict(critic, states[0], actions[0])
        self.assertIsInstance(q, QuantileDistribution)
        self.assertTrue(np.all(q.fractions.widths > 0))
        self.assertGreater(q.fractions.widths[0], 0.999)

    def test_q_values(self):
        """ With equidistant fractions Q is the plain mean of the values. """
        critic = small_critic('fixed', n_atoms=4)
        states, actions = small_batch()
        values, _ = critic.forward(states, actions)
        assert_allclose(critic.q_values(states, actions),
                        values.mean(axis=1))

    def test_quantile_values_fixed(self):
        critic = small_critic('fixed')
        features = critic.features(*small_batch())
        with self.assertRaises(dcStateError):
            critic.quantile_values(features, np.full((4, 2), 0.5))

    def test_input_widths(self):
        critic = small_critic('fixed')
        with self.assertRaises(dcValueError):
            critic.forward(np.zeros((2, 4)), np.zeros((2, 2)))
        with self.assertRaises(dcValueError):
            critic.forward(np.zeros((2, 3)), np.zeros((3, 2)))
        with self.assertRaises(dcStateError):
            small_critic('fixed').backward(np.zeros((1, 3)))

    def test_copy(self):
        """ Copies are independent of the original. """
        critic = small_critic('learned')
        other = critic.copy()
        other.trunk.weights[0] += 1.0
        other.fpn.weights[0] += 1.0
        self.assertFalse(np.allclose(critic.trunk.weights[0],
                                     other.trunk.weights[0]))
        self.assertFalse(np.allclose(critic.fpn.weights[0],
                                     other.fpn.weights[0]))
        self.assertEqual(other.fpn_optimizer.lr, critic.fpn_optimizer.lr)

    def test_save_load(self):
        """ A saved critic should reload with identical predictions. """
        critic = small_critic('learned', n_atoms=4)
        states, actions = small_batch()
        values, boundaries = critic.forward(states, actions)
        with tempfile.TemporaryDirectory(prefix='distcritic.') as tmpdir:
            path = os.path.join(tmpdir, 'critic')
            critic.save(path)
            loaded = DistCritic.load(path)
        self.assertEqual(loaded.strategy, 'learned')
        self.assertEqual(loaded.config, critic.config)
        loaded_values, loaded_boundaries = loaded.forward(states, actions)
        assert_array_equal(loaded_values, values)
        assert_array_equal(loaded_boundaries, boundaries)
        with self.assertRaises(dcValueError):
            loaded.set_arrays(critic.parameters())


class LossTests(unittest.TestCase):
    def test_zero_loss(self):
        """ A constant critic against its own value has no loss or gradient.
        """
        critic = small_critic('fixed', n_atoms=3)
        head_w, head_b = critic.head.parameters()[-2:]
        head_w[...] = 0.0
        head_b[...] = 1.5
        states, actions = small_batch()
        loss, grads = critic_td_loss(critic, states, actions,
                                     np.full((4, 3), 1.5))
        self.assertEqual(loss, 0.0)
        for g in grads:
            assert_array_equal(g, 0.0)

    def test_bad_targets(self):
        critic = small_critic('fixed')
        states, actions = small_batch()
        with self.assertRaises(dcValueError):
            critic_td_loss(critic, states, actions, np.zeros((3, 3)))
        with self.assertRaises(dcValueError):
            critic_td_loss(critic, states, actions, np.zeros((4, 0)))

    def test_loss_decreases(self):
        """ Gradient steps should lower the loss on a fixed batch. """
        critic = small_critic('sampled', n_atoms=4)
        states, actions = small_batch()
        targets = np.random.default_rng(5).normal(size=(4, 4))
        boundaries = sample_fraction_array(4, np.random.default_rng(6), 4)
        before, _ = critic_td_loss(critic, states, actions, targets,
                                   boundaries=boundaries)
        for _ in range(20):
            _, grads = critic_td_loss(critic, states, actions, targets,
                                      boundaries=boundaries)
            for p, g in zip(critic.parameters(), grads):
                p -= 0.05 * g
        after, _ = critic_td_loss(critic, states, actions, targets,
                                  boundaries=boundaries)
        self.assertLess(after, before)

    def test_finite_differences(self):
        """ critic_td_loss() gradients match central differences. """
        rng = np.random.default_rng(7)
        for strategy in ('fixed', 'sampled', 'learned'):
            for _ in range(5):
                self.assertLess(
                    _critic_gradient_error(strategy, rng, limit=8),
                    1e-4,
                    msg=strategy,
                )


class FractionProposalTests(unittest.TestCase):
    def test_not_learned(self):
        states, actions = small_batch()
        for strategy in ('fixed', 'sampled'):
            with self.assertRaises(dcStateError):
                fpn_update(small_critic(strategy), states, actions)
            with self.assertRaises(dcStateError):
                small_critic(strategy).propose(np.zeros((1, 6)))

    def test_constant_quantile_fn(self):
        """ A flat quantile function leaves the proposal layer untouched. """
        critic = AnalyticQuantileCritic(
            lambda taus: np.full(np.shape(taus), 2.0),
            n_atoms=4,
            rng=np.random.default_rng(8),
        )
        before = [p.copy() for p in critic.fpn_parameters()]
        proxy = fpn_update(critic, np.ones((2, 1)), np.zeros((2, 1)))
        self.assertEqual(proxy, 0.0)
        for a, b in zip(before, critic.fpn_parameters()):
            assert_array_equal(a, b)

    def test_uniform_quantile_fn(self):
        """ For F^-1(w) = w the interior boundary moves towards 0.5. """
        critic = AnalyticQuantileCritic(
            lambda taus: np.asarray(taus, dtype=np.float64),
            n_atoms=2,
            rng=np.random.default_rng(9),
            fpn_lr=1e-3,
        )
        weights, bias = critic.fpn_parameters()
        weights[...] = 0.0
        bias[...] = [math.log(0.2), math.log(0.8)]
        state, action = np.ones((1, 1)), np.zeros((1, 1))

        def interior():
            _, boundaries = critic.propose(critic.features(state, action))
            return float(boundaries[0, 1])

        previous = interior()
        self.assertAlmostEqual(previous, 0.2)
        for _ in range(20):
            fpn_update(critic, state, action)
            current = interior()
            self.assertGreater(current, previous)
            self.assertLess(current, 0.5)
            previous = current

    def test_only_fpn_changes(self):
        """ fpn_update() must not touch the critic's own parameters. """
        critic = small_critic('learned')
        before = [p.copy() for p in critic.parameters()]
        fpn_before = [p.copy() for p in critic.fpn_parameters()]
        critic.fpn_optimizer.lr = 1e-2
        fpn_update(critic, *small_batch())
        for a, b in zip(before, critic.parameters()):
            assert_array_equal(a, b)
        changed = any(
            not np.array_equal(a, b)
            for a, b in zip(fpn_before, critic.fpn_parameters())
        )
        self.assertTrue(changed)


if __name__ == '__main__':
    unittest.main()
