#!/usr/bin/env python3
""" test_nn.py
    Unit tests for networks, embeddings and optimizers.
"""

import os
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from .common_base import (
    dcStateError,
    dcValueError,
)
from .nn import (
    CosineEmbedding,
    Mlp,
    OptimizerState,
    hadamard_combine,
    load_arrays,
    polyak_update,
    save_arrays,
)
from .oracle import finite_diff_check


class MlpTests(unittest.TestCase):
    def test_identity_layer(self):
        """ An identity weight matrix with zero bias is a no-op. """
        net = Mlp([3, 3], ['identity'])
        net.weights[0][...] = np.eye(3)
        inputs = np.array([[1.0, -2.0, 0.5]])
        assert_array_equal(net.forward(inputs), inputs)

    def test_tanh_at_zero(self):
        net = Mlp([4, 2], ['tanh'], np.random.default_rng(0))
        net.biases[0][...] = 0.0
        assert_array_equal(net.forward(np.zeros((1, 4))), np.zeros((1, 2)))

    def test_reference_forward(self):
        """ forward() should match a plain matrix-multiply script. """
        net = Mlp([3, 5, 2], ['tanh', 'identity'], np.random.default_rng(42))
        x = np.ones((1, 3))
        w0, b0, w1, b1 = [p.copy() for p in net.parameters()]
        expected = np.zeros(2)
        hidden = [
            np.tanh(sum(x[0, i] * w0[i, j] for i in range(3)) + b0[j])
            for j in range(5)
        ]
        for k in range(2):
            expected[k] = sum(hidden[j] * w1[j, k] for j in range(5)) + b1[k]
        assert_allclose(net.forward(x)[0], expected, rtol=0, atol=1e-12)

    def test_init_range(self):
        """ Weights should be uniform within +-1/sqrt(fan_in). """
        net = Mlp([16, 8], ['relu'], np.random.default_rng(1))
        self.assertLessEqual(np.max(np.abs(net.weights[0])), 0.25)
        self.assertLessEqual(np.max(np.abs(net.biases[0])), 0.25)
        zeros = Mlp([16, 8], ['relu'])
        assert_array_equal(zeros.weights[0], 0.0)

    def test_invalid(self):
        with self.assertRaises(dcValueError):
            Mlp([3], [])
        with self.assertRaises(dcValueError):
            Mlp([3, 2], ['tanh', 'tanh'])
        with self.assertRaises(dcValueError):
            Mlp([3, 2], ['sigmoid'])
        net = Mlp([3, 2], ['tanh'])
        with self.assertRaises(dcStateError):
            net.backward(np.zeros((1, 2)))
        with self.assertRaises(dcValueError):
            net.forward(np.zeros((1, 4)))
        net.forward(np.zeros((2, 3)))
        with self.assertRaises(dcValueError):
            net.backward(np.zeros((1, 2)))

    def test_zero_output_gradient(self):
        net = Mlp([3, 4, 2], ['tanh', 'identity'], np.random.default_rng(2))
        net.forward(np.random.default_rng(3).normal(size=(5, 3)))
        grads, dinputs = net.backward(np.zeros((5, 2)))
        for g in grads:
            assert_array_equal(g, 0.0)
        assert_array_equal(dinputs, 0.0)

    def test_linear_gradient(self):
        """ For a single linear layer and loss = output, dW = input. """
        net = Mlp([3, 1], ['identity'], np.random.default_rng(4))
        x = np.array([[0.5, -1.0, 2.0]])
        net.forward(x)
        grads, _ = net.backward(np.ones((1, 1)))
        assert_array_equal(grads[0], x.T)
        assert_array_equal(grads[1], [1.0])

    def test_finite_differences(self):
        """ backward() should match central differences in every layer. """
        rng = np.random.default_rng(5)
        for acts in (['tanh', 'tanh', 'identity'], ['tanh', 'relu', 'tanh']):
            net = Mlp([4, 6, 5, 3], acts, rng)
            inputs = rng.normal(size=(7, 4))
            weights = rng.normal(size=(7, 3))

            def f():
                return float(np.sum(net.forward(inputs) * weights))

            net.forward(inputs)
            # ReLU kinks make central differences meaningless nearby.
            _, preacts, _ = net._cache
            if 'relu' in acts:
                self.assertGreater(np.min(np.abs(preacts[1])), 1e-5)
            grads, dinputs = net.backward(weights)
            for p, g in zip(net.parameters(), grads):
                self.assertLess(finite_diff_check(f, p, g), 1e-5)
            self.assertLess(finite_diff_check(f, inputs, dinputs), 1e-5)

    def test_copy(self):
        net = Mlp([2, 3], ['tanh'], np.random.default_rng(6))
        other = net.copy()
        other.weights[0] += 1.0
        self.assertFalse(np.allclose(net.weights[0], other.weights[0]))

    def test_save_load(self):
        """ save()/load() should restore architecture and weights. """
        net = Mlp([3, 4, 2], ['relu', 'identity'], np.random.default_rng(7))
        with tempfile.TemporaryDirectory(prefix='distcritic.') as tmpdir:
            path = os.path.join(tmpdir, 'net')
            blob = net.save(path)
            self.assertTrue(os.path.exists(blob))
            self.assertTrue(os.path.exists(path + '.json'))
            loaded = Mlp.load(path)
            self.assertEqual(loaded.sizes, net.sizes)
            self.assertEqual(loaded.activations, net.activations)
            for a, b in zip(loaded.parameters(), net.parameters()):
                assert_array_equal(a, b)

    def test_load_array_count(self):
        """ load() rejects a blob with missing or extra arrays. """
        net = Mlp([3, 4, 2], ['relu', 'identity'], np.random.default_rng(7))
        params = net.parameters()
        with tempfile.TemporaryDirectory(prefix='distcritic.') as tmpdir:
            path = os.path.join(tmpdir, 'net')
            for arrays in (params[:-1], params + [np.zeros(2)]):
                save_arrays(path, arrays, net.manifest())
                with self.assertRaises(dcValueError):
                    Mlp.load(path)

    def test_truncated_blob(self):
        """ A blob that disagrees with its manifest is rejected. """
        with tempfile.TemporaryDirectory(prefix='distcritic.') as tmpdir:
            path = os.path.join(tmpdir, 'arrays')
            save_arrays(path, [np.ones((2, 2)), np.arange(3.0)], {'k': 1})
            arrays, header = load_arrays(path)
            self.assertEqual(header, {'k': 1})
            assert_array_equal(arrays[1], [0.0, 1.0, 2.0])
            with open(path + '.bin', 'rb') as f:
                blob = f.read()
            with open(path + '.bin', 'wb') as f:
                f.write(blob[:-8])
            with self.assertRaises(dcValueError):
                load_arrays(path)


class EmbeddingTests(unittest.TestCase):
    def setUp(self):
        self.embedding = CosineEmbedding(4, n_cos=6,
                                         rng=np.random.default_rng(0))

    def test_features(self):
        """ Cosine features at tau = 0, 1 and 0.5. """
        feats = self.embedding.features([0.0, 1.0, 0.5])
        assert_array_equal(feats[0], np.ones(6))
        assert_allclose(feats[1], [1, -1, 1, -1, 1, -1], atol=1e-12)
        assert_allclose(feats[2], [1, 0, -1, 0, 1, 0], atol=1e-12)

    def test_out_of_range(self):
        for tau in (-0.1, 1.1, float('nan')):
            with self.assertRaises(dcValueError):
                self.embedding.features([tau])

    def test_forward(self):
        """ The embedding is a ReLU layer on the cosine features. """
        out = self.embedding.forward(np.linspace(0, 1, 5))
        self.assertEqual(out.shape, (5, 4))
        self.assertTrue(np.all(out >= 0))

    def test_hadamard_combine(self):
        assert_array_equal(hadamard_combine([1.0, 2.0], [3.0, 4.0]),
                           [3.0, 8.0])
        features = np.array([0.5, -2.0])
        assert_array_equal(hadamard_combine(features, np.ones(2)), features)
        assert_array_equal(hadamard_combine(features, np.zeros(2)), 0.0)
        with self.assertRaises(dcValueError):
            hadamard_combine([1.0, 2.0], [1.0])


class OptimizerTests(unittest.TestCase):
    def test_adam_zero_gradient(self):
        param = np.array([1.0, -2.0])
        opt = OptimizerState([param], lr=0.1)
        opt.step([param], [np.zeros(2)])
        assert_array_equal(param, [1.0, -2.0])

    def test_adam_first_step(self):
        """ The bias-corrected first Adam step is about -lr * sign(g). """
        param = np.zeros(3)
        opt = OptimizerState([param], lr=0.01)
        opt.step([param], [np.array([2.0, -0.5, 1e-3])])
        assert_allclose(param, [-0.01, 0.01, -0.01], rtol=1e-4)

    def test_rmsprop_accumulator(self):
        """ A constant gradient drives the accumulator to g^2 geometrically.
        """
        param = np.zeros(1)
        g = np.array([3.0])
        opt = OptimizerState([param], variant='rmsprop', lr=0.0)
        self.assertEqual(opt.alpha, 0.95)
        self.assertEqual(opt.eps, 1e-5)
        for k in range(1, 51):
            opt.step([param], [g])
            assert_allclose(opt.second[0], (1 - 0.95 ** k) * 9.0)
        assert_array_equal(param, 0.0)

    def test_mismatch(self):
        param = np.zeros(2)
        opt = OptimizerState([param])
        with self.assertRaises(dcValueError):
            opt.step([param], [np.zeros(3)])
        with self.assertRaises(dcValueError):
            opt.step([param, param], [np.zeros(2)])
        with self.assertRaises(dcValueError):
            OptimizerState([param], variant='sgd')
        with self.assertRaises(dcValueError):
            OptimizerState([param], lr=-1.0)

    def test_restore(self):
        """ restore() should bring back moments and the step count. """
        param = np.zeros(2)
        opt = OptimizerState([param], lr=0.1)
        for _ in range(3):
            opt.step([param], [np.array([1.0, -1.0])])
        fresh = OptimizerState([np.zeros(2)], lr=0.1)
        fresh.restore(opt.arrays(), opt.header())
        self.assertEqual(fresh.step_count, 3)
        for a, b in zip(fresh.arrays(), opt.arrays()):
            assert_array_equal(a, b)
        with self.assertRaises(dcValueError):
            fresh.restore(opt.arrays()[:1], opt.header())

    def test_restore_hyperparameters(self):
        """ Saved rates come back with the moments; variants must match. """
        param = np.zeros(2)
        opt = OptimizerState([param], variant='rmsprop', lr=0.01, alpha=0.9)
        opt.step([param], [np.array([1.0, -1.0])])
        fresh = OptimizerState([np.zeros(2)], variant='rmsprop', lr=0.5)
        fresh.restore(opt.arrays(), opt.header())
        self.assertEqual(fresh.lr, 0.01)
        self.assertEqual(fresh.alpha, 0.9)
        self.assertEqual(fresh.eps, 1e-5)
        adam = OptimizerState([np.zeros(2)])
        with self.assertRaises(dcValueError):
            adam.restore(opt.arrays(), opt.header())

    def test_polyak_update(self):
        """ target <- (1 - tau) target + tau online, in place. """
        target = [np.array([0.0, 4.0])]
        online = [np.array([2.0, 0.0])]
        polyak_update(target, online, 0.25)
        assert_array_equal(target[0], [0.5, 3.0])
        polyak_update(target, online, 1.0)
        assert_array_equal(target[0], online[0])


if __name__ == '__main__':
    unittest.main()
