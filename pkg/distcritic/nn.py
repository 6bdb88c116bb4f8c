#!/usr/bin/env python3

""" nn.py
    ...A small differentiable core: feedforward networks with explicit
    reverse-mode gradients, the cosine fraction embedding, the Hadamard
    feature combination, and Adam/RMSprop optimizers.

    Arrays are row-batched: inputs are (batch, features), weights are
    (fan_in, fan_out).
"""

import json
import logging

import numpy as np

from .common_base import (
    BackedUpWriter,
    dcStateError,
    dcValueError,
)

__all__ = [
    'ACTIVATIONS',
    'CosineEmbedding',
    'Mlp',
    'OptimizerState',
    'backward',
    'cosine_embed',
    'forward',
    'hadamard_combine',
    'load_arrays',
    'optimizer_step',
    'polyak_update',
    'save_arrays',
]

log = logging.getLogger(__name__)

ACTIVATIONS = ('identity', 'relu', 'tanh')


def _activate(tag, z):
    if tag == 'tanh':
        return np.tanh(z)
    if tag == 'relu':
        return np.maximum(z, 0.0)
    return z


def _activation_grad(tag, z, a, grad):
    """ Multiply `grad` by the activation derivative at pre-activation `z`
        (with `a` the activation output).
    """
    if tag == 'tanh':
        return grad * (1.0 - a * a)
    if tag == 'relu':
        return grad * (z > 0)
    return grad


class Mlp(object):
    """ Feedforward network. Each layer is (weight, bias, activation tag).
        forward() caches what backward() needs; one forward at a time.
    """
    def __init__(self, sizes, activations, rng=None, weight_scale=1.0):
        """ Arguments:
                sizes        : Layer widths, input first: [in, h1, ..., out].
                activations  : One tag per layer (len(sizes) - 1 of them).
                rng          : numpy Generator for the uniform fan-in init
                               (+-1/sqrt(fan_in)). Zero weights if None.
                weight_scale : Extra factor applied to the init range.
        """
        sizes = [int(s) for s in sizes]
        activations = list(activations)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise dcValueError('Bad layer sizes: {!r}'.format(sizes))
        if len(activations) != len(sizes) - 1:
            raise dcValueError(
                'Expected {} activation tags, got: {}'.format(
                    len(sizes) - 1,
                    len(activations),
                )
            )
        for tag in activations:
            if tag not in ACTIVATIONS:
                raise dcValueError('Unknown activation: {!r}'.format(tag))
        self.sizes = sizes
        self.activations = activations
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                bound = weight_scale / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.weights.append(w)
            self.biases.append(b)
        self._cache = None

    def __repr__(self):
        return 'Mlp({})'.format(' -> '.join(
            ['{}'.format(self.sizes[0])] + [
                '{}:{}'.format(s, tag)
                for s, tag in zip(self.sizes[1:], self.activations)
            ]
        ))

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def backward(self, output_gradient):
        """ Reverse pass for the last forward().
            Returns (grads, input_gradient), `grads` aligned with
            parameters().
        """
        if self._cache is None:
            raise dcStateError('backward() called before forward().')
        inputs, preacts, outputs = self._cache
        grad = np.atleast_2d(np.asarray(output_gradient, dtype=np.float64))
        if grad.shape != outputs[-1].shape:
            raise dcValueError(
                'Output gradient shape {} does not match output {}.'.format(
                    grad.shape,
                    outputs[-1].shape,
                )
            )
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            dz = _activation_grad(
                self.activations[i], preacts[i], outputs[i], grad,
            )
            grads[2 * i] = inputs[i].T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            grad = dz @ self.weights[i].T
        return grads, grad

    def copy(self):
        """ Deep copy without the forward cache. """
        other = Mlp.__new__(Mlp)
        other.sizes = list(self.sizes)
        other.activations = list(self.activations)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def forward(self, inputs):
        """ Affine-then-activation for every layer. Accepts a vector or a
            (batch, in_dim) array; always returns a 2-D array.
        """
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise dcValueError(
                'Expected input width {}, got: {}'.format(
                    self.in_dim,
                    x.shape[1],
                )
            )
        layer_inputs, preacts, outputs = [], [], []
        for w, b, tag in zip(self.weights, self.biases, self.activations):
            layer_inputs.append(x)
            z = x @ w + b
            x = _activate(tag, z)
            preacts.append(z)
            outputs.append(x)
        self._cache = (layer_inputs, preacts, outputs)
        return x

    def manifest(self):
        return {
            'sizes': list(self.sizes),
            'activations': list(self.activations),
        }

    def parameters(self):
        """ [W0, b0, W1, b1, ...], the live arrays. """
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    @classmethod
    def load(cls, path):
        arrays, header = load_arrays(path)
        net = cls(header['sizes'], header['activations'])
        expected = len(net.parameters())
        if len(arrays) != expected:
            raise dcValueError(
                '{} holds {} arrays, the manifest needs {}.'.format(
                    path,
                    len(arrays),
                    expected,
                )
            )
        for dest, src in zip(net.parameters(), arrays):
            if dest.shape != src.shape:
                raise dcValueError(
                    'Shape mismatch loading {}: {} != {}'.format(
                        path, dest.shape, src.shape,
                    )
                )
            dest[...] = src
        return net

    def save(self, path, header=None):
        manifest = self.manifest()
        manifest.update(header or {})
        return save_arrays(path, self.parameters(), manifest)


def forward(net, inputs):
    return net.forward(inputs)


def backward(net, output_gradient):
    return net.backward(output_gradient)


class CosineEmbedding(object):
    """ Fraction embedding ReLU(W [cos(pi i tau)]_{i < n_cos} + b). """
    def __init__(self, embed_dim, n_cos=64, rng=None):
        if n_cos < 1:
            raise dcValueError('`n_cos` must be >= 1, got: {}'.format(n_cos))
        self.n_cos = int(n_cos)
        self.embed_dim = int(embed_dim)
        self.net = Mlp([self.n_cos, self.embed_dim], ['relu'], rng=rng)
        self._indices = np.arange(self.n_cos, dtype=np.float64)

    def __repr__(self):
        return 'CosineEmbedding(n_cos={}, embed_dim={})'.format(
            self.n_cos,
            self.embed_dim,
        )

    def backward(self, output_gradient):
        """ Parameter gradients only; fractions are not differentiated. """
        grads, _ = self.net.backward(output_gradient)
        return grads

    def copy(self):
        other = CosineEmbedding.__new__(CosineEmbedding)
        other.n_cos = self.n_cos
        other.embed_dim = self.embed_dim
        other.net = self.net.copy()
        other._indices = self._indices
        return other

    def features(self, taus):
        """ (len(taus), n_cos) cosine basis values. """
        taus = np.asarray(taus, dtype=np.float64).reshape(-1)
        if np.any((taus < 0) | (taus > 1)) or not np.all(np.isfinite(taus)):
            raise dcValueError('Fractions must be in [0, 1].')
        return np.cos(np.pi * taus[:, None] * self._indices[None, :])

    def forward(self, taus):
        return self.net.forward(self.features(taus))

    def parameters(self):
        return self.net.parameters()


def cosine_embed(embedding, taus):
    return embedding.forward(taus)


def hadamard_combine(features, embedding_row):
    """ Element-wise product of equally shaped feature arrays. """
    features = np.asarray(features, dtype=np.float64)
    embedding_row = np.asarray(embedding_row, dtype=np.float64)
    if features.shape != embedding_row.shape:
        raise dcValueError(
            'Cannot combine shapes {} and {}.'.format(
                features.shape,
                embedding_row.shape,
            )
        )
    return features * embedding_row


class OptimizerState(object):
    """ Adam (bias-corrected) or RMSprop state for a list of parameters.
        Defaults: Adam beta1 0.9, beta2 0.999, eps 1e-8; RMSprop alpha 0.95,
        eps 1e-5.
    """
    variants = ('adam', 'rmsprop')

    def __init__(
            self, params, variant='adam', lr=1e-3,
            beta1=0.9, beta2=0.999, alpha=0.95, eps=None):
        variant = str(variant).lower()
        if variant not in self.variants:
            raise dcValueError('Unknown optimizer: {!r}'.format(variant))
        if lr < 0:
            raise dcValueError('Learning rate must be >= 0, got: {}'.format(
                lr,
            ))
        self.variant = variant
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.alpha = alpha
        if eps is None:
            eps = 1e-8 if variant == 'adam' else 1e-5
        self.eps = eps
        self.step_count = 0
        self.first = [np.zeros_like(p) for p in params]
        self.second = [np.zeros_like(p) for p in params]

    def __repr__(self):
        return 'OptimizerState({}, lr={:g}, steps={})'.format(
            self.variant,
            self.lr,
            self.step_count,
        )

    def arrays(self):
        return self.first + self.second

    def header(self):
        return {
            'variant': self.variant,
            'lr': self.lr,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'alpha': self.alpha,
            'eps': self.eps,
            'step_count': self.step_count,
        }

    def restore(self, arrays, header):
        n = len(self.first)
        if len(arrays) != 2 * n:
            raise dcValueError(
                'Optimizer state has {} arrays, need {}.'.format(
                    len(arrays),
                    2 * n,
                )
            )
        variant = header.get('variant', self.variant)
        if variant != self.variant:
            raise dcValueError(
                'Cannot restore {} state into a {} optimizer.'.format(
                    variant,
                    self.variant,
                )
            )
        for dest, src in zip(self.first + self.second, arrays):
            dest[...] = src
        for key in ('lr', 'beta1', 'beta2', 'alpha', 'eps'):
            saved = float(header.get(key, getattr(self, key)))
            if saved != getattr(self, key):
                log.debug('Restored optimizer {} = {!r} (was {!r}).'.format(
                    key,
                    saved,
                    getattr(self, key),
                ))
            setattr(self, key, saved)
        self.step_count = int(header.get('step_count', 0))

    def step(self, params, grads):
        """ Update `params` in place. """
        if len(params) != len(self.first) or len(grads) != len(params):
            raise dcValueError('Optimizer got {} params / {} grads for {}.'
                               .format(len(params), len(grads),
                                       len(self.first)))
        for p, g, m in zip(params, grads, self.first):
            if p.shape != g.shape or p.shape != m.shape:
                raise dcValueError('Shape mismatch: param {} grad {}.'.format(
                    p.shape,
                    np.shape(g),
                ))
        self.step_count += 1
        if self.variant == 'adam':
            self._adam(params, grads)
        else:
            self._rmsprop(params, grads)
        return params

    def _adam(self, params, grads):
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.first, self.second):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def _rmsprop(self, params, grads):
        for p, g, v in zip(params, grads, self.second):
            v *= self.alpha
            v += (1.0 - self.alpha) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


def optimizer_step(state, params, grads):
    return state.step(params, grads)


def polyak_update(target_params, online_params, tau):
    """ target <- (1 - tau) * target + tau * online, in place. """
    for t, p in zip(target_params, online_params):
        t[...] = (1.0 - tau) * t + tau * p


def save_arrays(path, arrays, header=None):
    """ Write `path`.bin (little-endian float64, arrays concatenated in
        order) and `path`.json (shapes plus `header`).
        Returns the blob file name.
    """
    path = str(path)
    manifest = dict(header or {})
    manifest['shapes'] = [list(np.shape(a)) for a in arrays]
    blob = b''.join(
        np.ascontiguousarray(a, dtype='<f8').tobytes() for a in arrays
    )
    with BackedUpWriter('{}.bin'.format(path), mode='wb') as f:
        f.write(blob)
    with BackedUpWriter('{}.json'.format(path)) as f:
        json.dump(manifest, f, indent=4, sort_keys=True)
    log.debug('Saved {} arrays to {}.bin'.format(len(arrays), path))
    return '{}.bin'.format(path)


def load_arrays(path):
    """ Inverse of save_arrays(). Returns (arrays, header). """
    path = str(path)
    with open('{}.json'.format(path), 'r') as f:
        manifest = json.load(f)
    flat = np.fromfile('{}.bin'.format(path), dtype='<f8')
    shapes = [tuple(s) for s in manifest.pop('shapes')]
    expected = sum(int(np.prod(s)) for s in shapes)
    if flat.size != expected:
        raise dcValueError(
            'Blob {}.bin holds {} values, manifest expects {}.'.format(
                path,
                flat.size,
                expected,
            )
        )
    arrays = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(flat[offset:offset + size].astype(np.float64)
                      .reshape(shape))
        offset += size
    return arrays, manifest
