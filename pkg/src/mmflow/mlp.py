"""Fully connected network with hand-written reverse mode.

Parameters live in one flat float64 vector; each layer's weight and bias are
views into it, so optimisers and checkpoints only ever see the flat array.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = ["MLP", "Adam"]


def _silu(z):
    s = expit(z)
    return z * s, s


def _tanh(z):
    a = np.tanh(z)
    return a, a


ACTIVATIONS = {"silu", "tanh"}


class MLP:
    def __init__(self, sizes, activation="silu", params=None, rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.shapes = [(a, b) for a, b in zip(self.sizes[:-1], self.sizes[1:])]
        n = sum(a * b + b for a, b in self.shapes)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = np.empty(n)
            self.params = params
            for W, b in self.layers():
                W[...] = rng.standard_normal(W.shape) * np.sqrt(1.0 / W.shape[0])
                b[...] = 0.0
        else:
            params = np.array(params, dtype=float)
            if params.shape != (n,):
                raise ValueError(f"expected {n} parameters, got {params.shape}")
            self.params = params

    @property
    def n_params(self):
        return self.params.size

    def layers(self, flat=None):
        flat = self.params if flat is None else flat
        out, off = [], 0
        for a, b in self.shapes:
            W = flat[off:off + a * b].reshape(a, b)
            off += a * b
            out.append((W, flat[off:off + b]))
            off += b
        return out

    def _act(self, z):
        return _silu(z) if self.activation == "silu" else _tanh(z)

    def _dact(self, z, aux):
        if self.activation == "silu":
            return aux * (1.0 + z * (1.0 - aux))
        return 1.0 - aux**2

    def forward(self, inp, keep=False):
        h = inp
        cache = []
        layers = self.layers()
        for idx, (W, b) in enumerate(layers):
            z = h @ W + b
            if idx == len(layers) - 1:
                if keep:
                    cache.append((h, None, None))
                return (z, cache) if keep else z
            a, aux = self._act(z)
            if keep:
                cache.append((h, z, aux))
            h = a

    def backward(self, cache, dout, need_params=True):
        """Return ``(d params, d inputs)`` given the cotangent of the output."""
        layers = self.layers()
        grad = np.zeros_like(self.params) if need_params else None
        glayers = self.layers(grad) if need_params else None
        delta = dout
        for idx in range(len(layers) - 1, -1, -1):
            h, _, _ = cache[idx]
            W, _ = layers[idx]
            if need_params:
                gW, gb = glayers[idx]
                gW[...] = h.T @ delta
                gb[...] = delta.sum(axis=0)
            dh = delta @ W.T
            if idx > 0:
                _, z, aux = cache[idx - 1]
                delta = dh * self._dact(z, aux)
        return grad, dh


class Adam:
    def __init__(self, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        params -= lr * mhat / (np.sqrt(vhat) + self.eps)
        return params
