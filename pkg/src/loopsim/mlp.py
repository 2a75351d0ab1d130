"""Minimal reverse-mode MLP and Adam optimizer.

Fully connected network, tanh on hidden layers, linear output. forward()
returns the activations needed by backward(), which produces parameter
gradients and the gradient with respect to the input (needed when a loss
differentiates one network through another, e.g. an actor through a critic).
All math is float64 numpy; gradients are exact and checked against central
finite differences in the tests.
"""
from __future__ import annotations

import math

import numpy as np


class Mlp:
    def __init__(self, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("Mlp: need at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for nin, nout in zip(self.sizes[:-1], self.sizes[1:]):
            bound = math.sqrt(6.0 / (nin + nout))
            self.weights.append(rng.uniform(-bound, bound, size=(nin, nout)))
            self.biases.append(np.zeros(nout))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output (B, n_out), activations cache for backward)."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list[np.ndarray], gy: np.ndarray
                 ) -> tuple[list[np.ndarray], np.ndarray]:
        """Backpropagate dL/d output.

        Returns (grads, gx): grads alternates [gW0, gb0, gW1, gb1, ...] in
        parameters() order; gx is dL/d input with the batch dimension kept.
        """
        g = np.atleast_2d(np.asarray(gy, dtype=float))
        grads: list[np.ndarray] = [None] * (2 * self.n_layers)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                out = acts[i + 1]
                g = g * (1.0 - out * out)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, vec: np.ndarray) -> None:
        params = self.parameters()
        want = sum(p.size for p in params)
        if len(vec) != want:
            raise ValueError(f"set_flat: vector length {len(vec)}, expected {want}")
        i = 0
        for p in params:
            n = p.size
            p[...] = np.asarray(vec[i:i + n], dtype=float).reshape(p.shape)
            i += n

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.weights = [W.copy() for W in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


class Adam:
    """Standard Adam with bias correction, updating parameters in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, in place."""
    for tp, sp in zip(target.parameters(), source.parameters()):
        tp[...] = tau * sp + (1.0 - tau) * tp


def numeric_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, one entry at a time."""
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g
