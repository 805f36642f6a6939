"""Dense networks with manual backprop and an Adam optimizer.

The actor and critic are small multi-layer perceptrons; at this scale plain
numpy matmuls beat any ML runtime once process startup and dispatch are
counted, and keeping the math in-repo makes training bit-reproducible from
a seed.
"""

from __future__ import annotations

import numpy as np

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda x: np.maximum(x, 0.0), lambda a: (a > 0.0).astype(a.dtype)),
}


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.normal(size=(max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


class DenseNet:
    """MLP with caching forward and exact backward passes."""

    def __init__(self, sizes, rng: np.random.Generator, activation: str = "tanh",
                 out_gain: float = 0.01):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            gain = out_gain if i == n_layers - 1 else np.sqrt(2.0)
            self.weights.append(orthogonal(rng, (self.sizes[i], self.sizes[i + 1]), gain))
            self.biases.append(np.zeros(self.sizes[i + 1]))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_params(self, params) -> None:
        it = iter(params)
        for i in range(len(self.weights)):
            self.weights[i] = next(it)
            self.biases[i] = next(it)

    def forward(self, x: np.ndarray, need_cache: bool = False):
        act, _ = _ACTIVATIONS[self.activation]
        cache = [x] if need_cache else None
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = act(h)
            if need_cache:
                cache.append(h)
        return (h, cache) if need_cache else h

    def backward(self, cache, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients for a cached forward pass (summed over batch)."""
        _, dact = _ACTIVATIONS[self.activation]
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * dact(cache[i])
        return grads


class Adam:
    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


class GaussianPolicy:
    """Diagonal-Gaussian policy: MLP mean and a state-independent log-std."""

    def __init__(self, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator,
                 activation: str = "tanh", init_std: float = 1.0):
        self.net = DenseNet((obs_dim,) + tuple(hidden) + (act_dim,), rng,
                            activation=activation)
        self.log_std = np.full(act_dim, np.log(init_std))
        self.act_dim = act_dim

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params + [self.log_std]

    def set_params(self, params) -> None:
        self.net.set_params(params[:-1])
        self.log_std = params[-1]

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward(obs)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        action = mu + std * rng.standard_normal(mu.shape)
        return action, self.log_prob_given(mu, action), mu

    def log_prob_given(self, mu: np.ndarray, action: np.ndarray) -> np.ndarray:
        z = (action - mu) / np.exp(self.log_std)
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) \
            - 0.5 * self.act_dim * np.log(2 * np.pi)

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.act_dim * (1.0 + np.log(2 * np.pi)))
