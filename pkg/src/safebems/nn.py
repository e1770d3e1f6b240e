"""Small numpy building blocks: a tanh MLP with manual backprop and Adam."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam on a dict of parameter arrays, updated in place."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class MLP:
    """Fully connected net, tanh hidden layers, linear output."""

    def __init__(self, sizes, seed=0, out_scale=1.0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.sizes = tuple(int(s) for s in sizes)
        self.params = {}
        n = len(self.sizes) - 1
        for k in range(n):
            fan_in, fan_out = self.sizes[k], self.sizes[k + 1]
            # orthogonal-ish scaled init, small output layer
            gain = out_scale if k == n - 1 else np.sqrt(2.0)
            w = rng.standard_normal((fan_in, fan_out))
            q, _ = np.linalg.qr(w if fan_in >= fan_out else w.T)
            q = q if fan_in >= fan_out else q.T
            self.params[f"W{k}"] = (gain * q[:fan_in, :fan_out]).astype(dtype)
            self.params[f"b{k}"] = np.zeros(fan_out, dtype=dtype)

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def forward(self, x, cache=False):
        acts = [x]
        h = x
        for k in range(self.n_layers):
            h = h @ self.params[f"W{k}"] + self.params[f"b{k}"]
            if k < self.n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        if cache:
            self._acts = acts
        return h

    def backward(self, dout):
        acts = self._acts
        grads = {}
        d = dout
        for k in reversed(range(self.n_layers)):
            if k < self.n_layers - 1:
                d = d * (1.0 - acts[k + 1] ** 2)
            grads[f"W{k}"] = acts[k].T @ d
            grads[f"b{k}"] = d.sum(axis=0)
            if k:
                d = d @ self.params[f"W{k}"].T
        return grads

    def state(self) -> dict:
        return {k: v.tolist() for k, v in self.params.items()}

    @classmethod
    def from_state(cls, sizes, state) -> "MLP":
        net = cls(sizes)
        net.params = {k: np.array(v, dtype=np.float64) for k, v in state.items()}
        return net
