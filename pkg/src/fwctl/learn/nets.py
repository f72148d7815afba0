"""Small dense networks with explicit reverse-mode gradients, plus Adam.

Everything is float64 numpy. Layers are (W, b) pairs with y = x @ W + b and
an activation tag per layer; gradients are computed by hand so they can be
validated against finite differences and composed into larger objectives.
"""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError


def _act(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "linear":
        return z
    if tag == "elu":
        return np.where(z > 0.0, z, np.expm1(z))
    if tag == "tanh":
        return np.tanh(z)
    if tag == "relu":
        return np.maximum(z, 0.0)
    raise SchemaError(f"unknown activation {tag!r}")


def _act_grad(tag: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if tag == "linear":
        return np.ones_like(z)
    if tag == "elu":
        return np.where(z > 0.0, 1.0, y + 1.0)
    if tag == "tanh":
        return 1.0 - y * y
    if tag == "relu":
        return (z > 0.0).astype(float)
    raise SchemaError(f"unknown activation {tag!r}")


class Mlp:
    """Fully connected network: sizes (d0, d1, ..., dk), one activation per layer."""

    def __init__(self, sizes, activations=None, rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise SchemaError("need at least input and output sizes")
        if activations is None:
            activations = ["elu"] * (len(sizes) - 2) + ["linear"]
        if len(activations) != len(sizes) - 1:
            raise SchemaError("one activation required per layer")
        rng = rng or np.random.default_rng(0)
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / d_in)
            self.weights.append(rng.normal(0.0, scale, size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def set_params(self, params: list):
        k = 0
        for i in range(len(self.weights)):
            self.weights[i] = params[k]
            self.biases[i] = params[k + 1]
            k += 2

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.apply_cached(x)[0]

    def apply_cached(self, x: np.ndarray):
        """Forward pass returning (output, cache) for a later backward pass."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise SchemaError(f"input width {x.shape[-1]} != {self.in_dim}")
        squeeze = x.ndim == 1
        h = x[None] if squeeze else x
        cache = {"inputs": [], "pre": [], "post": [], "squeeze": squeeze}
        for w, b, act in zip(self.weights, self.biases, self.activations):
            cache["inputs"].append(h)
            z = h @ w + b
            h = _act(act, z)
            cache["pre"].append(z)
            cache["post"].append(h)
        return (h[0] if squeeze else h), cache

    def grad(self, cache, upstream: np.ndarray):
        """Backward pass: returns (param_grads, input_grad).

        param_grads matches the layout of params(): [dW0, db0, dW1, db1, ...].
        """
        up = np.asarray(upstream, dtype=float)
        if cache["squeeze"]:
            up = up[None]
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            z, y, x_in = cache["pre"][i], cache["post"][i], cache["inputs"][i]
            dz = up * _act_grad(self.activations[i], z, y)
            grads[2 * i] = x_in.T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            up = dz @ self.weights[i].T
        return grads, (up[0] if cache["squeeze"] else up)


def mlp_apply(m: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on (possibly batched) input."""
    return m.apply(x)


def mlp_grad(m: Mlp, x: np.ndarray, upstream: np.ndarray):
    """Exact reverse-mode gradients of sum(upstream * m(x)) w.r.t. params and x."""
    _, cache = m.apply_cached(x)
    return m.grad(cache, upstream)


class Adam:
    """Adam with bias correction over a list of parameter arrays."""

    def __init__(self, params: list, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list, grads: list) -> list:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise SchemaError("parameter/gradient count mismatch")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(params: list, grads: list, state: Adam) -> list:
    """One optimizer update; returns the new parameter list."""
    return state.step(params, grads)
