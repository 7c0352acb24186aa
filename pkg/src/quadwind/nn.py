"""Small float64 MLP engine with manual reverse-mode gradients.

Sized for the residual basis network (11 -> 50 -> 60 -> 50 -> 4) and the
condition discriminator (4 -> 128 -> K).  Hidden layers use ReLU, the output
layer is linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimMismatch, IoFailure, SchemaMismatch, StaleCache

CHECKPOINT_VERSION = 1
# relative change at which a cold-started power iteration is considered converged
COLD_START_TOL = 1e-12


@dataclass
class Gradients:
    weights: list
    biases: list
    # gradient with respect to the network input, same shape as the input batch
    input: np.ndarray | None = None

    def scaled(self, c):
        return Gradients([c * w for w in self.weights], [c * b for b in self.biases],
                         None if self.input is None else c * self.input)

    def __add__(self, other):
        return Gradients([a + b for a, b in zip(self.weights, other.weights)],
                         [a + b for a, b in zip(self.biases, other.biases)])


@dataclass
class ForwardCache:
    inputs: list   # input to each layer
    pre: list      # pre-activations of each layer
    version: int
    squeeze: bool


class Mlp:
    def __init__(self, weights, biases, spectral_bound=None):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise DimMismatch(f"layer {i} expects {self.weights[i].shape[1]} inputs, "
                                  f"previous layer gives {self.weights[i - 1].shape[0]}")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[0],):
                raise DimMismatch("bias shape does not match layer output")
        self.spectral_bound = spectral_bound
        self.u_vectors = [None] * len(self.weights)
        self.version = 0

    @classmethod
    def init(cls, dims, rng, spectral_bound=None):
        """He-uniform initialisation; normalised immediately when a bound is set."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        net = cls(weights, biases, spectral_bound)
        if spectral_bound is not None:
            net.u_vectors = [rng.normal(size=w.shape[0]) for w in net.weights]
            spectral_normalize(net, iters=3, tol=1e-14)
        return net

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self):
        net = Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                  self.spectral_bound)
        net.u_vectors = [None if u is None else u.copy() for u in self.u_vectors]
        return net

    def touch(self):
        self.version += 1

    def __call__(self, x):
        return forward(self, x)[0]


def forward(net: Mlp, x):
    """Forward pass on a vector or an (N, in) batch; returns (output, cache)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != net.weights[0].shape[1]:
        raise DimMismatch(f"expected input dim {net.weights[0].shape[1]}, got {h.shape[1]}")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ W.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    cache = ForwardCache(inputs, pre, net.version, squeeze)
    return (h[0] if squeeze else h), cache


def backward(net: Mlp, cache: ForwardCache, grad_out) -> Gradients:
    """Gradients of sum(grad_out * output) with respect to weights, biases and input."""
    if cache.version != net.version:
        raise StaleCache("network changed since the forward pass")
    g = np.asarray(grad_out, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    n = len(net.weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            g = g * (cache.pre[i] > 0.0)
        gw[i] = g.T @ cache.inputs[i]
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i]
    return Gradients(gw, gb, g[0] if cache.squeeze else g)


def _power_iteration(W, u, iters, tol, max_iters=5000):
    sigma = 0.0
    for it in range(max_iters):
        v = W.T @ u
        v /= np.linalg.norm(v)
        u = W @ v
        new_sigma = np.linalg.norm(u)
        u /= new_sigma
        done = it + 1 >= iters and (tol is None or abs(new_sigma - sigma) <= tol * new_sigma)
        sigma = new_sigma
        if done:
            break
    return sigma, u


def spectral_normalize(net: Mlp, iters=3, tol=None):
    """Cap every layer's largest singular value at ``net.spectral_bound``.

    The singular value is estimated by power iteration warm-started from the
    layer's cached vector: ``iters`` steps, or until the estimate moves less
    than ``tol`` (relative) when a tolerance is given.  A layer without a
    cached vector (cold start) is always iterated to convergence.
    """
    bound = net.spectral_bound
    if bound is None:
        return
    changed = False
    for i, W in enumerate(net.weights):
        u = net.u_vectors[i]
        layer_tol = tol
        if u is None or not np.any(u):
            u = np.ones(W.shape[0])
            layer_tol = COLD_START_TOL if tol is None else min(tol, COLD_START_TOL)
        sigma, u = _power_iteration(W, u / np.linalg.norm(u), iters, layer_tol)
        net.u_vectors[i] = u
        if sigma > bound:
            net.weights[i] = W * (bound / sigma)
            changed = True
    if changed:
        net.touch()


def cross_entropy(logits, k):
    """Softmax cross-entropy for one sample; returns (loss, d loss / d logits)."""
    z = np.asarray(logits, dtype=float)
    zmax = z.max()
    e = np.exp(z - zmax)
    total = e.sum()
    loss = np.log(total) + zmax - z[k]
    grad = e / total
    grad[k] -= 1.0
    return float(loss), grad


def cross_entropy_batch(logits, labels):
    """Summed cross-entropy over an (N, K) batch; returns (loss, gradient)."""
    z = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    total = e.sum(axis=1, keepdims=True)
    rows = np.arange(z.shape[0])
    loss = np.sum(np.log(total[:, 0]) + zmax[:, 0] - z[rows, labels])
    grad = e / total
    grad[rows, labels] -= 1.0
    return float(loss), grad


class Sgd:
    """SGD with heavy-ball momentum."""

    def __init__(self, lr, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self._vw = None
        self._vb = None

    def step(self, net: Mlp, grads: Gradients):
        if self._vw is None:
            self._vw = [np.zeros_like(w) for w in net.weights]
            self._vb = [np.zeros_like(b) for b in net.biases]
        for i in range(len(net.weights)):
            self._vw[i] = self.momentum * self._vw[i] - self.lr * grads.weights[i]
            self._vb[i] = self.momentum * self._vb[i] - self.lr * grads.biases[i]
            net.weights[i] = net.weights[i] + self._vw[i]
            net.biases[i] = net.biases[i] + self._vb[i]
        net.touch()


def to_dict(net: Mlp):
    return {
        "dims": net.dims,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "spectral_bound": net.spectral_bound,
    }


def from_dict(d) -> Mlp:
    dims = d["dims"]
    weights = [np.array(w, float).reshape(o, i) for w, i, o in zip(d["weights"], dims[:-1], dims[1:])]
    return Mlp(weights, d["biases"], d.get("spectral_bound"))


def save_checkpoint(path, nets: dict, meta=None):
    """Write named networks to a JSON checkpoint."""
    doc = {"format_version": CHECKPOINT_VERSION,
           "networks": {k: to_dict(v) for k, v in nets.items()},
           "meta": meta or {}}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    """Returns (dict of networks, meta)."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise IoFailure(f"checkpoint not found: {path}") from e
    except (OSError, ValueError) as e:
        raise IoFailure(f"unreadable checkpoint {path}: {e}") from e
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise SchemaMismatch(f"checkpoint version {doc.get('format_version')!r}, "
                             f"expected {CHECKPOINT_VERSION}")
    try:
        nets = {k: from_dict(v) for k, v in doc["networks"].items()}
    except (KeyError, ValueError, TypeError) as e:
        raise IoFailure(f"malformed checkpoint {path}: {e}") from e
    return nets, doc.get("meta", {})
