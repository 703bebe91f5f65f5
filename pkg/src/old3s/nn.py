"""Dense-network building blocks: layers, activations, losses, sampling, SGD.

Everything runs in double precision on single instances (1-d vectors), which
is the granularity the online protocol feeds us. Layers carry their own
gradient accumulation buffers so that several loss heads can contribute to
one update.
"""

from __future__ import annotations

import math

import numpy as np

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


class ContractViolation(ValueError):
    """An argument violated an operation's stated contract."""


def require_vector(x, length=None, name="input"):
    """Validate a finite 1-d float64 vector and return it as an ndarray."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolation(f"{name}: expected a 1-d vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ContractViolation(f"{name}: expected length {length}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ContractViolation(f"{name}: non-finite entries")
    return arr


class RngState:
    """Deterministic random source; the same seed reproduces the exact draw
    sequence bit for bit across runs."""

    def __init__(self, seed):
        self.seed = int(seed)
        self.draws = 0
        self._gen = np.random.default_rng(self.seed)

    def standard_normal(self, size):
        self.draws += 1
        return self._gen.standard_normal(size)

    def uniform(self, low, high, size):
        self.draws += 1
        return self._gen.uniform(low, high, size)

    def permutation(self, n):
        self.draws += 1
        return self._gen.permutation(n)

    def integers(self, low, high, size=None):
        self.draws += 1
        return self._gen.integers(low, high, size=size)


def derive_seed(seed, key):
    """Stable 64-bit child seed so independent random streams never collide."""
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFFFFFFFFFF, int(key)])
    return int(ss.generate_state(1, np.uint64)[0])


class DenseLayer:
    """Affine map y = W x + b, with gradient buffers gw/gb."""

    __slots__ = ("W", "b", "gw", "gb")

    def __init__(self, W, b):
        self.W = np.array(W, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.ndim != 1:
            raise ContractViolation("DenseLayer: W must be 2-d and b 1-d")
        if self.W.shape[0] != self.b.shape[0]:
            raise ContractViolation(
                f"DenseLayer: W rows {self.W.shape[0]} != b length {self.b.shape[0]}"
            )
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
            raise ContractViolation("DenseLayer: non-finite parameters")
        self.gw = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    @property
    def n_out(self):
        return self.W.shape[0]

    @property
    def n_in(self):
        return self.W.shape[1]

    @classmethod
    def glorot(cls, n_out, n_in, rng):
        """Scaled uniform init in [-sqrt(6/(in+out)), +sqrt(6/(in+out))], zero bias."""
        limit = math.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, (n_out, n_in)), np.zeros(n_out))

    @classmethod
    def zeros(cls, n_out, n_in):
        return cls(np.zeros((n_out, n_in)), np.zeros(n_out))

    def zero_grad(self):
        self.gw[:] = 0.0
        self.gb[:] = 0.0

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.gw, self.gb]


def dense_forward(layer, x):
    """y_i = sum_j W_ij x_j + b_i."""
    x = require_vector(x, layer.n_in, "dense_forward input")
    return layer.W @ x + layer.b


def dense_backward(layer, x, grad_out):
    """Cotangents of the affine map: (W^T g, g outer x, g)."""
    x = require_vector(x, layer.n_in, "dense_backward input")
    g = require_vector(grad_out, layer.n_out, "dense_backward grad_out")
    return layer.W.T @ g, np.outer(g, x), g.copy()


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(kind, x):
    """Apply an elementwise nonlinearity; returns (value, derivative at x)."""
    x = require_vector(x, name=f"activation({kind}) input")
    if kind == "relu":
        y = np.maximum(x, 0.0)
        dy = (x > 0).astype(np.float64)
    elif kind == "sigmoid":
        y = sigmoid(x)
        dy = y * (1.0 - y)
    elif kind == "tanh":
        y = np.tanh(x)
        dy = 1.0 - y * y
    else:
        raise ContractViolation(f"unknown activation kind {kind!r}")
    return y, dy


def softmax(logits):
    """Max-subtracted softmax over a logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_cross_entropy(logits, label):
    """Multi-class cross entropy and its logit gradient.

    loss = -log softmax(logits)[label], stabilized by max subtraction;
    grad  = softmax(logits) - one_hot(label).
    """
    logits = require_vector(logits, name="logits")
    n = logits.shape[0]
    label = int(label)
    if not 0 <= label < n:
        raise ContractViolation(f"label {label} out of range for {n} classes")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    total = e.sum()
    loss = math.log(total) - shifted[label]
    grad = e / total
    grad[label] -= 1.0
    return loss, grad


def sample_gaussian(mu, log_var, rng, noise=None):
    """Reparameterized draw z = mu + exp(log_var / 2) * zeta, zeta ~ N(0, 1).

    log_var is clamped to [-10, 10] before use. The noise vector is returned
    (or accepted) so backward passes can hold it fixed.
    """
    mu = require_vector(mu, name="mu")
    log_var = require_vector(log_var, mu.shape[0], "log_var")
    lv = np.clip(log_var, LOG_VAR_MIN, LOG_VAR_MAX)
    if noise is None:
        noise = rng.standard_normal(mu.shape[0])
    else:
        noise = require_vector(noise, mu.shape[0], "noise")
    z = mu + np.exp(0.5 * lv) * noise
    return z, noise


def sgd_step(params, grads, learning_rate):
    """In-place p <- p - lr * g over parallel lists of arrays."""
    if not learning_rate > 0:
        raise ContractViolation(f"learning_rate must be > 0, got {learning_rate}")
    if len(params) != len(grads):
        raise ContractViolation("params and grads length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractViolation(f"shape mismatch {p.shape} vs {g.shape}")
        p -= learning_rate * g
    return params


def finite_diff_check(loss_fn, params, grads, eps=1e-5):
    """Compare analytic gradients against central finite differences.

    loss_fn() must return the scalar loss for the current parameter values;
    params / grads are parallel lists of arrays (grads precomputed at the
    unperturbed point). Returns the max relative error with denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractViolation(f"eps {eps} outside [1e-7, 1e-3]")
    if len(params) != len(grads):
        raise ContractViolation("params and grads length mismatch")
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g, dtype=np.float64).reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            lp = loss_fn()
            flat_p[i] = orig - eps
            lm = loss_fn()
            flat_p[i] = orig
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise ContractViolation("non-finite loss while probing gradients")
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(flat_g[i]), abs(numeric), 1e-8)
            rel = abs(flat_g[i] - numeric) / denom
            if rel > worst:
                worst = rel
    return worst
