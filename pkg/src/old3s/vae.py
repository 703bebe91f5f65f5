"""Paired variational encoders with per-layer Gaussian heads.

An encoder stack is a relu trunk where every layer carries its own posterior
head pair (mean and log-variance over a shared latent space) plus an affine
decoder head back to feature space. Two stacks, one per feature space, are
tied together by per-layer cross decoders that learn to rebuild the first
space from the second space's latent codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import (
    LOG_VAR_MAX,
    LOG_VAR_MIN,
    ContractViolation,
    DenseLayer,
    require_vector,
    sample_gaussian,
)

# Weight on the KL-to-prior term relative to the squared-error reconstruction
# term. Equivalent to a Gaussian observation variance of KL_WEIGHT (up to a
# global rescale): features whose variance exceeds this threshold get encoded.
# At weight 1.0 the z-scored inputs sit exactly on the threshold and the
# posterior collapses to the prior, which destroys the reconstruction.
KL_WEIGHT = 0.1

# Weight on the cross-space alignment KL. This term transfers the first
# space's latent structure onto the second space; too strong a pull inflates
# the second posterior's variance whenever the means still disagree, which
# drowns the decoders in sampling noise.
ALIGN_WEIGHT = 0.1


@dataclass
class GaussianCode:
    """Diagonal Gaussian over the latent space: N(mu, diag(exp(log_var)))."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mu = require_vector(self.mu, name="mu")
        self.log_var = require_vector(self.log_var, self.mu.shape[0], "log_var")
        if self.log_var.min() < LOG_VAR_MIN - 1e-12 or self.log_var.max() > LOG_VAR_MAX + 1e-12:
            raise ContractViolation("log_var outside clamp bounds")

    @property
    def dim(self):
        return self.mu.shape[0]


class EncoderStack:
    """Relu trunk of depth L with per-layer (mu, log_var) heads.

    Layer l consumes the hidden state of layer l-1; every hidden state feeds
    its own Gaussian head pair, so a single forward pass yields L posterior
    codes of increasing depth.
    """

    def __init__(self, trunk, mu_heads, lv_heads):
        if not trunk:
            raise ContractViolation("EncoderStack needs at least one layer")
        if not (len(trunk) == len(mu_heads) == len(lv_heads)):
            raise ContractViolation("trunk and head lists must have equal length")
        latent = mu_heads[0].n_out
        for mh, lh in zip(mu_heads, lv_heads):
            if mh.n_out != latent or lh.n_out != latent:
                raise ContractViolation("all heads must share the latent dimension")
        for l in range(1, len(trunk)):
            if trunk[l].n_in != trunk[l - 1].n_out:
                raise ContractViolation("trunk layer dimensions do not chain")
        self.trunk = trunk
        self.mu_heads = mu_heads
        self.lv_heads = lv_heads

    @property
    def depth(self):
        return len(self.trunk)

    @property
    def in_dim(self):
        return self.trunk[0].n_in

    @property
    def latent_dim(self):
        return self.mu_heads[0].n_out

    @classmethod
    def build(cls, in_dim, hidden_dim, latent_dim, depth, rng):
        trunk = []
        for l in range(depth):
            n_in = in_dim if l == 0 else hidden_dim
            trunk.append(DenseLayer.glorot(hidden_dim, n_in, rng))
        mu_heads = [DenseLayer.glorot(latent_dim, hidden_dim, rng) for _ in range(depth)]
        lv_heads = [DenseLayer.glorot(latent_dim, hidden_dim, rng) for _ in range(depth)]
        return cls(trunk, mu_heads, lv_heads)

    def forward(self, x):
        """Run the trunk and heads, returning the full cache for backward.

        Cache keys: "a" hidden states (a[0] is the input), "s" pre-activations,
        "mu", "lv_raw", "lv" (clamped) per layer.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.in_dim,):
            raise ContractViolation(
                f"encoder input shape {x.shape}, expected ({self.in_dim},)"
            )
        a = [x]
        s = []
        mu = []
        lv_raw = []
        lv = []
        h = x
        for layer, mh, lh in zip(self.trunk, self.mu_heads, self.lv_heads):
            pre = layer.W @ h + layer.b
            h = np.maximum(pre, 0.0)
            s.append(pre)
            a.append(h)
            mu.append(mh.W @ h + mh.b)
            raw = lh.W @ h + lh.b
            lv_raw.append(raw)
            lv.append(np.clip(raw, LOG_VAR_MIN, LOG_VAR_MAX))
        return {"a": a, "s": s, "mu": mu, "lv_raw": lv_raw, "lv": lv}

    def layers(self):
        return list(self.trunk) + list(self.mu_heads) + list(self.lv_heads)


def encode(stack, x):
    """Encode x into one GaussianCode per layer (length = stack depth)."""
    cache = stack.forward(require_vector(x, stack.in_dim, "encode input"))
    return [GaussianCode(m, v) for m, v in zip(cache["mu"], cache["lv"])]


def codes_from_cache(cache):
    """GaussianCodes from a forward cache without re-running the stack."""
    return [GaussianCode(m, v) for m, v in zip(cache["mu"], cache["lv"])]


def kl_standard(code):
    """KL(N(mu, diag(exp(lv))) || N(0, I)) in closed form:
    0.5 * sum(mu^2 + exp(lv) - 1 - lv)."""
    mu, lv = code.mu, code.log_var
    return 0.5 * float(np.sum(mu * mu + np.exp(lv) - 1.0 - lv))


def kl_standard_grads(code):
    """(d/dmu, d/dlog_var) of kl_standard."""
    return code.mu.copy(), 0.5 * (np.exp(code.log_var) - 1.0)


def kl_between(code_a, code_b):
    """KL(a || b) between diagonal Gaussians.

    sum_i [ 0.5*(lv_b - lv_a) + (exp(lv_a) + (mu_a - mu_b)^2) / (2 exp(lv_b)) - 0.5 ].
    Asymmetric: kl_between(a, b) != kl_between(b, a) in general.
    """
    if code_a.dim != code_b.dim:
        raise ContractViolation("kl_between: latent dimensions differ")
    va = np.exp(code_a.log_var)
    vb = np.exp(code_b.log_var)
    d = code_a.mu - code_b.mu
    return float(
        np.sum(0.5 * (code_b.log_var - code_a.log_var) + (va + d * d) / (2.0 * vb) - 0.5)
    )


def kl_between_grads_b(code_a, code_b):
    """Gradients of kl_between(a, b) with respect to b's parameters only
    (the a side is treated as a constant target)."""
    va = np.exp(code_a.log_var)
    vb = np.exp(code_b.log_var)
    d = code_a.mu - code_b.mu
    dmu_b = -d / vb
    dlv_b = 0.5 - (va + d * d) / (2.0 * vb)
    return dmu_b, dlv_b


def recon_error(x, x_hat):
    """Gaussian negative log-likelihood up to a constant: 0.5 * sum((x - x_hat)^2).

    Summing over features (rather than averaging) keeps the reconstruction
    term on the same scale as the KL terms, which sum over latent dimensions;
    a per-feature mean starves the reconstruction gradient and collapses the
    posterior."""
    diff = x_hat - x
    return 0.5 * float(diff @ diff)


class DecoderHead:
    """Two-layer decoder stack: latent -> hidden relu -> feature space.

    Works on row batches (draws, latent) so several reparameterization draws
    decode in one call; gradients accumulate into the underlying layers."""

    def __init__(self, hidden_layer, out_layer):
        if out_layer.n_in != hidden_layer.n_out:
            raise ContractViolation("decoder stack dimensions do not chain")
        self.hidden_layer = hidden_layer
        self.out_layer = out_layer

    @property
    def in_dim(self):
        return self.hidden_layer.n_in

    @property
    def out_dim(self):
        return self.out_layer.n_out

    @classmethod
    def build(cls, latent_dim, hidden_dim, out_dim, rng):
        return cls(
            DenseLayer.glorot(hidden_dim, latent_dim, rng),
            DenseLayer.glorot(out_dim, hidden_dim, rng),
        )

    def copy(self):
        return DecoderHead(
            DenseLayer(self.hidden_layer.W, self.hidden_layer.b),
            DenseLayer(self.out_layer.W, self.out_layer.b),
        )

    def layers(self):
        return [self.hidden_layer, self.out_layer]

    def load_from(self, other):
        self.hidden_layer.W[:] = other.hidden_layer.W
        self.hidden_layer.b[:] = other.hidden_layer.b
        self.out_layer.W[:] = other.out_layer.W
        self.out_layer.b[:] = other.out_layer.b

    def decode(self, Z):
        """(draws, latent) -> ((draws, out), cache for backward)."""
        H = np.maximum(Z @ self.hidden_layer.W.T + self.hidden_layer.b, 0.0)
        return H @ self.out_layer.W.T + self.out_layer.b, (Z, H)

    def decode_vector(self, z):
        out, _ = self.decode(z[None, :])
        return out[0]

    def backward(self, cache, g_out):
        """Accumulate parameter gradients for cotangent g_out (draws, out);
        returns the cotangent with respect to Z."""
        Z, H = cache
        self.out_layer.gw += g_out.T @ H
        self.out_layer.gb += g_out.sum(axis=0)
        dH = (g_out @ self.out_layer.W) * (H > 0)
        self.hidden_layer.gw += dH.T @ Z
        self.hidden_layer.gb += dH.sum(axis=0)
        return dH @ self.hidden_layer.W


@dataclass
class VaeTerm:
    """One per-layer loss term with everything backward needs."""

    loss: float
    recon: float
    kl: float
    z: np.ndarray
    noise: np.ndarray
    dmu: np.ndarray
    dlv: np.ndarray


def loss_vi(x, code, decoder, rng=None, noise=None):
    """Variational loss for one code:
    recon_error(x, D(z)) + KL_WEIGHT * KL(code || N(0, I)).

    z is the reparameterized sample; gradients flow through it into (dmu,
    dlv) and accumulate into the decoder's buffers. Passing `noise` holds the
    draw fixed (finite-difference checks rely on this).
    """
    x = require_vector(x, decoder.out_dim, "loss_vi target")
    z, zeta = sample_gaussian(code.mu, code.log_var, rng, noise=noise)
    x_hat, cache = decoder.decode(z[None, :])
    recon = recon_error(x, x_hat[0])
    kl = kl_standard(code)

    dz = decoder.backward(cache, x_hat - x[None, :])[0]
    dmu = dz + KL_WEIGHT * code.mu
    dlv = dz * zeta * np.exp(0.5 * code.log_var) * 0.5 + KL_WEIGHT * 0.5 * (
        np.exp(code.log_var) - 1.0
    )
    return VaeTerm(recon + KL_WEIGHT * kl, recon, kl, z, zeta, dmu, dlv)


def loss_rec(x_s1, code_s1, code_s2, cross_decoder, rng=None, noise=None):
    """Cross-space loss:
    recon_error(x_s1, D21(z2)) + ALIGN_WEIGHT * KL(code_s1 || code_s2).

    Gradients flow into the second space's code and the cross decoder only;
    the first space's posterior is a fixed target the second one is pulled
    toward.
    """
    x_s1 = require_vector(x_s1, cross_decoder.out_dim, "loss_rec target")
    z2, zeta = sample_gaussian(code_s2.mu, code_s2.log_var, rng, noise=noise)
    x_tilde, cache = cross_decoder.decode(z2[None, :])
    recon = recon_error(x_s1, x_tilde[0])
    kl = kl_between(code_s1, code_s2)

    dz = cross_decoder.backward(cache, x_tilde - x_s1[None, :])[0]
    kmu, klv = kl_between_grads_b(code_s1, code_s2)
    dmu = dz + ALIGN_WEIGHT * kmu
    dlv = dz * zeta * np.exp(0.5 * code_s2.log_var) * 0.5 + ALIGN_WEIGHT * klv
    return VaeTerm(recon + ALIGN_WEIGHT * kl, recon, kl, z2, zeta, dmu, dlv)


@dataclass
class VaePair:
    """The two per-space encoder stacks plus the cross decoders that map the
    second space's latent codes back to first-space features."""

    stack1: EncoderStack
    stack2: EncoderStack
    dec1: list
    dec2: list
    cross: list

    def __post_init__(self):
        z = self.stack1.latent_dim
        if self.stack2.latent_dim != z:
            raise ContractViolation("both stacks must share the latent dimension")
        for head in list(self.dec1) + list(self.dec2) + list(self.cross):
            if head.in_dim != z:
                raise ContractViolation("decoder heads must consume the latent dimension")
        d1 = self.stack1.in_dim
        for head in self.cross:
            if head.out_dim != d1:
                raise ContractViolation("cross decoders must emit first-space features")

    @property
    def latent_dim(self):
        return self.stack1.latent_dim


def reconstruct(pair, x_s2, weights):
    """Rebuild a first-space vector from a second-space one.

    Uses the posterior means (no sampling) and blends the per-layer cross
    decoder outputs with the hedge weights: x_tilde = sum_l alpha_l * D21_l(mu_l).
    """
    x_s2 = require_vector(x_s2, pair.stack2.in_dim, "reconstruct input")
    alphas = np.asarray(weights.alphas, dtype=np.float64)
    if alphas.shape[0] != pair.stack2.depth:
        raise ContractViolation("hedge weights length != encoder depth")
    cache = pair.stack2.forward(x_s2)
    out = np.zeros(pair.stack1.in_dim)
    for l, head in enumerate(pair.cross):
        out += alphas[l] * head.decode_vector(cache["mu"][l])
    return out


def monte_carlo_kl_standard(code, n_samples, rng):
    """Sampling estimate of KL(code || N(0, I)); test oracle for the closed form.

    Returns (estimate, standard_error).
    """
    mu, lv = code.mu, code.log_var
    sd = np.exp(0.5 * lv)
    zeta = rng.standard_normal((n_samples, mu.shape[0]))
    z = mu + sd * zeta
    log_q = np.sum(-0.5 * (zeta * zeta) - 0.5 * lv - 0.5 * math.log(2 * math.pi), axis=1)
    log_p = np.sum(-0.5 * (z * z) - 0.5 * math.log(2 * math.pi), axis=1)
    diffs = log_q - log_p
    est = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(n_samples))
    return est, se


def monte_carlo_kl_between(code_a, code_b, n_samples, rng):
    """Sampling estimate of KL(a || b); test oracle for the closed form."""
    mu_a, lv_a = code_a.mu, code_a.log_var
    sd_a = np.exp(0.5 * lv_a)
    zeta = rng.standard_normal((n_samples, mu_a.shape[0]))
    z = mu_a + sd_a * zeta
    log_qa = np.sum(-0.5 * (zeta * zeta) - 0.5 * lv_a - 0.5 * math.log(2 * math.pi), axis=1)
    var_b = np.exp(code_b.log_var)
    log_qb = np.sum(
        -0.5 * (z - code_b.mu) ** 2 / var_b
        - 0.5 * code_b.log_var
        - 0.5 * math.log(2 * math.pi),
        axis=1,
    )
    diffs = log_qa - log_qb
    est = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(n_samples))
    return est, se
