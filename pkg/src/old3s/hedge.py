"""Hedge weighting over per-layer prediction heads.

Each layer of an elastic network owns a classifier head; the heads' outputs
are blended with weights on a probability simplex, and the weights move
multiplicatively (never by gradient descent) so the effective depth of the
network is learned online.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ContractViolation, DenseLayer, softmax

# Which loss terms are active per phase, per network side.
PHASE_TERMS = {
    ("T1", "old"): ("vi", "clf"),
    ("Tb", "old"): ("vi", "clf"),
    ("Tb", "new"): ("vi", "rec", "clf"),
    ("T2", "new"): ("clf",),
    ("T2", "old"): ("clf",),
}


@dataclass
class HedgeWeights:
    """Simplex weights over L layers with a multiplicative discount update.

    beta is the discount rate in (0, 1); floor is the smoothing lower bound
    every weight is kept above (so deep layers are never starved of their
    gradient share); max_loss tracks the running maximum used to rescale
    losses into [0, 1] before exponentiation.
    """

    alphas: np.ndarray
    beta: float = 0.99
    floor: float = 0.0
    max_loss: float = 0.0
    frozen: bool = False

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if not 0.0 < self.beta < 1.0:
            raise ContractViolation(f"beta must be in (0,1), got {self.beta}")
        L = self.alphas.shape[0]
        if not 0.0 <= self.floor < 1.0 / L:
            raise ContractViolation(f"floor must be in [0, 1/L), got {self.floor}")
        if not self.frozen:
            self.check()

    @property
    def depth(self):
        return self.alphas.shape[0]

    def check(self):
        if abs(self.alphas.sum() - 1.0) > 1e-9:
            raise ContractViolation("hedge weights must sum to 1")
        if self.depth == 1:
            return  # the singleton simplex is the constant 1.0
        if self.alphas.min() < self.floor or (self.alphas <= 0.0).any() or (self.alphas >= 1.0).any():
            raise ContractViolation("hedge weights outside (0,1) or below floor")

    @classmethod
    def uniform(cls, depth, beta=0.99, floor=None):
        if floor is None:
            floor = 0.01 / depth
        return cls(np.full(depth, 1.0 / depth), beta=beta, floor=floor)

    @classmethod
    def fixed_last(cls, depth, beta=0.99):
        """One-hot weight on the deepest layer, never updated. This turns the
        elastic network into a plain fixed-depth one."""
        a = np.zeros(depth)
        a[-1] = 1.0
        return cls(a, beta=beta, floor=0.0, frozen=True)


def _apply_floor(alphas, floor):
    """Exact projection so every weight is >= floor and the sum stays 1.

    Entries at (or below) the floor are pinned there and only the remaining
    mass is rescaled; the pinned set grows monotonically, so this terminates
    within one pass per layer.
    """
    if floor <= 0.0:
        return alphas
    a = alphas.copy()
    for _ in range(a.shape[0]):
        pinned = a <= floor
        if not (a < floor).any():
            break
        free = ~pinned
        budget = 1.0 - floor * pinned.sum()
        a[pinned] = floor
        a[free] *= budget / a[free].sum()
    return a


def update_hedge(weights, per_layer_losses):
    """Discount each weight by beta^(rescaled loss), renormalize, smooth.

    Losses are first divided by the running maximum so the exponents stay in
    [0, 1]. Frozen weight vectors are returned unchanged.
    """
    losses = np.asarray(per_layer_losses, dtype=np.float64)
    if losses.shape != weights.alphas.shape:
        raise ContractViolation("per-layer losses length != number of layers")
    if not np.isfinite(losses).all() or (losses < 0).any():
        raise ContractViolation("per-layer losses must be finite and >= 0")
    if weights.frozen:
        return weights
    max_loss = max(weights.max_loss, float(losses.max()))
    scaled = losses / max_loss if max_loss > 0 else np.zeros_like(losses)
    u = weights.alphas * np.power(weights.beta, scaled)
    a = u / u.sum()
    a = _apply_floor(a, weights.floor)
    return HedgeWeights(
        a, beta=weights.beta, floor=weights.floor, max_loss=max_loss, frozen=False
    )


def aggregate_predict(weights, per_layer_logits):
    """Convex combination of per-layer softmax outputs: sum_l alpha_l p_l."""
    alphas = weights.alphas
    if len(per_layer_logits) != alphas.shape[0]:
        raise ContractViolation("logit list length != number of layers")
    out = None
    for a, logits in zip(alphas, per_layer_logits):
        p = softmax(logits)
        out = a * p if out is None else out + a * p
    return out


def per_layer_losses(phase, side, *, vi=None, rec=None, clf=None):
    """Sum the loss terms active for (phase, side) into one value per layer.

    Supplying a term that is inactive in the given phase, or omitting an
    active one, is a contract error; inactive terms contribute zero.
    """
    try:
        active = PHASE_TERMS[(phase, side)]
    except KeyError:
        raise ContractViolation(f"no loss terms defined for phase {phase!r} side {side!r}")
    supplied = {"vi": vi, "rec": rec, "clf": clf}
    total = None
    for name, values in supplied.items():
        if values is None:
            if name in active:
                raise ContractViolation(f"{name} losses required in phase {phase}")
            continue
        if name not in active:
            raise ContractViolation(f"{name} losses are inactive in phase {phase}")
        arr = np.asarray(values, dtype=np.float64)
        total = arr.copy() if total is None else total + arr
    if total is None:
        raise ContractViolation("no loss terms supplied")
    if not np.isfinite(total).all():
        raise ContractViolation("non-finite per-layer loss")
    return total


class ElasticClassifier:
    """Per-layer affine heads from the latent space to class logits."""

    def __init__(self, heads):
        if not heads:
            raise ContractViolation("ElasticClassifier needs at least one head")
        C = heads[0].n_out
        if any(h.n_out != C for h in heads):
            raise ContractViolation("all heads must emit the same number of classes")
        self.heads = heads

    @property
    def depth(self):
        return len(self.heads)

    @property
    def n_classes(self):
        return self.heads[0].n_out

    @classmethod
    def build(cls, latent_dim, n_classes, depth):
        # Heads start at zero so an untrained model predicts exactly uniform.
        return cls([DenseLayer.zeros(n_classes, latent_dim) for _ in range(depth)])

    def logits(self, per_layer_codes):
        return [h.W @ z + h.b for h, z in zip(self.heads, per_layer_codes)]
