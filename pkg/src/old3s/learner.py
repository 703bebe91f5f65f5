"""Phase-driven orchestration of the doubly-streaming learner.

The model owns one elastic network per feature space. During the first phase
only the old-space network trains (variational + classification losses); in
the short overlap both train and the cross decoders learn to rebuild old
features from new-space codes; once the old space vanishes, the old network
is frozen and fed reconstructions while the new one keeps training, with an
exponential-experts coefficient blending the two predictions.

Ablation variants live here too: a ridge linear map in place of the learned
reconstruction, a fixed-depth network, and a zero-padding linear baseline
with L1 shrinkage.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .ensemble import EnsembleState, accumulate_risks, ensemble_predict
from .hedge import ElasticClassifier, HedgeWeights, aggregate_predict, per_layer_losses, update_hedge
from .metrics import MetricsLog
from .nn import (
    LOG_VAR_MAX,
    LOG_VAR_MIN,
    ContractViolation,
    DenseLayer,
    RngState,
    derive_seed,
    sgd_step,
    softmax_cross_entropy,
)
from . import vae as _vae
from .vae import DecoderHead, EncoderStack, VaePair
from .vae import reconstruct as vae_reconstruct

VARIANTS = ("old3s", "old_linear", "old_fd", "zero_pad")

RIDGE_LAMBDA = 1e-6
ZERO_PAD_L1 = 1e-4
PROB_FLOOR = 1e-12

# Reparameterization draws averaged per loss evaluation. More draws cut the
# gradient noise of every sampled-code path (decoders, cross decoders,
# classifier heads) by the square root, which in turn permits a larger stable
# learning rate; the draws vectorize, so the overhead is small.
MC_DRAWS = 4

# Extra gradient passes on the new-space network per overlap round (fresh
# draws each pass, same single instance). The overlap is the only window for
# learning the cross-space mapping and is deliberately short, so the learner
# spends more compute per arriving instance there; the gradient-norm cap
# keeps the repeated steps inside the stable region.
TB_INNER_STEPS = 1

# Single-instance gradients occasionally spike (a saturated input, a fresh
# head); the global gradient norm per network per step is capped here.
MAX_GRAD_NORM = 25.0

# Hidden width of the two-layer decoder stacks.
DECODER_HIDDEN = 64


class PhaseError(RuntimeError):
    """An instance arrived out of phase order, or an operation ran in the
    wrong phase."""


class NumericalError(RuntimeError):
    """Training produced a non-finite value; carries the offending round."""

    def __init__(self, round_index, detail=""):
        self.round_index = round_index
        super().__init__(f"numerical failure at round {round_index}: {detail}")


@dataclass
class VariantConfig:
    """Hyperparameters for one run of any variant."""

    kind: str = "old3s"
    latent_dim: int = 20
    hidden_dim: int = 128
    depth: int = 4
    fixed_depth: int = 1
    eta: float = 0.01
    beta: float = 0.99
    learning_rate: float = 0.02
    floor: float | None = None
    seed: int = 0

    def validate(self):
        if self.kind not in VARIANTS:
            raise ContractViolation(f"unknown variant kind {self.kind!r}")
        if min(self.latent_dim, self.hidden_dim, self.depth) < 1:
            raise ContractViolation("dims must be >= 1")
        if self.kind == "old_fd" and not 1 <= self.fixed_depth <= self.depth:
            raise ContractViolation(
                f"fixed_depth {self.fixed_depth} outside [1, {self.depth}]"
            )
        if not self.eta > 0 or not 0 < self.beta < 1 or not self.learning_rate > 0:
            raise ContractViolation("eta, beta, learning_rate out of range")
        return self

    def as_dict(self):
        return asdict(self)


class ElasticNet:
    """One feature space's stack: encoder trunk with per-layer Gaussian heads,
    per-layer decoders (plus cross decoders when this is the new-space side),
    per-layer classifier heads, and hedge weights over the layers."""

    def __init__(
        self,
        in_dim,
        hidden_dim,
        latent_dim,
        depth,
        n_classes,
        rng,
        cross_dim=None,
        beta=0.99,
        floor=None,
        fixed_last=False,
    ):
        self.stack = EncoderStack.build(in_dim, hidden_dim, latent_dim, depth, rng)
        self.decoders = [
            DecoderHead.build(latent_dim, DECODER_HIDDEN, in_dim, rng) for _ in range(depth)
        ]
        self.cross = (
            [DecoderHead.build(latent_dim, DECODER_HIDDEN, cross_dim, rng) for _ in range(depth)]
            if cross_dim
            else None
        )
        self.clf = ElasticClassifier.build(latent_dim, n_classes, depth)
        if fixed_last:
            self.hedge = HedgeWeights.fixed_last(depth, beta=beta)
        else:
            self.hedge = HedgeWeights.uniform(depth, beta=beta, floor=floor)
        self.frozen = False

    @property
    def depth(self):
        return self.stack.depth

    @property
    def latent_dim(self):
        return self.stack.latent_dim

    @property
    def in_dim(self):
        return self.stack.in_dim

    def forward(self, x):
        return self.stack.forward(x)

    def predict_probs(self, cache):
        """Hedge-blended class probabilities from the posterior means."""
        return aggregate_predict(self.hedge, self.clf.logits(cache["mu"]))

    def all_layers(self):
        layers = self.stack.layers() + list(self.clf.heads)
        for head in self.decoders:
            layers += head.layers()
        if self.cross is not None:
            for head in self.cross:
                layers += head.layers()
        return layers

    def zero_grads(self):
        for layer in self.all_layers():
            layer.zero_grad()

    def apply_sgd(self, lr, max_norm=MAX_GRAD_NORM):
        if self.frozen:
            raise PhaseError("attempted SGD on a frozen network")
        params, grads = [], []
        for layer in self.all_layers():
            params += layer.params()
            grads += layer.grads()
        if max_norm is not None:
            total = math.sqrt(sum(float(g.ravel() @ g.ravel()) for g in grads))
            if total > max_norm:
                scale = max_norm / total
                for g in grads:
                    g *= scale
        sgd_step(params, grads, lr)

    def param_snapshot(self):
        return [p.copy() for layer in self.all_layers() for p in layer.params()]


def draw_layer_noise(rng, depth, latent_dim, draws=MC_DRAWS):
    """Per-layer reparameterization noise, `draws` rows per layer. Every head
    attached to a layer shares that layer's draws."""
    return [rng.standard_normal((draws, latent_dim)) for _ in range(depth)]


def losses_and_grads(net, cache, noises, *, y=None, vi_target=None, rec_target=None, peer_cache=None):
    """Per-layer losses with gradients accumulated into the layer buffers.

    Sampled-code loss terms are averaged over the noise rows in `noises`
    (Monte-Carlo estimate of the per-layer expected loss). Each layer's loss
    terms are scaled by that layer's hedge weight before backpropagation (the
    weights themselves are never differentiated), and shared trunk layers
    accumulate contributions from every deeper head. Returns a dict of
    per-layer loss components ("vi", "rec", "clf"), each an array of length
    depth or None when the term is inactive.

    Pass `noises` from draw_layer_noise; holding it fixed makes the whole
    computation a deterministic function of the parameters, which is what the
    finite-difference checks rely on.
    """
    L = net.depth
    alphas = net.hedge.alphas
    if rec_target is not None and (net.cross is None or peer_cache is None):
        raise ContractViolation("rec_target needs cross decoders and a peer cache")
    vi_losses = np.zeros(L) if vi_target is not None else None
    rec_losses = np.zeros(L) if rec_target is not None else None
    clf_losses = np.zeros(L) if y is not None else None

    hidden = cache["a"]
    pre = cache["s"]
    da = [np.zeros_like(h) for h in hidden[1:]]
    kl_w = _vae.KL_WEIGHT
    align_w = _vae.ALIGN_WEIGHT

    for l in range(L):
        mu = cache["mu"][l]
        lv = cache["lv"][l]
        al = alphas[l]
        sd = np.exp(0.5 * lv)
        zeta = noises[l]
        k = zeta.shape[0]
        Z = mu + sd * zeta  # (draws, latent)
        dZ = np.zeros_like(Z)
        dmu = np.zeros_like(mu)
        dlv = np.zeros_like(mu)

        if y is not None:
            head = net.clf.heads[l]
            logits = Z @ head.W.T + head.b
            shifted = logits - logits.max(axis=1, keepdims=True)
            ez = np.exp(shifted)
            ez /= ez.sum(axis=1, keepdims=True)
            ce = float(np.mean(-np.log(np.maximum(ez[:, y], 1e-300))))
            clf_losses[l] = ce
            dlogits = ez
            dlogits[:, y] -= 1.0
            dlogits *= al / k
            head.gw += dlogits.T @ Z
            head.gb += dlogits.sum(axis=0)
            dZ += dlogits @ head.W

        if vi_target is not None:
            dec = net.decoders[l]
            x_hat, dcache = dec.decode(Z)
            diff = x_hat - vi_target
            recon = 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))
            kl = 0.5 * float(np.sum(mu * mu + np.exp(lv) - 1.0 - lv))
            vi_losses[l] = recon + kl_w * kl
            dZ += dec.backward(dcache, (al / k) * diff)
            dmu += al * kl_w * mu
            dlv += al * kl_w * 0.5 * (np.exp(lv) - 1.0)

        if rec_target is not None:
            crs = net.cross[l]
            x_til, ccache = crs.decode(Z)
            diff = x_til - rec_target
            recon = 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))
            mu1 = peer_cache["mu"][l]
            lv1 = peer_cache["lv"][l]
            va = np.exp(lv1)
            vb = np.exp(lv)
            gap = mu1 - mu
            klb = float(np.sum(0.5 * (lv - lv1) + (va + gap * gap) / (2.0 * vb) - 0.5))
            rec_losses[l] = recon + align_w * klb
            dZ += crs.backward(ccache, (al / k) * diff)
            # Alignment gradients land on this side only; the peer is a fixed
            # target the codes are pulled toward.
            dmu += al * align_w * (-gap / vb)
            dlv += al * align_w * (0.5 - (va + gap * gap) / (2.0 * vb))

        dmu += dZ.sum(axis=0)
        dlv += (dZ * zeta).sum(axis=0) * sd * 0.5
        # Clamp backward: inside the bounds gradients pass; at a bound they
        # pass only when the step would move the raw value back inside,
        # otherwise a head that escaped the range could never recover.
        raw = cache["lv_raw"][l]
        inward = ((raw > LOG_VAR_MIN) & (raw < LOG_VAR_MAX)) | (
            (raw >= LOG_VAR_MAX) & (dlv > 0)
        ) | ((raw <= LOG_VAR_MIN) & (dlv < 0))
        dlv = np.where(inward, dlv, 0.0)

        mh = net.stack.mu_heads[l]
        lh = net.stack.lv_heads[l]
        h = hidden[l + 1]
        mh.gw += np.outer(dmu, h)
        mh.gb += dmu
        lh.gw += np.outer(dlv, h)
        lh.gb += dlv
        da[l] += mh.W.T @ dmu + lh.W.T @ dlv

    for l in range(L - 1, -1, -1):
        ds = da[l] * (pre[l] > 0)
        layer = net.stack.trunk[l]
        layer.gw += np.outer(ds, hidden[l])
        layer.gb += ds
        if l > 0:
            da[l - 1] += layer.W.T @ ds

    return {"vi": vi_losses, "rec": rec_losses, "clf": clf_losses}


class RunningNorm:
    """Online per-feature standardization (Welford); prequential-safe: each
    vector is normalized with statistics of strictly earlier vectors.

    Passes inputs through unchanged until enough samples have arrived for the
    variance estimate to be trustworthy."""

    WARMUP = 20
    VAR_FLOOR = 1e-6

    def __init__(self, dim):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.frozen = False

    def apply(self, x, update=True):
        if self.count >= self.WARMUP:
            var = np.maximum(self.m2 / (self.count - 1), self.VAR_FLOOR)
            out = (x - self.mean) / np.sqrt(var)
        else:
            out = x.copy()
        if update and not self.frozen:
            self.count += 1
            delta = x - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (x - self.mean)
        return out


def fit_linear_map(pairs, ridge=RIDGE_LAMBDA):
    """Ridge least squares from new-space to old-space vectors.

    Returns W of shape (d2, d1) minimizing sum ||W^T x2 - x1||^2 + ridge*||W||_F^2.
    """
    if not pairs:
        raise ContractViolation("fit_linear_map: empty buffer")
    X2 = np.stack([p[0] for p in pairs])
    X1 = np.stack([p[1] for p in pairs])
    d2 = X2.shape[1]
    A = X2.T @ X2 + ridge * np.eye(d2)
    return np.linalg.solve(A, X2.T @ X1)


def _ce_probs(probs, y):
    return -math.log(max(float(probs[y]), PROB_FLOOR))


class Old3sLearner:
    """The elastic doubly-streaming learner (also covers the old_linear and
    old_fd ablations, which differ only in the reconstruction path and the
    hedge regime)."""

    def __init__(self, config, d1, d2, n_classes, schedule):
        config.validate()
        if config.kind == "zero_pad":
            raise ContractViolation("zero_pad runs use ZeroPadBaseline")
        self.config = config
        self.schedule = schedule
        self.d1, self.d2, self.n_classes = d1, d2, n_classes
        depth = config.fixed_depth if config.kind == "old_fd" else config.depth
        fixed_last = config.kind == "old_fd"
        rng = RngState(derive_seed(config.seed, 11))
        self.net_old = ElasticNet(
            d1, config.hidden_dim, config.latent_dim, depth, n_classes, rng,
            beta=config.beta, floor=config.floor, fixed_last=fixed_last,
        )
        self.net_new = ElasticNet(
            d2, config.hidden_dim, config.latent_dim, depth, n_classes, rng,
            cross_dim=d1, beta=config.beta, floor=config.floor, fixed_last=fixed_last,
        )
        self.pair = VaePair(
            self.net_old.stack, self.net_new.stack,
            self.net_old.decoders, self.net_new.decoders, self.net_new.cross,
        )
        self.ensemble = EnsembleState(eta=config.eta)
        self.rng = rng
        self.phase = "T1"
        self.t = 0
        # The old_linear ablation drops the whole variational apparatus: its
        # networks train on classification losses alone and the reconstructive
        # mapping is the ridge least-squares fit over the overlap buffer.
        self.variational = config.kind != "old_linear"
        self.lin_buffer = [] if config.kind == "old_linear" else None
        self.lin_map = None
        if config.kind == "old_linear":
            # Incremental ridge statistics so the linear mapping exists (and
            # feeds the ensemble) already during the overlap, refit per round.
            self._lin_gram = RIDGE_LAMBDA * np.eye(d2)
            self._lin_moment = np.zeros((d2, d1))
        # The new-space network standardizes its own inputs online (raw
        # sigmoid features are badly conditioned for SGD); statistics freeze
        # when the overlap ends.
        self.s2_norm = RunningNorm(d2)
        # Reconstructive mapping frozen at overlap end: (pair view, weights).
        self.phi = None
        self.last = {}

    @property
    def depth(self):
        return self.net_old.depth

    def alphas(self):
        hedge = self.net_old.hedge if self.phase == "T1" else self.net_new.hedge
        return hedge.alphas.tolist()

    def p_value(self):
        return self.ensemble.p

    def begin_epoch(self):
        """Re-arm the phase machine for another pass over the same stream
        (offline hindsight training only; online runs never call this)."""
        self.phase = "T1"
        self.t = 0
        self.net_old.frozen = False
        if self.lin_buffer is not None:
            self.lin_buffer = []

    def process(self, inst):
        """Predict on one instance, then learn from its label."""
        if inst.t != self.t + 1:
            raise PhaseError(f"round {inst.t} arrived after round {self.t}")
        if inst.phase == "T1" and self.phase != "T1":
            raise PhaseError("T1 instance after the feature space evolved")
        if inst.phase == "Tb" and self.phase == "T2":
            raise PhaseError("Tb instance after the old space vanished")
        if inst.phase == "T2" and self.phase == "T1":
            raise PhaseError("T2 instance before any overlap was seen")
        self.t = inst.t
        if inst.phase == "T1":
            return self.step_t1(inst.x_s1, inst.y)
        if inst.phase == "Tb":
            return self.step_tb(inst.x_s1, inst.x_s2, inst.y)
        return self.step_t2(inst.x_s2, inst.y)

    def step_t1(self, x_s1, y):
        """Old-space round: predict with the old network, train it with the
        variational and per-layer classification losses."""
        if self.phase != "T1":
            raise PhaseError(f"step_t1 called in phase {self.phase}")
        net = self.net_old
        cache = net.forward(x_s1)
        probs = net.predict_probs(cache)
        noises = draw_layer_noise(self.rng, net.depth, net.latent_dim)
        net.zero_grads()
        comps = losses_and_grads(
            net, cache, noises, y=y, vi_target=x_s1 if self.variational else None
        )
        net.apply_sgd(self.config.learning_rate)
        if self.variational:
            losses = per_layer_losses("T1", "old", vi=comps["vi"], clf=comps["clf"])
        else:
            losses = comps["clf"]
        net.hedge = update_hedge(net.hedge, losses)
        self.last = {"pred_old": probs, "pred_new": None, "p": None, "probs": probs}
        return probs

    def step_tb(self, x_s1, x_s2, y):
        """Overlap round: both networks observe their spaces; the new side
        additionally learns the cross-space reconstruction, and the ensemble
        risks start accumulating."""
        if self.phase == "T1":
            self._begin_overlap()
        elif self.phase != "Tb":
            raise PhaseError(f"step_tb called in phase {self.phase}")
        net_old, net_new = self.net_old, self.net_new
        x_s2n = self.s2_norm.apply(x_s2)
        cache1 = net_old.forward(x_s1)
        cache2 = net_new.forward(x_s2n)
        # The ensemble's old-classifier component consumes the reconstruction
        # already during the overlap, exactly as it will once the old space
        # vanishes; anything else would switch that classifier's input
        # distribution at the boundary and manufacture a performance cliff
        # there. The old network still trains on the true old-space vector.
        if self.variational:
            x_tilde = self._live_reconstruct(cache2)
        elif self.lin_map is not None:
            x_tilde = self.lin_map.T @ x_s2
        else:
            x_tilde = None  # first overlap round: no mapping estimate yet
        if x_tilde is not None:
            pred_old = net_old.predict_probs(net_old.forward(x_tilde))
        else:
            pred_old = net_old.predict_probs(cache1)
        pred_new = net_new.predict_probs(cache2)
        p_used = self.ensemble.p
        probs = ensemble_predict(self.ensemble, pred_old, pred_new)

        noises1 = draw_layer_noise(self.rng, net_old.depth, net_old.latent_dim)
        net_old.zero_grads()
        comps1 = losses_and_grads(
            net_old, cache1, noises1, y=y, vi_target=x_s1 if self.variational else None
        )
        net_old.apply_sgd(self.config.learning_rate)
        if self.variational:
            losses1 = per_layer_losses("Tb", "old", vi=comps1["vi"], clf=comps1["clf"])
        else:
            losses1 = comps1["clf"]
        net_old.hedge = update_hedge(net_old.hedge, losses1)

        round_losses = None
        for extra in range(TB_INNER_STEPS):
            if extra > 0:
                cache2 = net_new.forward(x_s2n)
            noises2 = draw_layer_noise(self.rng, net_new.depth, net_new.latent_dim)
            net_new.zero_grads()
            if self.variational:
                comps2 = losses_and_grads(
                    net_new, cache2, noises2, y=y, vi_target=x_s2n,
                    rec_target=x_s1, peer_cache=cache1,
                )
            else:
                comps2 = losses_and_grads(net_new, cache2, noises2, y=y)
            net_new.apply_sgd(self.config.learning_rate)
            if round_losses is None:
                if self.variational:
                    round_losses = per_layer_losses(
                        "Tb", "new",
                        vi=comps2["vi"], rec=comps2["rec"], clf=comps2["clf"],
                    )
                else:
                    round_losses = comps2["clf"]
        net_new.hedge = update_hedge(net_new.hedge, round_losses)

        # Risk accounting mirrors the prediction pathways above, so p always
        # reflects the classifiers as the ensemble actually uses them.
        self.ensemble = accumulate_risks(
            self.ensemble, _ce_probs(pred_old, y), _ce_probs(pred_new, y)
        )
        if self.lin_buffer is not None:
            self.lin_buffer.append((x_s2.copy(), x_s1.copy()))
            self._lin_gram += np.outer(x_s2, x_s2)
            self._lin_moment += np.outer(x_s2, x_s1)
            self.lin_map = np.linalg.solve(self._lin_gram, self._lin_moment)
        self.last = {"pred_old": pred_old, "pred_new": pred_new, "p": p_used, "probs": probs}
        return probs

    def step_t2(self, x_s2, y):
        """Post-evolution round: rebuild the vanished features, blend the
        frozen old classifier with the live new one, train the new side on
        its classification loss only."""
        if self.phase == "Tb":
            self._end_overlap()
        elif self.phase != "T2":
            raise PhaseError(f"step_t2 called in phase {self.phase}")
        net_old, net_new = self.net_old, self.net_new
        x_s2n = self.s2_norm.apply(x_s2)
        cache2 = net_new.forward(x_s2n)
        x_tilde = self._reconstruct(x_s2n, x_s2)
        cache1 = net_old.forward(x_tilde)
        pred_old = net_old.predict_probs(cache1)
        pred_new = net_new.predict_probs(cache2)
        p_used = self.ensemble.p
        probs = ensemble_predict(self.ensemble, pred_old, pred_new)

        noises2 = draw_layer_noise(self.rng, net_new.depth, net_new.latent_dim)
        net_new.zero_grads()
        comps2 = losses_and_grads(net_new, cache2, noises2, y=y)
        net_new.apply_sgd(self.config.learning_rate)
        net_new.hedge = update_hedge(
            net_new.hedge, per_layer_losses("T2", "new", clf=comps2["clf"])
        )

        # The frozen old network still re-weighs its layers multiplicatively
        # based on how each head handles reconstructed inputs.
        old_ces = np.array(
            [
                softmax_cross_entropy(head.W @ mu + head.b, y)[0]
                for head, mu in zip(net_old.clf.heads, cache1["mu"])
            ]
        )
        net_old.hedge = update_hedge(
            net_old.hedge, per_layer_losses("T2", "old", clf=old_ces)
        )

        self.ensemble = accumulate_risks(
            self.ensemble, _ce_probs(pred_old, y), _ce_probs(pred_new, y)
        )
        self.last = {
            "pred_old": pred_old, "pred_new": pred_new,
            "p": p_used, "probs": probs, "x_tilde": x_tilde,
        }
        return probs

    def _begin_overlap(self):
        self.phase = "Tb"
        if not self.variational:
            return
        # Warm-start the new network from the old one. The old network has
        # had the whole first phase to structure the shared latent space, so
        # the new side inherits everything that lives in or around that
        # space: the deeper trunk layers, the Gaussian heads, the classifier
        # heads (the latent alignment makes the old decision boundaries
        # meaningful for the new codes), and, as cross decoders, the old
        # side's own decoders. Only the first trunk layer, which touches the
        # new feature space directly, starts fresh; the overlap then has to
        # learn little more than that input mapping.
        for l in range(1, self.net_new.depth):
            self.net_new.stack.trunk[l].W[:] = self.net_old.stack.trunk[l].W
            self.net_new.stack.trunk[l].b[:] = self.net_old.stack.trunk[l].b
        for dst, src in (
            (self.net_new.stack.mu_heads, self.net_old.stack.mu_heads),
            (self.net_new.stack.lv_heads, self.net_old.stack.lv_heads),
            (self.net_new.clf.heads, self.net_old.clf.heads),
        ):
            for d, s in zip(dst, src):
                d.W[:] = s.W
                d.b[:] = s.b
        for crs, dec in zip(self.net_new.cross, self.net_old.decoders):
            crs.load_from(dec)

    def _end_overlap(self):
        self.phase = "T2"
        self.net_old.frozen = True
        self.s2_norm.frozen = True
        if self.lin_buffer is not None:
            self.lin_map = fit_linear_map(self.lin_buffer)
        if not self.variational:
            return
        # Freeze the reconstructive mapping as trained during the overlap.
        # The live encoder keeps adapting to the classification loss, but
        # that drift would otherwise degrade the old classifier's inputs.
        stack = self.net_new.stack
        frozen_stack = EncoderStack(
            _copy_layers(stack.trunk), _copy_layers(stack.mu_heads), _copy_layers(stack.lv_heads)
        )
        self.phi = (
            VaePair(
                self.net_old.stack,
                frozen_stack,
                self.net_old.decoders,
                self.net_new.decoders,
                [crs.copy() for crs in self.net_new.cross],
            ),
            HedgeWeights(self.net_new.hedge.alphas.copy(), beta=self.config.beta,
                         floor=0.0, frozen=True),
        )

    def _live_reconstruct(self, cache2):
        """Hedge-blended cross decode of the live codes (overlap phase only,
        before the mapping is frozen)."""
        alphas = self.net_new.hedge.alphas
        out = np.zeros(self.d1)
        for l, head in enumerate(self.net_new.cross):
            out += alphas[l] * head.decode_vector(cache2["mu"][l])
        return out

    def _reconstruct(self, x_s2n, x_s2):
        if self.config.kind == "old_linear":
            return self.lin_map.T @ x_s2
        pair, weights = self.phi
        return vae_reconstruct(pair, x_s2n, weights)

def _copy_layers(layers):
    return [DenseLayer(l.W, l.b) for l in layers]


def soft_threshold(w, threshold):
    """Elementwise shrink toward zero by `threshold`."""
    return np.sign(w) * np.maximum(np.abs(w) - threshold, 0.0)


class ZeroPadBaseline:
    """Linear softmax model over the concatenated feature spaces.

    Absent features are zero-padded; after every gradient step the weights
    (not the bias) are soft-thresholded, which keeps never-observed
    coordinates at exactly zero and encourages sparse solutions.
    """

    def __init__(self, config, d1, d2, n_classes):
        config.validate()
        self.config = config
        self.d1, self.d2 = d1, d2
        self.W = np.zeros((n_classes, d1 + d2))
        self.b = np.zeros(n_classes)
        self.phase = "T1"
        self.t = 0

    @property
    def depth(self):
        return 1

    def alphas(self):
        return [1.0]

    def p_value(self):
        return 0.5

    def begin_epoch(self):
        self.phase = "T1"
        self.t = 0

    def process(self, inst):
        if inst.t != self.t + 1:
            raise PhaseError(f"round {inst.t} arrived after round {self.t}")
        order = {"T1": 0, "Tb": 1, "T2": 2}
        if order[inst.phase] < order[self.phase]:
            raise PhaseError(f"{inst.phase} instance after phase {self.phase}")
        self.t = inst.t
        self.phase = inst.phase
        x = np.zeros(self.d1 + self.d2)
        if inst.x_s1 is not None:
            x[: self.d1] = inst.x_s1
        if inst.x_s2 is not None:
            x[self.d1 :] = inst.x_s2
        logits = self.W @ x + self.b
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        _, g = softmax_cross_entropy(logits, inst.y)
        lr = self.config.learning_rate
        self.W = soft_threshold(self.W - lr * np.outer(g, x), lr * ZERO_PAD_L1)
        self.b -= lr * g
        return probs


def build_learner(config, stream):
    if config.kind == "zero_pad":
        return ZeroPadBaseline(config, stream.d1, stream.d2, stream.n_classes)
    return Old3sLearner(config, stream.d1, stream.d2, stream.n_classes, stream.schedule)


def run_variant(config, stream):
    """Single prequential pass of one variant over one stream.

    Every prediction is emitted (and scored) before its label is consumed for
    training. Returns the per-round MetricsLog.
    """
    learner = build_learner(config, stream)
    log = MetricsLog(learner.depth, seed=config.seed, config=config.as_dict())
    window = stream.schedule.window
    recent = deque()
    running = 0
    for inst in stream:
        try:
            probs = learner.process(inst)
        except ContractViolation as exc:
            raise NumericalError(inst.t, str(exc))
        if not np.isfinite(probs).all():
            raise NumericalError(inst.t, "non-finite prediction")
        pred = int(np.argmax(probs))
        correct = 1 if pred == inst.y else 0
        loss = _ce_probs(probs, inst.y)
        recent.append(correct)
        running += correct
        if len(recent) > window:
            running -= recent.popleft()
        log.append(
            inst.t, inst.phase, correct, loss,
            running / len(recent), learner.p_value(), learner.alphas(),
        )
    return log


def hindsight_estimate(stream, config, epochs=5):
    """Offline reference accuracy: train the same architecture over the whole
    stream for `epochs` passes (parameters persist, the phase machine re-arms
    each pass) and report the trailing-window accuracy at the very end."""
    learner = build_learner(
        VariantConfig(**{**config.as_dict(), "seed": derive_seed(config.seed, 999)}),
        stream,
    )
    window = stream.schedule.window
    final = 0.0
    for _ in range(epochs):
        learner.begin_epoch()
        recent = deque()
        running = 0
        for inst in stream:
            probs = learner.process(inst)
            correct = 1 if int(np.argmax(probs)) == inst.y else 0
            recent.append(correct)
            running += correct
            if len(recent) > window:
                running -= recent.popleft()
        final = running / len(recent)
    return final
