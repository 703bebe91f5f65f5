"""Randomized verification suites: gradient checks against central finite
differences, Monte-Carlo oracles for the closed-form KL terms, and invariant
sweeps for the hedge and ensemble updates. Shared by the CLI self-check and
the acceptance tests so both run the same code."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleState, accumulate_risks, ensemble_predict
from .hedge import HedgeWeights, aggregate_predict, update_hedge
from .learner import ElasticNet, draw_layer_noise, losses_and_grads
from .nn import RngState, finite_diff_check
from .vae import GaussianCode, kl_between, kl_standard, monte_carlo_kl_between, monte_carlo_kl_standard


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _total_objective(net, comps):
    total = None
    for values in comps.values():
        if values is None:
            continue
        total = values.copy() if total is None else total + values
    return float(net.hedge.alphas @ total)


def _random_net_case(rng, mode):
    """Build a small random network pair plus inputs for one check mode.

    mode "t1": vi + clf on a single net; "tb": vi + rec + clf on the new-space
    net against fixed peer codes; "t2": clf only.
    """
    def pick(lo, hi):
        return int(rng.integers(lo, hi + 1))

    d1 = pick(2, 8)
    d2 = pick(2, 8)
    hidden = pick(2, 8)
    latent = pick(2, 8)
    depth = pick(1, 3)
    n_classes = pick(2, 4)
    net_old = ElasticNet(d1, hidden, latent, depth, n_classes, rng)
    # Non-zero classifier heads so the clf path has generic gradients.
    for head in net_old.clf.heads:
        head.W[:] = 0.3 * rng.standard_normal(head.W.shape)
    x1 = rng.standard_normal(d1)
    y = pick(0, n_classes - 1)
    if mode == "t1":
        return net_old, x1, {"y": y, "vi_target": x1}
    if mode == "t2":
        return net_old, x1, {"y": y}
    net_new = ElasticNet(d2, hidden, latent, depth, n_classes, rng, cross_dim=d1)
    for head in net_new.clf.heads:
        head.W[:] = 0.3 * rng.standard_normal(head.W.shape)
    x2 = rng.standard_normal(d2)
    peer_cache = net_old.forward(x1)
    return net_new, x2, {"y": y, "vi_target": x2, "rec_target": x1, "peer_cache": peer_cache}


def _kink_free(cache, margin):
    """True if no relu pre-activation sits within `margin` of its kink."""
    return all(np.abs(s).min() > margin for s in cache["s"] if s.size)


def gradient_check_suite(n_draws=100, seed=12345, eps=1e-5, tol=1e-4, corrupt=False):
    """Finite-difference check over every trainable path (encoder trunk,
    Gaussian heads, decoders, cross decoders, classifier heads) with the
    reparameterization noise held fixed. Draws landing near a relu kink are
    redrawn, since central differences are meaningless there."""
    rng = RngState(seed)
    worst = 0.0
    modes = ("t1", "tb", "t2")
    done = 0
    while done < n_draws:
        mode = modes[done % 3]
        net, x, kwargs = _random_net_case(rng, mode)
        cache = net.forward(x)
        if not _kink_free(cache, 10 * eps):
            continue
        noises = draw_layer_noise(rng, net.depth, net.latent_dim)
        net.zero_grads()
        losses_and_grads(net, cache, noises, **kwargs)
        params, grads = [], []
        for layer in net.all_layers():
            params += layer.params()
            grads += [g.copy() for g in layer.grads()]
        if corrupt:
            grads[0] = 2.0 * grads[0]

        def loss_fn():
            probe = net.forward(x)
            net.zero_grads()
            comps = losses_and_grads(net, probe, noises, **kwargs)
            return _total_objective(net, comps)

        err = finite_diff_check(loss_fn, params, grads, eps=eps)
        worst = max(worst, err)
        done += 1
    passed = worst < tol
    return SuiteResult("nn-substrate", passed, f"max relative gradient error {worst:.3e}")


def kl_oracle_suite(n_pairs=20, n_samples=1_000_000, seed=4242, sigmas=3.0):
    """Closed-form KL terms versus Monte-Carlo estimates, plus the exact-zero
    identities on matching distributions."""
    rng = RngState(seed)
    worst = 0.0
    for _ in range(n_pairs):
        dim = int(rng.integers(1, 5))
        a = GaussianCode(rng.standard_normal(dim), 0.5 * rng.standard_normal(dim))
        b = GaussianCode(rng.standard_normal(dim), 0.5 * rng.standard_normal(dim))
        est, se = monte_carlo_kl_standard(a, n_samples, rng)
        worst = max(worst, abs(kl_standard(a) - est) / max(se, 1e-12))
        est, se = monte_carlo_kl_between(a, b, n_samples, rng)
        worst = max(worst, abs(kl_between(a, b) - est) / max(se, 1e-12))
    zero_dim = 3
    same = GaussianCode(np.zeros(zero_dim), np.zeros(zero_dim))
    exact_std = kl_standard(same)
    other = GaussianCode(rng.standard_normal(zero_dim), 0.3 * rng.standard_normal(zero_dim))
    exact_btw = kl_between(other, other)
    passed = worst < sigmas and exact_std == 0.0 and exact_btw == 0.0
    return SuiteResult(
        "vae-kl", passed,
        f"max Monte-Carlo deviation {worst:.2f} standard errors; "
        f"identical-input KLs {exact_std}, {exact_btw}",
    )


def hedge_invariant_suite(n_steps=100_000, seed=777):
    """Randomized multiplicative updates must keep the weights on the floored
    simplex and respect the pairwise discount identity."""
    rng = RngState(seed)
    weights = HedgeWeights.uniform(4)
    worst_sum = 0.0
    worst_ratio = 0.0
    floor_ok = True
    agg_ok = True
    for step in range(n_steps):
        if step % 10_000 == 0:
            depth = int(rng.integers(2, 7))
            weights = HedgeWeights.uniform(depth)
        losses = np.abs(rng.standard_normal(weights.depth)) * float(rng.uniform(0.1, 10.0, 1)[0])
        before = weights.alphas.copy()
        max_loss = max(weights.max_loss, float(losses.max()))
        weights = update_hedge(weights, losses)
        worst_sum = max(worst_sum, abs(weights.alphas.sum() - 1.0))
        if weights.alphas.min() < weights.floor:
            floor_ok = False
        # Pairwise identity before smoothing: the ratio moves by exactly
        # beta^(scaled_i - scaled_j).
        scaled = losses / max_loss
        u = before * np.power(weights.beta, scaled)
        lhs = u[0] / u[1]
        rhs = (before[0] / before[1]) * weights.beta ** (scaled[0] - scaled[1])
        worst_ratio = max(worst_ratio, abs(lhs - rhs) / abs(rhs))
        if step % 100 == 0:
            logits = [rng.standard_normal(3) * 5.0 for _ in range(weights.depth)]
            agg = aggregate_predict(weights, logits)
            if abs(agg.sum() - 1.0) > 1e-9 or (agg < 0).any() or (agg > 1).any():
                agg_ok = False
    passed = worst_sum <= 1e-9 and floor_ok and worst_ratio < 1e-9 and agg_ok
    return SuiteResult(
        "hedge", passed,
        f"max |sum-1| {worst_sum:.2e}, floor held {floor_ok}, "
        f"max ratio-identity error {worst_ratio:.2e}, aggregation simplex held {agg_ok}",
    )


def ensemble_invariant_suite(n_steps=100_000, seed=99):
    """Randomized risk accumulation must keep p strictly inside (0,1) and the
    blended prediction on the probability simplex."""
    rng = RngState(seed)
    state = EnsembleState(eta=0.01)
    ok = True
    worst_sum = 0.0
    for step in range(n_steps):
        if step % 10_000 == 0:
            state = EnsembleState(eta=float(rng.uniform(1e-4, 1.0, 1)[0]))
        lo, ln = np.abs(rng.standard_normal(2)) * 3.0
        state = accumulate_risks(state, float(lo), float(ln))
        if not 0.0 < state.p < 1.0:
            ok = False
        if step % 100 == 0:
            k = int(rng.integers(2, 5))
            raw = np.abs(rng.standard_normal(k)) + 1e-3
            pa = raw / raw.sum()
            raw = np.abs(rng.standard_normal(k)) + 1e-3
            pb = raw / raw.sum()
            out = ensemble_predict(state, pa, pb)
            worst_sum = max(worst_sum, abs(out.sum() - 1.0))
            if (out < 0).any():
                ok = False
    passed = ok and worst_sum < 1e-9
    return SuiteResult(
        "ensemble", passed,
        f"p stayed in (0,1): {ok}; max |prediction sum - 1| {worst_sum:.2e}",
    )


def run_all(fast=False, corrupt_gradient=False):
    """Every suite, sized down when fast=True (used by unit tests)."""
    if fast:
        return [
            gradient_check_suite(n_draws=12, corrupt=corrupt_gradient),
            kl_oracle_suite(n_pairs=4, n_samples=200_000),
            hedge_invariant_suite(n_steps=5_000),
            ensemble_invariant_suite(n_steps=5_000),
        ]
    return [
        gradient_check_suite(corrupt=corrupt_gradient),
        kl_oracle_suite(),
        hedge_invariant_suite(),
        ensemble_invariant_suite(),
    ]
