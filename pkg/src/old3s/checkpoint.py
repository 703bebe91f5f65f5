"""Versioned model checkpoints: every weight array plus dims, seed, phase,
hedge weights, and ensemble state, as one JSON document."""

from __future__ import annotations

import json

import numpy as np

from .ensemble import EnsembleState
from .hedge import HedgeWeights
from .learner import Old3sLearner, VariantConfig
from .nn import ContractViolation, DenseLayer
from .stream import PhaseSchedule
from .vae import DecoderHead, EncoderStack, VaePair

MAGIC = "OLD3S-CKPT-v1"


def _net_groups(net):
    groups = {
        "trunk": net.stack.trunk,
        "mu": net.stack.mu_heads,
        "lv": net.stack.lv_heads,
        "clf": net.clf.heads,
        "dec": [l for head in net.decoders for l in head.layers()],
    }
    if net.cross is not None:
        groups["cross"] = [l for head in net.cross for l in head.layers()]
    return groups


def _net_arrays(net, prefix):
    out = {}
    for name, layers in _net_groups(net).items():
        for i, layer in enumerate(layers):
            out[f"{prefix}.{name}.{i}.W"] = layer.W.tolist()
            out[f"{prefix}.{name}.{i}.b"] = layer.b.tolist()
    return out


def _restore_net(net, prefix, arrays):
    for name, layers in _net_groups(net).items():
        for i, layer in enumerate(layers):
            W = np.asarray(arrays[f"{prefix}.{name}.{i}.W"], dtype=np.float64)
            b = np.asarray(arrays[f"{prefix}.{name}.{i}.b"], dtype=np.float64)
            if W.shape != layer.W.shape or b.shape != layer.b.shape:
                raise ContractViolation(f"checkpoint array {prefix}.{name}.{i} has wrong shape")
            layer.W[:] = W
            layer.b[:] = b


def _hedge_dict(h):
    return {
        "alphas": h.alphas.tolist(),
        "beta": h.beta,
        "floor": h.floor,
        "max_loss": h.max_loss,
        "frozen": h.frozen,
    }


def _hedge_from(d):
    return HedgeWeights(
        np.asarray(d["alphas"], dtype=np.float64),
        beta=d["beta"],
        floor=d["floor"],
        max_loss=d["max_loss"],
        frozen=d["frozen"],
    )


def save_checkpoint(learner, path):
    """Dump an Old3sLearner (any non-zero_pad variant) to a JSON checkpoint."""
    doc = {
        "magic": MAGIC,
        "config": learner.config.as_dict(),
        "schedule": {
            "n_total": learner.schedule.n_total,
            "t1_end": learner.schedule.t1_end,
            "tb_end": learner.schedule.tb_end,
            "window": learner.schedule.window,
        },
        "dims": {"d1": learner.d1, "d2": learner.d2, "n_classes": learner.n_classes},
        "phase": learner.phase,
        "t": learner.t,
        "hedge_old": _hedge_dict(learner.net_old.hedge),
        "hedge_new": _hedge_dict(learner.net_new.hedge),
        "ensemble": {
            "eta": learner.ensemble.eta,
            "risk_old": learner.ensemble.risk_old,
            "risk_new": learner.ensemble.risk_new,
            "p": learner.ensemble.p,
        },
        "frozen_old": learner.net_old.frozen,
        "lin_map": None if learner.lin_map is None else learner.lin_map.tolist(),
        "s2_norm": {
            "count": learner.s2_norm.count,
            "mean": learner.s2_norm.mean.tolist(),
            "m2": learner.s2_norm.m2.tolist(),
            "frozen": learner.s2_norm.frozen,
        },
        "phi": _phi_dict(learner.phi),
        "arrays": {**_net_arrays(learner.net_old, "old"), **_net_arrays(learner.net_new, "new")},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _layer_list(layers):
    return [{"W": l.W.tolist(), "b": l.b.tolist()} for l in layers]


def _layers_from(items):
    return [DenseLayer(np.asarray(it["W"]), np.asarray(it["b"])) for it in items]


def _phi_dict(phi):
    if phi is None:
        return None
    pair, weights = phi
    return {
        "trunk": _layer_list(pair.stack2.trunk),
        "mu": _layer_list(pair.stack2.mu_heads),
        "lv": _layer_list(pair.stack2.lv_heads),
        "cross": _layer_list([l for head in pair.cross for l in head.layers()]),
        "alphas": weights.alphas.tolist(),
        "beta": weights.beta,
    }


def _phi_from(doc, learner):
    if doc is None:
        return None
    stack = EncoderStack(
        _layers_from(doc["trunk"]), _layers_from(doc["mu"]), _layers_from(doc["lv"])
    )
    flat = _layers_from(doc["cross"])
    cross = [DecoderHead(flat[i], flat[i + 1]) for i in range(0, len(flat), 2)]
    pair = VaePair(
        learner.net_old.stack, stack,
        learner.net_old.decoders, learner.net_new.decoders,
        cross,
    )
    weights = HedgeWeights(
        np.asarray(doc["alphas"]), beta=doc["beta"], floor=0.0, frozen=True
    )
    return pair, weights


def load_checkpoint(path):
    """Rebuild a learner from a checkpoint, bit-exact in every parameter."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("magic") != MAGIC:
        raise ContractViolation(f"{path}: bad or missing checkpoint magic")
    config = VariantConfig(**doc["config"])
    schedule = PhaseSchedule(**doc["schedule"])
    dims = doc["dims"]
    learner = Old3sLearner(config, dims["d1"], dims["d2"], dims["n_classes"], schedule)
    _restore_net(learner.net_old, "old", doc["arrays"])
    _restore_net(learner.net_new, "new", doc["arrays"])
    learner.net_old.hedge = _hedge_from(doc["hedge_old"])
    learner.net_new.hedge = _hedge_from(doc["hedge_new"])
    ens = doc["ensemble"]
    learner.ensemble = EnsembleState(eta=ens["eta"], risk_old=ens["risk_old"], risk_new=ens["risk_new"])
    learner.ensemble.p = ens["p"]
    learner.phase = doc["phase"]
    learner.t = doc["t"]
    learner.net_old.frozen = doc["frozen_old"]
    if doc["lin_map"] is not None:
        learner.lin_map = np.asarray(doc["lin_map"], dtype=np.float64)
    norm = doc["s2_norm"]
    learner.s2_norm.count = norm["count"]
    learner.s2_norm.mean = np.asarray(norm["mean"], dtype=np.float64)
    learner.s2_norm.m2 = np.asarray(norm["m2"], dtype=np.float64)
    learner.s2_norm.frozen = norm["frozen"]
    learner.phi = _phi_from(doc["phi"], learner)
    return learner
