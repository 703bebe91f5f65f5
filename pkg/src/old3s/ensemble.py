"""Exponential-experts blend of the old-space and new-space classifiers.

Both classifiers predict every round once the new feature space exists; their
cross-entropy losses accumulate into cumulative risks, and the blending
coefficient p follows the exponentially weighted ratio of those risks, so
whichever classifier has suffered less drives the ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import ContractViolation

_P_MIN = 1e-12  # keeps p strictly inside (0, 1) even for extreme risk gaps


@dataclass
class EnsembleState:
    """Cumulative risks of the two classifiers and the blend coefficient."""

    eta: float = 0.01
    risk_old: float = 0.0
    risk_new: float = 0.0
    p: float = 0.5

    def __post_init__(self):
        if not self.eta > 0:
            raise ContractViolation(f"eta must be > 0, got {self.eta}")


def update_p(state):
    """p = exp(-eta*R_old) / (exp(-eta*R_old) + exp(-eta*R_new)), computed in
    the overflow-safe logistic form 1 / (1 + exp(-eta*(R_new - R_old)))."""
    gap = state.eta * (state.risk_new - state.risk_old)
    if gap >= 0:
        p = 1.0 / (1.0 + math.exp(-gap))
    else:
        e = math.exp(gap)
        p = e / (1.0 + e)
    return min(max(p, _P_MIN), 1.0 - _P_MIN)


def accumulate_risks(state, loss_old, loss_new):
    """Add one round's losses to the risks and refresh p."""
    for name, v in (("loss_old", loss_old), ("loss_new", loss_new)):
        if not math.isfinite(v) or v < 0:
            raise ContractViolation(f"{name} must be finite and >= 0, got {v}")
    state = EnsembleState(
        eta=state.eta,
        risk_old=state.risk_old + float(loss_old),
        risk_new=state.risk_new + float(loss_new),
    )
    state.p = update_p(state)
    return state


def ensemble_predict(state, pred_old, pred_new):
    """p * pred_old + (1 - p) * pred_new over two probability vectors."""
    pred_old = np.asarray(pred_old, dtype=np.float64)
    pred_new = np.asarray(pred_new, dtype=np.float64)
    if pred_old.shape != pred_new.shape:
        raise ContractViolation("prediction length mismatch")
    for name, v in (("pred_old", pred_old), ("pred_new", pred_new)):
        if abs(v.sum() - 1.0) > 1e-6 or (v < 0).any():
            raise ContractViolation(f"{name} is not a probability vector")
    return state.p * pred_old + (1.0 - state.p) * pred_new
