import numpy as np
import pytest

from old3s.hedge import (
    ElasticClassifier,
    HedgeWeights,
    aggregate_predict,
    per_layer_losses,
    update_hedge,
)
from old3s.nn import ContractViolation, RngState


def test_uniform_initialization():
    w = HedgeWeights.uniform(4)
    assert np.allclose(w.alphas, 0.25)
    assert w.floor == 0.01 / 4


def test_simplex_validation_rejects_bad_weights():
    with pytest.raises(ContractViolation):
        HedgeWeights(np.array([0.7, 0.7]))
    with pytest.raises(ContractViolation):
        HedgeWeights(np.array([1.2, -0.2]))


def test_update_all_equal_losses_is_identity_up_to_float():
    w = HedgeWeights(np.array([0.1, 0.2, 0.3, 0.4]), floor=0.0)
    updated = update_hedge(w, np.full(4, 2.5))
    assert np.allclose(updated.alphas, w.alphas, rtol=1e-14)


def test_update_hand_value():
    w = HedgeWeights(np.array([0.5, 0.5]), beta=0.5, floor=0.0)
    updated = update_hedge(w, np.array([1.0, 0.0]))
    assert np.allclose(updated.alphas, [1.0 / 3.0, 2.0 / 3.0], rtol=1e-14)


def test_update_ratio_identity():
    rng = RngState(1)
    w = HedgeWeights.uniform(3, beta=0.9, floor=0.0)
    for _ in range(50):
        losses = np.abs(rng.standard_normal(3)) * 4.0
        max_loss = max(w.max_loss, losses.max())
        scaled = losses / max_loss
        before = w.alphas.copy()
        w = update_hedge(w, losses)
        for i in range(3):
            for j in range(3):
                expected = (before[i] / before[j]) * w.beta ** (scaled[i] - scaled[j])
                assert np.isclose(w.alphas[i] / w.alphas[j], expected, rtol=1e-9)


def test_update_keeps_floor_and_simplex_under_extreme_losses():
    w = HedgeWeights.uniform(4, floor=0.01 / 4)
    for _ in range(4000):
        w = update_hedge(w, np.array([0.0, 100.0, 100.0, 100.0]))
    assert abs(w.alphas.sum() - 1.0) <= 1e-9
    assert w.alphas.min() >= w.floor


def test_update_rejects_bad_losses():
    w = HedgeWeights.uniform(2)
    with pytest.raises(ContractViolation):
        update_hedge(w, np.array([1.0, np.nan]))
    with pytest.raises(ContractViolation):
        update_hedge(w, np.array([1.0, -0.5]))
    with pytest.raises(ContractViolation):
        update_hedge(w, np.array([1.0, 1.0, 1.0]))


def test_frozen_weights_never_move():
    w = HedgeWeights.fixed_last(3)
    updated = update_hedge(w, np.array([5.0, 0.0, 9.0]))
    assert updated is w
    assert np.array_equal(w.alphas, [0.0, 0.0, 1.0])


def test_monotone_dominance_with_zero_floor():
    # If layer 0's loss never exceeds layer 1's, the ratio a0/a1 never falls.
    rng = RngState(7)
    w = HedgeWeights.uniform(2, floor=0.0)
    ratio = w.alphas[0] / w.alphas[1]
    for _ in range(300):
        low = float(np.abs(rng.standard_normal(1))[0])
        high = low + float(np.abs(rng.standard_normal(1))[0])
        w = update_hedge(w, np.array([low, high]))
        new_ratio = w.alphas[0] / w.alphas[1]
        assert new_ratio >= ratio - 1e-12
        ratio = new_ratio


def test_aggregate_single_layer_is_softmax():
    w = HedgeWeights.uniform(1)
    logits = np.array([1.0, 2.0, 0.0])
    e = np.exp(logits - logits.max())
    assert np.allclose(aggregate_predict(w, [logits]), e / e.sum())


def test_aggregate_identical_logits_is_fixed_point():
    w = HedgeWeights(np.array([0.3, 0.2, 0.5]), floor=0.0)
    logits = np.array([0.5, -0.5])
    single = aggregate_predict(HedgeWeights.uniform(1), [logits])
    assert np.allclose(aggregate_predict(w, [logits] * 3), single)


def test_aggregate_hand_value():
    # alpha = (0.25, 0.75) over softmaxes (0.9, 0.1) and (0.1, 0.9).
    w = HedgeWeights(np.array([0.25, 0.75]), floor=0.0)
    la = np.log(np.array([0.9, 0.1]))
    lb = np.log(np.array([0.1, 0.9]))
    assert np.allclose(aggregate_predict(w, [la, lb]), [0.3, 0.7], rtol=1e-12)


def test_aggregate_is_probability_vector():
    rng = RngState(3)
    for _ in range(100):
        L = int(rng.integers(1, 5))
        w = HedgeWeights.uniform(L)
        logits = [rng.standard_normal(4) * 8.0 for _ in range(L)]
        p = aggregate_predict(w, logits)
        assert abs(p.sum() - 1.0) < 1e-12
        assert (p >= 0).all()


def test_aggregate_rejects_wrong_length():
    with pytest.raises(ContractViolation):
        aggregate_predict(HedgeWeights.uniform(2), [np.zeros(3)])


def test_per_layer_losses_phase_gating():
    vi = np.array([1.0, 2.0])
    rec = np.array([0.5, 0.5])
    clf = np.array([0.1, 0.2])
    assert np.allclose(per_layer_losses("T1", "old", vi=vi, clf=clf), [1.1, 2.2])
    assert np.allclose(
        per_layer_losses("Tb", "new", vi=vi, rec=rec, clf=clf), [1.6, 2.7]
    )
    assert np.allclose(per_layer_losses("T2", "new", clf=clf), clf)
    # The cross-space term never exists outside the overlap, and the
    # variational term never exists after the old space vanishes.
    with pytest.raises(ContractViolation):
        per_layer_losses("T1", "old", vi=vi, rec=rec, clf=clf)
    with pytest.raises(ContractViolation):
        per_layer_losses("T2", "new", vi=vi, clf=clf)
    with pytest.raises(ContractViolation):
        per_layer_losses("Tb", "new", vi=vi, clf=clf)


def test_uniform_losses_keep_uniform_weights_through_composition():
    # Identical untrained heads produce identical losses; the hedge must not
    # drift off uniform.
    w = HedgeWeights.uniform(3)
    for _ in range(10):
        w = update_hedge(w, per_layer_losses("T2", "new", clf=np.full(3, 0.7)))
    assert np.allclose(w.alphas, 1.0 / 3.0, rtol=1e-12)


def test_elastic_classifier_zero_init_and_shapes():
    clf = ElasticClassifier.build(5, 3, 2)
    assert clf.depth == 2 and clf.n_classes == 3
    logits = clf.logits([np.ones(5), np.ones(5)])
    assert all(np.array_equal(l, np.zeros(3)) for l in logits)
