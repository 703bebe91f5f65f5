import math

import numpy as np
import pytest

from old3s.nn import (
    ContractViolation,
    DenseLayer,
    RngState,
    activation,
    dense_backward,
    dense_forward,
    finite_diff_check,
    sample_gaussian,
    sgd_step,
    softmax,
    softmax_cross_entropy,
)


def test_dense_forward_identity():
    layer = DenseLayer(np.eye(2), np.zeros(2))
    assert np.array_equal(dense_forward(layer, [3.0, -1.0]), [3.0, -1.0])


def test_dense_forward_zero_weights_returns_bias():
    layer = DenseLayer(np.zeros((2, 2)), [1.0, 2.0])
    assert np.array_equal(dense_forward(layer, [5.0, -7.0]), [1.0, 2.0])


def test_dense_forward_hand_product():
    layer = DenseLayer([[1.0, 2.0], [3.0, 4.0]], np.zeros(2))
    assert np.array_equal(dense_forward(layer, [1.0, 1.0]), [3.0, 7.0])


def test_dense_forward_dimension_mismatch():
    layer = DenseLayer(np.eye(2), np.zeros(2))
    with pytest.raises(ContractViolation):
        dense_forward(layer, [1.0, 2.0, 3.0])


def test_dense_forward_rejects_non_finite():
    layer = DenseLayer(np.eye(2), np.zeros(2))
    with pytest.raises(ContractViolation):
        dense_forward(layer, [np.nan, 0.0])


def test_dense_backward_zero_cotangent():
    rng = RngState(0)
    layer = DenseLayer.glorot(3, 4, rng)
    gin, gw, gb = dense_backward(layer, rng.standard_normal(4), np.zeros(3))
    assert not gin.any() and not gw.any() and not gb.any()


def test_dense_backward_identity_passes_gradient():
    layer = DenseLayer(np.eye(3), np.zeros(3))
    g = np.array([0.5, -2.0, 1.0])
    gin, _, gb = dense_backward(layer, np.ones(3), g)
    assert np.array_equal(gin, g)
    assert np.array_equal(gb, g)


def test_dense_backward_matches_finite_differences():
    # Fixed linear readout r so the composed map is scalar-valued.
    rng = RngState(7)
    layer = DenseLayer.glorot(3, 4, rng)
    x = rng.standard_normal(4)
    r = rng.standard_normal(3)

    gin, gw, gb = dense_backward(layer, x, r)
    err = finite_diff_check(
        lambda: float(r @ dense_forward(layer, x)), [layer.W, layer.b], [gw, gb]
    )
    assert err < 1e-6
    err_x = finite_diff_check(lambda: float(r @ dense_forward(layer, x)), [x], [gin])
    assert err_x < 1e-6


def test_dense_backward_randomized_shapes_against_finite_differences():
    rng = RngState(123)
    for _ in range(25):
        n_in = int(rng.integers(1, 9))
        n_out = int(rng.integers(1, 9))
        layer = DenseLayer.glorot(n_out, n_in, rng)
        x = rng.standard_normal(n_in)
        r = rng.standard_normal(n_out)
        _, gw, gb = dense_backward(layer, x, r)
        err = finite_diff_check(
            lambda: float(r @ dense_forward(layer, x)), [layer.W, layer.b], [gw, gb]
        )
        assert err < 1e-4


def test_activation_relu_sign_cases():
    y, dy = activation("relu", np.array([-1.0, 0.0, 2.0]))
    assert np.array_equal(y, [0.0, 0.0, 2.0])
    assert np.array_equal(dy, [0.0, 0.0, 1.0])


def test_activation_sigmoid_symmetry_point():
    y, dy = activation("sigmoid", np.array([0.0]))
    assert y[0] == 0.5
    assert dy[0] == 0.25


def test_activation_sigmoid_extremes_are_finite():
    y, _ = activation("sigmoid", np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(y))
    assert y[0] < 1e-300 and y[1] == 1.0


def test_activation_tanh_derivative_at_zero():
    _, dy = activation("tanh", np.array([0.0]))
    assert dy[0] == 1.0


def test_activation_unknown_kind():
    with pytest.raises(ContractViolation):
        activation("gelu", np.array([0.0]))


def test_softmax_cross_entropy_uniform_logits():
    loss, grad = softmax_cross_entropy(np.zeros(2), 0)
    assert math.isclose(loss, math.log(2.0), rel_tol=0, abs_tol=1e-15)
    assert np.allclose(grad, [-0.5, 0.5])


def test_softmax_cross_entropy_extreme_logits_stable():
    loss, grad = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
    assert math.isfinite(loss) and loss < 1e-300
    assert np.all(np.isfinite(grad))


def test_softmax_cross_entropy_hand_value():
    loss, _ = softmax_cross_entropy(np.array([1.0, 2.0, 3.0]), 2)
    # -log softmax([1,2,3])[2] = log(1 + e^-1 + e^-2)
    assert math.isclose(loss, 0.40760596444438104, abs_tol=1e-12)


def test_softmax_cross_entropy_label_out_of_range():
    with pytest.raises(ContractViolation):
        softmax_cross_entropy(np.zeros(3), 3)


def test_softmax_cross_entropy_grad_sums_to_zero_and_loss_nonneg():
    rng = RngState(5)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        logits = rng.standard_normal(n) * 10.0
        label = int(rng.integers(0, n))
        loss, grad = softmax_cross_entropy(logits, label)
        assert loss >= 0.0
        assert abs(grad.sum()) < 1e-12


def test_softmax_cross_entropy_equal_logits_gives_log_c():
    for c in (2, 3, 5):
        loss, _ = softmax_cross_entropy(np.full(c, 3.7), 1)
        assert math.isclose(loss, math.log(c), rel_tol=1e-12)


def test_softmax_sums_to_one():
    p = softmax(np.array([3.0, -2.0, 0.5]))
    assert math.isclose(p.sum(), 1.0, rel_tol=1e-12)


def test_sample_gaussian_zero_noise_returns_mu():
    mu = np.array([1.0, -2.0])
    z, noise = sample_gaussian(mu, np.zeros(2), None, noise=np.zeros(2))
    assert np.array_equal(z, mu)
    assert np.array_equal(noise, np.zeros(2))


def test_sample_gaussian_clamps_log_var():
    mu = np.zeros(2)
    z, _ = sample_gaussian(mu, np.array([-50.0, -50.0]), None, noise=np.ones(2))
    # clamped to -10: std = e^-5
    assert np.allclose(z, math.exp(-5.0))


def test_sample_gaussian_gradients_match_finite_differences():
    rng = RngState(11)
    mu = rng.standard_normal(4)
    lv = 0.5 * rng.standard_normal(4)
    zeta = rng.standard_normal(4)
    r = rng.standard_normal(4)

    def value():
        z, _ = sample_gaussian(mu, lv, None, noise=zeta)
        return float(r @ z)

    dmu = r.copy()
    dlv = r * zeta * np.exp(0.5 * lv) * 0.5
    assert finite_diff_check(value, [mu, lv], [dmu, dlv]) < 1e-6


def test_sample_gaussian_bit_reproducible():
    a = sample_gaussian(np.zeros(3), np.zeros(3), RngState(99))[0]
    b = sample_gaussian(np.zeros(3), np.zeros(3), RngState(99))[0]
    assert np.array_equal(a, b)


def test_rng_state_sequences_reproducible():
    r1, r2 = RngState(42), RngState(42)
    assert np.array_equal(r1.standard_normal(10), r2.standard_normal(10))
    assert np.array_equal(r1.permutation(10), r2.permutation(10))


def test_sgd_zero_gradient_is_identity():
    p = np.array([1.0, 2.0])
    sgd_step([p], [np.zeros(2)], 0.5)
    assert np.array_equal(p, [1.0, 2.0])


def test_sgd_arithmetic():
    p = np.array([1.0])
    sgd_step([p], [np.array([1.0])], 0.1)
    assert np.allclose(p, [0.9])


def test_sgd_two_steps_equal_summed_gradients():
    p1 = np.array([1.0, -1.0])
    p2 = p1.copy()
    g1 = np.array([0.2, 0.3])
    g2 = np.array([-0.1, 0.4])
    sgd_step([p1], [g1], 0.05)
    sgd_step([p1], [g2], 0.05)
    sgd_step([p2], [g1 + g2], 0.05)
    assert np.allclose(p1, p2)


def test_sgd_rejects_bad_learning_rate_and_shapes():
    with pytest.raises(ContractViolation):
        sgd_step([np.zeros(2)], [np.zeros(2)], 0.0)
    with pytest.raises(ContractViolation):
        sgd_step([np.zeros(2)], [np.zeros(3)], 0.1)


def test_finite_diff_exact_for_quadratic():
    w = np.array([0.3, -0.7])
    x = np.array([1.0, 2.0])

    def loss():
        r = w @ x - 1.0
        return float(r * r)

    grad = 2.0 * (w @ x - 1.0) * x
    assert finite_diff_check(loss, [w], [grad]) < 1e-8


def test_finite_diff_reports_corrupted_gradient():
    w = np.array([0.5])

    def loss():
        return float(w[0] ** 2)

    good = np.array([2.0 * w[0]])
    err = finite_diff_check(loss, [w], [2.0 * good])
    assert abs(err - 0.5) < 1e-6


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ContractViolation):
        finite_diff_check(lambda: 0.0, [np.zeros(1)], [np.zeros(1)], eps=1e-2)
