import numpy as np
import pytest

from core.errors import DimensionMismatch
from core.models import (
    LinearModel,
    MlpValueNet,
    ProductModel,
    ScalarSigmoidCelu,
    SoftmaxMlp,
    celu,
    hidden_pennies_model,
    jacobian_error,
    random_rps_model,
    singular_bounds,
)


def _models(rng):
    return [
        LinearModel(rng.standard_normal((4, 3))),
        ScalarSigmoidCelu(0.5, 1.0),
        ScalarSigmoidCelu(-0.8, 0.6),
        SoftmaxMlp(rng.uniform(-1, 1, (4, 5)), rng.uniform(-1, 1, (3, 4))),
        random_rps_model(rng),
        MlpValueNet(rng.standard_normal((7, 3)), hidden=6),
    ]


def test_celu_unit_scale():
    np.testing.assert_allclose(celu(np.array([-1.0, 0.0, 2.0])), [np.expm1(-1.0), 0.0, 2.0])


def test_sigmoid_celu_forward_and_jacobian():
    m = ScalarSigmoidCelu(0.5, 1.0)
    assert m.forward([0.0])[0] == pytest.approx(0.5)
    assert m.forward([1.25])[0] == pytest.approx(0.651355, abs=1e-6)
    assert m.jacobian([0.0])[0, 0] == pytest.approx(0.125)


def test_linear_model_examples():
    phi = np.array([[1.0, 2.0], [3.0, 4.0]])
    m = LinearModel(phi)
    np.testing.assert_array_equal(LinearModel(np.eye(3)).forward([1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_array_equal(m.jacobian([5.0, -1.0]), phi)
    np.testing.assert_array_equal(m.vjp([0.0, 0.0], [1.0, 0.0]), [1.0, 2.0])


def test_forward_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        LinearModel(np.eye(2)).forward([1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        LinearModel(np.eye(2)).vjp([1.0, 2.0], [1.0])


def test_jacobians_match_finite_differences(rng):
    for model in _models(rng):
        for _ in range(20):
            assert jacobian_error(model, rng.standard_normal(model.d)) <= 1e-5, type(model).__name__


def test_vjp_matches_dense_jacobian(rng):
    for model in _models(rng):
        theta = rng.standard_normal(model.d)
        u = rng.standard_normal(model.n)
        np.testing.assert_allclose(model.vjp(theta, u), model.jacobian(theta).T @ u, atol=1e-10)
        np.testing.assert_array_equal(model.vjp(theta, np.zeros(model.n)), np.zeros(model.d))


def test_softmax_outputs_on_simplex(rng):
    m = SoftmaxMlp(rng.uniform(-1, 1, (4, 5)), rng.uniform(-1, 1, (3, 4)))
    for _ in range(20):
        z = m.forward(rng.standard_normal(5))
        assert np.all(z > 0)
        assert abs(z.sum() - 1.0) <= 1e-12


def test_product_jacobian_is_block_diagonal(rng):
    model = random_rps_model(rng)
    jac = model.jacobian(rng.standard_normal(model.d))
    assert jac.shape == (6, 10)
    assert np.all(jac[:3, 5:] == 0.0)
    assert np.all(jac[3:, :5] == 0.0)


def test_value_net_prediction_formula(rng):
    feats = rng.standard_normal((5, 2))
    net = MlpValueNet(feats, hidden=3)
    theta = net.init_theta(rng)
    w1, b1, w2, b2 = net.unpack(theta)
    expected = np.array([w2 @ np.tanh(w1 @ x + b1) + b2 for x in feats])
    np.testing.assert_allclose(net.forward(theta), expected, atol=1e-14)
    assert net.d == 3 * 2 + 3 + 3 + 1


def test_singular_bounds(rng):
    assert singular_bounds(LinearModel(np.eye(2)), [0.0, 0.0]) == pytest.approx((1.0, 1.0))
    assert singular_bounds(LinearModel(np.diag([2.0, 3.0])), [0.0, 0.0]) == pytest.approx((2.0, 3.0))
    m = SoftmaxMlp(rng.uniform(-1, 1, (4, 5)), rng.uniform(-1, 1, (3, 4)))
    jac = m.jacobian(np.zeros(5))
    w = np.clip(np.linalg.eigvalsh(jac.T @ jac), 0, None)
    assert singular_bounds(m, np.zeros(5)) == pytest.approx((np.sqrt(w[0]), np.sqrt(w[-1])), abs=1e-12)


def test_pennies_image_box():
    lo, hi = hidden_pennies_model().image_box()
    np.testing.assert_allclose(lo, [1 / (1 + np.e), 1 / (1 + np.e)])
    np.testing.assert_array_equal(hi, [1.0, 1.0])
    assert ProductModel([LinearModel(np.eye(1)), ScalarSigmoidCelu(1.0, 1.0)]).image_box() is None


def test_pl_inequality_for_square_linear_model(rng):
    phi = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    v = rng.standard_normal(3)
    sigma_min = np.linalg.svd(phi, compute_uv=False)[-1]
    best = np.linalg.solve(phi, v)
    floor = 0.5 * float((phi @ best - v) @ (phi @ best - v))
    for _ in range(1000):
        r = phi @ (3 * rng.standard_normal(3)) - v
        grad = phi.T @ r
        assert grad @ grad >= 2 * sigma_min ** 2 * (0.5 * r @ r - floor) - 1e-12
