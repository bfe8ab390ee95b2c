import numpy as np
import pytest

from core.errors import InvalidArgument, UnsupportedModel
from core.models import LinearModel, random_rps_model
from core.surrogate import (
    AlphaRule,
    LStarMode,
    alpha_satisfied,
    build_stochastic_surrogate,
    build_surrogate,
    lstar,
    surrogate_grad,
)
from core.vi_problems import RpsOperator


def test_anchor_value_is_half_squared_step(pennies):
    model, op = pennies
    theta = np.array([1.25, 2.25])
    f = op.eval(model.forward(theta))
    s = build_surrogate(model, theta, f, 0.01)
    assert s.value(theta) == pytest.approx(0.5 * 0.01 ** 2 * float(f @ f), rel=1e-12)


def test_linear_gradient_formula(rng):
    phi = rng.standard_normal((4, 2))
    model = LinearModel(phi)
    theta_t = rng.standard_normal(2)
    f = rng.standard_normal(4)
    s = build_surrogate(model, theta_t, f, 0.3)
    theta = rng.standard_normal(2)
    expected = phi.T @ (phi @ theta - (phi @ theta_t - 0.3 * f))
    np.testing.assert_allclose(surrogate_grad(s, theta), expected, atol=1e-12)
    np.testing.assert_allclose(s.gradient(theta_t), 0.3 * phi.T @ f, atol=1e-12)


def test_build_rejects_nonpositive_eta(pennies):
    model, _ = pennies
    with pytest.raises(InvalidArgument):
        build_surrogate(model, [0.0, 0.0], [0.0, 0.0], 0.0)


def test_lstar_modes(pennies, rng):
    model, op = pennies
    theta = np.array([1.25, 2.25])
    s = build_surrogate(model, theta, op.eval(model.forward(theta)), 0.01)
    assert lstar(s, LStarMode.ZERO) == 0.0
    # target stays inside the image box, so the optimum is attained
    assert lstar(s, "exact") == 0.0

    phi = np.array([[1.0], [1.0]])
    lin = LinearModel(phi)
    s = build_surrogate(lin, [0.0], [1.0, -1.0], 1.0)
    # target (-1, 1) is orthogonal to the column space
    assert lstar(s, LStarMode.EXACT) == pytest.approx(1.0)

    rps = random_rps_model(rng)
    theta = rng.standard_normal(rps.d)
    s = build_surrogate(rps, theta, RpsOperator().eval(rps.forward(theta)), 0.1)
    with pytest.raises(UnsupportedModel):
        lstar(s, LStarMode.EXACT)


def test_alpha_rule_predicate():
    rule = AlphaRule(0.5)
    assert alpha_satisfied(rule, 0.2499, 1.0, 0.0)
    # a ratio of exactly alpha^2 still asks for another step
    assert not alpha_satisfied(rule, 0.25, 1.0, 0.0)
    assert not alpha_satisfied(rule, 0.26, 1.0, 0.0)
    assert alpha_satisfied(AlphaRule(0.5), 0.35, 1.2, 0.1)
    assert not alpha_satisfied(AlphaRule(0.0), 1e-3, 1.0, 0.0)
    assert alpha_satisfied(AlphaRule(0.0), 1e-14, 1.0, 0.0)
    assert alpha_satisfied(rule, 0.0, 0.0, 0.0)
    with pytest.raises(InvalidArgument):
        AlphaRule(1.0)


def test_stochastic_surrogate_full_sets_reproduce_deterministic(rng):
    model = random_rps_model(rng)
    theta_t = rng.standard_normal(model.d)
    f = RpsOperator().eval(model.forward(theta_t))
    s = build_surrogate(model, theta_t, f, 0.1)
    full = np.arange(model.n)
    st = build_stochastic_surrogate(model, theta_t, f, 0.1, full, full)
    for _ in range(5):
        theta = theta_t + 0.2 * rng.standard_normal(model.d)
        assert st.value(theta) == pytest.approx(s.value(theta), abs=1e-12)
        np.testing.assert_allclose(st.gradient(theta), s.gradient(theta), atol=1e-12)


def test_stochastic_surrogate_subsets_and_duplicates(rng):
    phi = np.eye(3)
    model = LinearModel(phi)
    theta_t = np.zeros(3)
    f = np.array([1.0, 2.0, 3.0])
    st = build_stochastic_surrogate(model, theta_t, f, 1.0, [0, 0], [1])
    theta = np.array([0.5, 1.0, 0.0])
    # linear: scale 3/2 counted twice on index 0; quadratic: scale 3 on index 1
    expected = 0.5 * 1.5 * 2 * 1.0 + 1.5 * 2 * 1.0 * 0.5 + 0.5 * 3 * 1.0
    assert st.value(theta) == pytest.approx(expected)
    np.testing.assert_allclose(st.gradient(theta), [3.0, 3.0, 0.0])
    with pytest.raises(InvalidArgument):
        build_stochastic_surrogate(model, theta_t, f, 1.0, [], [1])
    with pytest.raises(InvalidArgument):
        build_stochastic_surrogate(model, theta_t, f, 1.0, [3], [1])
