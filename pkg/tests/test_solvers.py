import numpy as np
import pytest

from core.errors import InvalidArgument, NumericalBlowup
from core.models import LinearModel, random_rps_model
from core.surrogate import AlphaRule, build_surrogate
from core.vi_problems import RpsOperator
from operations.solvers import (
    DGN,
    GD,
    GN,
    LM,
    AdamState,
    AdamW,
    FixedSteps,
    InnerStrategy,
    ScriptedStep,
    adamw_step,
    dgn_step,
    gd_step,
    gn_step,
    lm_step,
    run_inner,
)


def _quadratic(target=1.0):
    """1-D surrogate 1/2 (theta - target)^2 anchored at 0"""
    model = LinearModel(np.eye(1))
    return build_surrogate(model, [0.0], [-target], 1.0)


def _phgd(model, theta, f, eta):
    jac = model.jacobian(theta)
    return theta - eta * np.linalg.pinv(jac.T @ jac, rcond=1e-12, hermitian=True) @ jac.T @ f


def test_gd_step_formula():
    s = _quadratic(2.0)
    np.testing.assert_allclose(gd_step(s, np.array([0.0]), 0.1), [0.2])
    with pytest.raises(InvalidArgument):
        gd_step(s, np.array([0.0]), 0.0)


def test_gn_equals_phgd_on_pennies(pennies, rng):
    model, op = pennies
    for _ in range(100):
        theta = rng.normal(0.0, 2.0, 2)
        f = op.eval(model.forward(theta))
        gn = gn_step(build_surrogate(model, theta, f, 0.01), theta)
        ref = _phgd(model, theta, f, 0.01)
        assert np.max(np.abs(gn - ref)) <= 1e-12 * max(1.0, np.linalg.norm(ref - theta))


def test_gn_equals_phgd_on_rps(rng):
    model, op = random_rps_model(rng), RpsOperator()
    for _ in range(100):
        theta = rng.standard_normal(model.d)
        f = op.eval(model.forward(theta))
        gn = gn_step(build_surrogate(model, theta, f, 0.05), theta)
        ref = _phgd(model, theta, f, 0.05)
        assert np.linalg.norm(gn - ref) <= 1e-8 * np.linalg.norm(ref - theta)


def test_gn_solves_linear_surrogate_in_one_step(rng):
    phi = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    model = LinearModel(phi)
    s = build_surrogate(model, np.zeros(3), rng.standard_normal(3), 0.5)
    theta = gn_step(s, np.zeros(3))
    assert s.value(theta) == pytest.approx(0.0, abs=1e-16)


def test_dgn_interpolates():
    model = LinearModel(np.eye(2))
    s = build_surrogate(model, np.zeros(2), np.array([1.0, -2.0]), 1.0)
    theta = np.zeros(2)
    np.testing.assert_array_equal(dgn_step(s, theta, 1.0), gn_step(s, theta))
    np.testing.assert_allclose(dgn_step(s, theta, 0.5), 0.5 * gn_step(s, theta))
    with pytest.raises(InvalidArgument):
        DGN(0.0)


def test_lm_limits(rng):
    phi = 0.01 * np.eye(3)
    model = LinearModel(phi)
    theta = rng.standard_normal(3)
    s = build_surrogate(model, theta, rng.standard_normal(3), 1.0)
    lm = lm_step(s, theta, 1e6)
    gd = gd_step(s, theta, 1e-6)
    assert np.linalg.norm(lm - gd) <= 1e-6 * np.linalg.norm(gd - theta)
    tiny = lm_step(s, theta, 1e-12)
    np.testing.assert_allclose(tiny, gn_step(s, theta), rtol=1e-6)
    with pytest.raises(InvalidArgument):
        LM(0.0)


def test_adamw_first_step_is_signed_lr():
    s = _quadratic(1.0)
    theta, state = adamw_step(s, np.array([0.0]), AdamState.zeros(1), AdamW(lr=0.01))
    # bias-corrected first step moves by lr * g / (|g| + eps)
    assert theta[0] == pytest.approx(0.01, rel=1e-6)
    assert state.step_count == 1


def test_adamw_annealing_and_weight_decay():
    s = _quadratic(1.0)
    hyper = AdamW(lr=0.1, weight_decay=0.5, decay=0.5)
    theta, state = np.array([2.0]), AdamState.zeros(1)
    theta, state = adamw_step(s, theta, state, hyper)
    # decoupled decay first: 2 * (1 - 0.1 * 0.5), then the unit step
    assert theta[0] == pytest.approx(2.0 * 0.95 - 0.1, rel=1e-6)

    before = theta[0]
    grad = before - 1.0
    m = 0.9 * state.m[0] + 0.1 * grad
    v = 0.999 * state.v[0] + 0.001 * grad * grad
    m_hat, v_hat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
    lr = 0.05
    expected = before * (1 - lr * 0.5) - lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    theta, state = adamw_step(s, theta, state, hyper)
    assert theta[0] == pytest.approx(expected, rel=1e-12)
    assert state.step_count == 2


def test_fixed_steps_run_exactly_m():
    s = _quadratic(1.0)
    res = run_inner(s, [0.0], InnerStrategy(GD(0.1), FixedSteps(5)))
    assert res.steps == 5 and res.grad_evals == 5 and not res.cap_hit
    assert res.theta[0] == pytest.approx(1 - 0.9 ** 5)


def test_alpha_rule_stops_at_first_satisfying_step():
    s = _quadratic(1.0)
    # the loss shrinks by 0.81 per step; 0.81^7 <= 0.25 < 0.81^6
    res = run_inner(s, [0.0], InnerStrategy(GD(0.1), AlphaRule(0.5, max_inner=100)))
    assert res.steps == 7 and not res.cap_hit
    assert res.final_loss <= 0.25 * s.value([0.0])



def test_alpha_rule_continues_at_exact_ratio():
    s = _quadratic(1.0)
    # lr 0.5 halves the residual, so step one lands on a ratio of exactly 0.25
    res = run_inner(s, [0.0], InnerStrategy(GD(0.5), AlphaRule(0.5, max_inner=10)))
    assert res.steps == 2
    assert res.final_loss == pytest.approx(0.0625 * s.value([0.0]))

def test_alpha_rule_cap_is_flagged():
    s = _quadratic(1.0)
    res = run_inner(s, [0.0], InnerStrategy(GD(0.1), AlphaRule(0.0, max_inner=4)))
    assert res.cap_hit and res.steps == 4


def test_gn_alpha_zero_meets_rule_in_one_step():
    s = _quadratic(3.0)
    res = run_inner(s, [0.0], InnerStrategy(GN(), AlphaRule(0.0, max_inner=10)))
    assert res.steps == 1 and not res.cap_hit



def test_scripted_steps_use_no_gradients():
    s = _quadratic(1.0)
    halve = ScriptedStep(lambda loss, theta: 0.5 * (theta + 1.0), "halve")
    res = run_inner(s, [0.0], InnerStrategy(halve, FixedSteps(3)))
    assert res.steps == 3 and res.grad_evals == 0
    assert res.theta[0] == pytest.approx(0.875)
    res = run_inner(s, [0.0], InnerStrategy(halve, AlphaRule(0.5, max_inner=10)))
    assert res.steps == 2 and res.grad_evals == 0

def test_divergent_gd_raises_blowup():
    s = _quadratic(1.0)
    with pytest.raises(NumericalBlowup):
        run_inner(s, [0.0], InnerStrategy(GD(1e300), FixedSteps(3)))
