import numpy as np
import pytest

from core.errors import InvalidArgument
from core.models import LinearModel, MlpValueNet
from operations.nonlinear_pbe import (
    METHODS,
    GapOracle,
    NonlinearPbeConfig,
    SyntheticMdp,
    TransitionSampler,
    ValueEvaluator,
    be_gap_hat,
    double_sampling_method,
    double_sampling_surrogate,
    garnet,
    inner_loop_method,
    mc_value_estimate,
    mc_value_oracle,
    td0_batch,
    td0_oracle_step,
    td_surrogate,
    thresholded_method,
)
from operations.solvers import GD, AdamW, gd_step


@pytest.fixture
def small_mdp():
    return garnet(12, 3, 2, 0.9, feature_dim=3, seed=5)


@pytest.fixture
def small_net(small_mdp):
    return MlpValueNet(small_mdp.features, hidden=6)


def test_garnet_structure(small_mdp):
    np.testing.assert_allclose(small_mdp.p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.count_nonzero(small_mdp.p, axis=1) <= 3 * 2)
    assert small_mdp.features.shape == (12, 3)
    assert np.all((small_mdp.r >= 0) & (small_mdp.r <= 1))
    again = garnet(12, 3, 2, 0.9, feature_dim=3, seed=5)
    np.testing.assert_array_equal(again.p, small_mdp.p)
    with pytest.raises(InvalidArgument):
        garnet(5, 6)


def test_sampler_walks_one_trajectory(small_mdp):
    sampler = TransitionSampler(small_mdp, np.random.default_rng(0))
    first = sampler.batch(50)
    second = sampler.batch(50)
    np.testing.assert_array_equal(first.next_states[:-1], first.states[1:])
    assert second.states[0] == first.next_states[-1]
    np.testing.assert_array_equal(first.rewards, small_mdp.r[first.states])
    assert np.all(small_mdp.p[first.states, first.next_states] > 0)
    assert list(first.to_frame().columns) == ["step", "state", "reward", "next_state"]
    with pytest.raises(InvalidArgument):
        sampler.batch(0)


def test_td0_is_one_gd_step_on_the_td_loss(small_mdp, small_net):
    rng = np.random.default_rng(3)
    theta = small_net.init_theta(rng)
    sampler = TransitionSampler(small_mdp, rng)
    for _ in range(10):
        batch = sampler.batch(16)
        s = td_surrogate(small_net, theta, batch, small_mdp.gamma)
        oracle = td0_oracle_step(small_net, theta, batch, small_mdp.gamma, 0.1)
        np.testing.assert_allclose(gd_step(s, theta, 0.1), oracle, atol=1e-12)
        theta = oracle


def test_double_sampling_on_one_batch_matches_td_gradient(small_mdp, small_net):
    rng = np.random.default_rng(4)
    theta = small_net.init_theta(rng)
    batch = TransitionSampler(small_mdp, rng).batch(32)
    ds = double_sampling_surrogate(small_net, theta, batch, small_mdp.gamma, batch)
    td = td_surrogate(small_net, theta, batch, small_mdp.gamma)
    assert ds.value(theta) == 0.0
    nearby = theta + 0.05 * rng.standard_normal(small_net.d)
    np.testing.assert_allclose(ds.gradient(nearby), td.gradient(nearby), atol=1e-12)


def test_bellman_gap_oracles(small_mdp):
    model = LinearModel(small_mdp.features)
    rng = np.random.default_rng(6)
    data = TransitionSampler(small_mdp, rng).batch(400)
    theta = rng.standard_normal(3)
    exact = be_gap_hat(model, data, theta, small_mdp.gamma, GapOracle("exact"))
    approx = be_gap_hat(model, data, theta, small_mdp.gamma)
    assert exact > 0.0
    assert 0.0 <= approx <= exact + 1e-12
    with pytest.raises(InvalidArgument):
        be_gap_hat(MlpValueNet(small_mdp.features, hidden=4), data, np.zeros(21), small_mdp.gamma,
                   GapOracle("exact"))
    with pytest.raises(InvalidArgument):
        GapOracle("sgd")


def test_mc_oracle_without_discount(small_mdp):
    mdp = SyntheticMdp(small_mdp.p, small_mdp.r, 0.0, small_mdp.features)
    means, errs = mc_value_estimate(mdp, range(12), rollouts=10)
    np.testing.assert_allclose(means, mdp.r, atol=1e-15)
    np.testing.assert_allclose(errs, 0.0, atol=1e-12)


def test_mc_oracle_on_absorbing_loop():
    mdp = SyntheticMdp(np.ones((1, 1)), np.ones(1), 0.5, np.ones((1, 1)))
    assert mc_value_oracle(mdp, [0], rollouts=5)[0] == pytest.approx(2.0, abs=1e-5)


def test_mc_oracle_agrees_with_value_function(small_mdp):
    exact = small_mdp.chain().value_function()
    means, errs = mc_value_estimate(small_mdp, [0, 5, 11], rollouts=2000, seed=9)
    assert np.all(np.abs(means - exact[[0, 5, 11]]) <= 5 * errs + 1e-4)


def test_value_evaluator_scores_exact_table(small_mdp):
    evaluator = ValueEvaluator.build(small_mdp, rollouts=20, seed=1)
    table = LinearModel(np.eye(small_mdp.n_states))
    assert evaluator.value_error(table, evaluator.values) == pytest.approx(0.0, abs=1e-24)
    assert evaluator.value_error(table, evaluator.values + 1.0) == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        NonlinearPbeConfig(batch_size=0)
    with pytest.raises(InvalidArgument):
        NonlinearPbeConfig(alpha=1.0)
    with pytest.raises(InvalidArgument):
        NonlinearPbeConfig(gap_every=-1)


def test_single_inner_step_reproduces_td0(small_mdp, small_net):
    theta0 = small_net.init_theta(np.random.default_rng(2))
    cfg = NonlinearPbeConfig(t_outer=20, batch_size=16, inner_steps=1, step=GD(0.1), record_timing=False)
    td0 = td0_batch(small_net, small_mdp, cfg, theta0, seed=8)
    surrogate = inner_loop_method(small_net, small_mdp, cfg, theta0, seed=8)
    np.testing.assert_allclose(surrogate.theta, td0.theta, atol=1e-10)


@pytest.mark.parametrize("name", sorted(METHODS))
def test_methods_run_and_are_seeded(small_mdp, small_net, name):
    evaluator = ValueEvaluator.build(small_mdp, rollouts=20, seed=1)
    theta0 = small_net.init_theta(np.random.default_rng(2))
    cfg = NonlinearPbeConfig(t_outer=12, batch_size=16, inner_steps=3, step=GD(0.05), gap_every=6,
                             record_timing=False)
    first = METHODS[name](small_net, small_mdp, cfg, theta0, seed=4, evaluator=evaluator)
    second = METHODS[name](small_net, small_mdp, cfg, theta0, seed=4, evaluator=evaluator)
    assert len(first) == 12 and first.f_evals == 12
    assert np.all(np.isfinite(first.dist_sq()))
    np.testing.assert_array_equal(first.theta, second.theta)
    assert [c["iter"] for c in first.checkpoints] == [6, 12]
    assert all(c["bellman_gap"] >= 0.0 for c in first.checkpoints)


def test_thresholded_method_with_zero_alpha_uses_every_step(small_mdp, small_net):
    theta0 = small_net.init_theta(np.random.default_rng(2))
    cfg = NonlinearPbeConfig(t_outer=5, batch_size=16, inner_steps=4, step=GD(0.05), alpha=0.0,
                             record_timing=False)
    record = thresholded_method(small_net, small_mdp, cfg, theta0, seed=1)
    np.testing.assert_array_equal(record.column("inner_steps"), 4)
    assert record.cap_hits() == 5


def test_offline_mode_reuses_one_dataset(small_mdp, small_net):
    theta0 = small_net.init_theta(np.random.default_rng(2))
    cfg = NonlinearPbeConfig(t_outer=4, inner_steps=2, step=AdamW(lr=1e-3), offline=True, dataset_size=64,
                             record_timing=False)
    record = inner_loop_method(small_net, small_mdp, cfg, theta0, seed=3)
    assert len(record) == 4
    with pytest.raises(InvalidArgument):
        double_sampling_method(small_net, small_mdp, cfg, theta0, seed=3)


def test_td0_requires_gd(small_mdp, small_net):
    cfg = NonlinearPbeConfig(step=AdamW())
    with pytest.raises(InvalidArgument):
        td0_batch(small_net, small_mdp, cfg, np.zeros(small_net.d))
