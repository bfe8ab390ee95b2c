import math

import numpy as np
import pytest

from core.errors import InvalidArgument
from operations.counterexample import (
    CounterexampleSpec,
    biased_inner_rule,
    build_p,
    identity_model,
    measure_alpha,
    run_divergence,
    run_exact_contrast,
)
from operations.driver import OuterConfig, run_outer


@pytest.mark.parametrize("eta", [0.01, 0.1, 1.0, 5.0])
def test_build_p_closed_form(eta):
    np.testing.assert_allclose(build_p(eta), [[0.0, eta], [-eta, 0.0]], atol=1e-12 * max(1.0, eta))


def test_build_p_rejects_nonpositive_eta():
    with pytest.raises(InvalidArgument):
        build_p(0.0)


def test_non_orthogonal_q_is_rejected():
    with pytest.raises(InvalidArgument):
        CounterexampleSpec(0.1, q_matrix=np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_measured_alpha_is_constant(rng):
    spec = CounterexampleSpec(0.1)
    for _ in range(100):
        assert measure_alpha(spec, rng.standard_normal(2)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    with pytest.raises(InvalidArgument):
        measure_alpha(spec, np.zeros(2))


@pytest.mark.parametrize("eta", [0.01, 0.1, 1.0])
def test_divergence_growth_per_step(eta):
    record = run_divergence(CounterexampleSpec(eta), np.array([1.0, 0.0]), 50)
    np.testing.assert_allclose(record.column("loss_ratio"), math.sqrt(1 + eta * eta), atol=1e-9)


def test_long_divergence_run():
    record = run_divergence(CounterexampleSpec(0.1), np.array([1.0, 0.0]), 2000)
    growth = math.sqrt(record.rows[-1].dist_sq / record.dist_sq_init)
    assert growth / 1.01 ** 1000 == pytest.approx(1.0, abs=0.01)


def test_exact_step_contracts_where_biased_step_diverges():
    spec = CounterexampleSpec(0.1)
    z0 = np.array([0.3, -0.7])
    exact = run_exact_contrast(spec, z0, 200)
    biased = run_divergence(spec, z0, 200)
    assert np.all(exact.column("loss_ratio") < 1.0)
    assert exact.rows[-1].dist_sq < 1e-6 * exact.dist_sq_init
    assert biased.rows[-1].dist_sq > exact.dist_sq_init


def test_divergence_needs_nonzero_start():
    with pytest.raises(InvalidArgument):
        run_divergence(CounterexampleSpec(0.1), np.zeros(2), 5)


def test_outer_loop_reproduces_divergence():
    spec = CounterexampleSpec(0.1)
    z0 = np.array([1.0, 2.0])
    cfg = OuterConfig(spec.eta, spec.alpha, 50, biased_inner_rule(spec), record_timing=False)
    outer = run_outer(identity_model(), spec.operator(), z0, cfg)
    direct = run_divergence(spec, z0, 50)
    np.testing.assert_allclose(np.array(outer.predictions), np.array(direct.predictions), rtol=1e-12)
    # every inner solve lands exactly on the alpha-descent boundary
    np.testing.assert_allclose(outer.column("loss_ratio"), 0.5, rtol=1e-9)
    assert outer.cap_hits() == 0
