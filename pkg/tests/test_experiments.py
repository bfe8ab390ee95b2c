import numpy as np
import pytest

from core.records import IterationRow, TrajectoryRecord
from harness.experiments import RunOutput
from harness.verify import (
    inner_step_wins,
    pbe_gap_ordering,
    rps_shares,
    run_shipped,
    value_error_wins,
)

SEED = 20240517


def _record(values, start=1.0):
    rec = TrajectoryRecord(dist_sq_init=start)
    for i, v in enumerate(values, start=1):
        rec.append(IterationRow(i, v, 1.0, 0.5, 0.5))
    return rec


def test_inner_step_wins_counts_unreached_as_losses():
    outputs = [
        RunOutput(records={"gd-1": _record([1.0, 1e-9]), "gd-10": _record([1e-9])}),
        RunOutput(records={"gd-1": _record([1.0]), "gd-10": _record([1e-9])}),
        RunOutput(records={"gd-1": _record([1e-9]), "gd-10": _record([1.0, 1e-9])}),
        RunOutput(records={"gd-1": _record([1.0]), "gd-10": _record([1.0])}),
    ]
    assert inner_step_wins(outputs) == 0.5


def test_rps_shares():
    outputs = [
        RunOutput(records={"gn": _record([0.1, 1e-7]), "gda": _record([0.5, 0.7, 0.2])}),
        RunOutput(records={"gn": _record([0.1, 0.01]), "gda": _record([0.5, 0.4, 0.3])}),
    ]
    assert rps_shares(outputs) == (0.5, 0.5)


def test_pbe_gap_ordering_uses_mean_curves():
    def run(m1, m5, m20):
        return RunOutput(records={"surr-gd-m1": _record(m1), "surr-gd-m5": _record(m5),
                                  "surr-gd-m20": _record(m20)})

    # the second run breaks the order at iteration 1 only, which the burn-in skips
    outputs = [run([1.0, 1.0, 1.0], [0.5, 0.5, 0.4], [0.1, 0.05, 0.02]),
               run([1.0, 1.0, 1.0], [2.0, 0.5, 0.4], [0.1, 0.05, 0.02])]
    monotone, ratio = pbe_gap_ordering(outputs, burn_in=1)
    assert monotone
    assert ratio == pytest.approx(0.02)
    assert not pbe_gap_ordering(outputs, burn_in=0)[0]


def test_pbe_gap_ordering_median_ignores_one_stuck_run():
    def run(m1, m20):
        return RunOutput(records={"surr-gd-m1": _record(m1), "surr-gd-m5": _record(m1),
                                  "surr-gd-m20": _record(m20)})

    outputs = [run([1.0], [0.01]), run([1.0], [0.02]), run([1.0], [2.0])]
    assert pbe_gap_ordering(outputs, burn_in=0)[1] == pytest.approx(2.03 / 3)
    assert pbe_gap_ordering(outputs, burn_in=0, center=np.median) == (True, pytest.approx(0.02))


def test_value_error_wins():
    outputs = [RunOutput(records={"td0": _record([5.0, 4.0, 3.0, 2.0]), "m10": _record([9.0, 1.0, 3.5, 1.0])})]
    assert value_error_wins(outputs, "m10", burn_in=1) == pytest.approx(2 / 3)


@pytest.mark.slow
def test_random_pennies_more_inner_steps_converge_first():
    outputs = run_shipped("pennies-random", SEED, seeds=10)
    assert inner_step_wins(outputs) >= 0.8


@pytest.mark.slow
def test_rps_gauss_newton_converges_and_gda_oscillates():
    outputs = run_shipped("rps", SEED, seeds=10)
    gn, gda = rps_shares(outputs)
    assert gn >= 0.8
    assert gda >= 0.5
    for out in outputs:
        assert np.all(np.isfinite(out.records["gn"].dist_sq()))


@pytest.mark.slow
def test_pbe_linear_gaps_shrink_with_inner_steps():
    monotone, ratio = pbe_gap_ordering(run_shipped("pbe-linear", SEED, seeds=20), center=np.median)
    assert monotone
    assert ratio < 0.1


@pytest.mark.slow
def test_pbe_nonlinear_inner_loop_beats_td0():
    outputs = run_shipped("pbe-nonlinear", SEED, seeds=10, t_outer=150, methods=[
        {"name": "td0", "algorithm": "td0", "kind": "gd", "lr": 0.05},
        {"name": "inner-loop-m10", "algorithm": "inner-loop", "kind": "gd", "lr": 0.05, "stop": {"fixed": 10}},
    ])
    assert value_error_wins(outputs, "inner-loop-m10") >= 0.8
