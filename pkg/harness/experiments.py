"""
Experiment catalog for hidden-vi
File: harness/experiments.py
One body per experiment; each turns a validated config, a run index and
a derived seed into labelled trajectory records and auxiliary tables
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from core.errors import ConfigError, HiddenVIError, NotPositiveDefinite, RunFailure
from core.linalg import sym_eig_extremes
from core.models import MlpValueNet, hidden_pennies_model, random_pennies_model, random_rps_model
from core.records import IterationRow, TrajectoryRecord
from core.vi_problems import RPS_PAYOFF, AffineOperator, PenniesOperator, RpsOperator
from operations.counterexample import (
    CounterexampleSpec,
    biased_inner_rule,
    identity_model,
    run_divergence,
    run_exact_contrast,
)
from operations.driver import OuterConfig, inverse_square_errors, quasi_fejer_run, run_outer, stochastic_audit
from operations.nonlinear_pbe import METHODS, NonlinearPbeConfig, TransitionSampler, ValueEvaluator, garnet
from operations.rl_pbe import (
    EstimatorState,
    bertsekas_deterministic_update,
    bertsekas_update,
    exact_linear_fixed_point,
    make_features,
    make_slow_mixing_chain,
    simulate_trajectory,
    surr_gd_linear,
    update_estimators,
)

from .config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class RunOutput:
    records: Dict[str, TrajectoryRecord] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentInfo:
    name: str
    figure: str
    description: str
    fn: Callable[[ExperimentConfig, int, int], RunOutput]


def _labelled(label: str, fn, *args, **kwargs):
    """Run fn, tagging any run failure with the label of the run it belongs to"""
    try:
        return fn(*args, **kwargs)
    except RunFailure as exc:
        exc.label = exc.label or label
        raise
    except ConfigError:
        raise
    except HiddenVIError as exc:
        raise RunFailure(f"{type(exc).__name__}: {exc}", label=label) from exc


def run_counterexample(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    problem = cfg.problem
    etas = [float(e) for e in problem.get("etas", [cfg.eta])]
    if "z0" in problem:
        z0 = np.asarray(problem["z0"], dtype=np.float64)
    else:
        z0 = np.random.default_rng(seed).standard_normal(2)
    out = RunOutput()
    rows = []
    for eta in etas:
        spec = CounterexampleSpec(eta)
        tag = f"eta{eta:g}"
        out.records[f"divergence-{tag}"] = _labelled(f"divergence-{tag}", run_divergence, spec, z0, cfg.t_outer)
        out.records[f"exact-{tag}"] = run_exact_contrast(spec, z0, cfg.t_outer)
        outer = OuterConfig(eta, spec.alpha, cfg.t_outer, biased_inner_rule(spec), seed=seed,
                            record_timing=cfg.record_timing, keep_predictions=False)
        biased = _labelled(f"biased-outer-{tag}", run_outer, identity_model(), spec.operator(), z0, outer)
        out.records[f"biased-outer-{tag}"] = biased
        growth = out.records[f"divergence-{tag}"].column("loss_ratio")
        rows.append({"eta": eta, "expected_growth": float(np.sqrt(1.0 + eta * eta)),
                     "min_growth": float(growth.min()), "max_growth": float(growth.max())})
    out.tables["growth"] = pd.DataFrame(rows)
    return out


def _outer_for(cfg: ExperimentConfig, method, seed: int) -> OuterConfig:
    return OuterConfig(
        eta=cfg.method_eta(method),
        alpha=cfg.method_alpha(method),
        t_outer=cfg.t_outer,
        strategy=method.strategy,
        lstar_mode=cfg.lstar_mode,
        seed=seed,
        record_timing=cfg.record_timing,
        keep_predictions=False,
        stop_dist_sq=cfg.stop_dist_sq,
    )


def run_pennies(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    """
    Hidden matching pennies. With init "fixed" the reference players and
    start are used; with "random" every a_j^i is Uniform[-1, 1] and the
    start is Gaussian with scale init_scale. All methods share one draw.
    """
    problem = cfg.problem
    rng = np.random.default_rng(seed)
    if problem.get("init", "fixed") == "random":
        model = random_pennies_model(rng)
        theta0 = rng.normal(0.0, float(problem.get("init_scale", 4.0)), model.d)
    else:
        model = hidden_pennies_model(problem.get("a1", (0.5, 0.7)), problem.get("a2", (1.0, 1.0)))
        theta0 = np.asarray(problem.get("theta0", (1.25, 2.25)), dtype=np.float64)
    op = PenniesOperator()
    out = RunOutput()
    for method in cfg.methods:
        out.records[method.name] = _labelled(method.name, run_outer, model, op, theta0, _outer_for(cfg, method, seed))
    return out


def run_rps(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    problem = cfg.problem
    rng = np.random.default_rng(seed)
    model = random_rps_model(rng, int(problem.get("inner", 4)), int(problem.get("dim", 5)))
    theta0 = rng.standard_normal(model.d) * float(problem.get("init_scale", 1.0))
    op = RpsOperator(RPS_PAYOFF.copy(), float(problem.get("lambda_reg", 0.2)))
    out = RunOutput()
    for method in cfg.methods:
        out.records[method.name] = _labelled(method.name, run_outer, model, op, theta0, _outer_for(cfg, method, seed))
    return out


def run_pbe_linear(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    """
    Linear projected-Bellman-error runs on one fixed slow-mixing chain.

    The stochastic preconditioned update drives the shared iterate; from
    each anchor, surrogate GD with m inner steps is scored by its squared
    distance to the exact update. The deterministic preconditioned update
    runs alongside as a reference.

    The first warmup transitions of the trajectory only build the
    estimators, so the first update already sees a full-rank D_hat.
    """
    problem = cfg.problem
    mc = make_slow_mixing_chain(int(problem.get("n_states", 100)), float(problem.get("hold", 0.95)),
                                int(problem.get("chain_seed", 0)), float(problem.get("gamma", 0.9)))
    phi = make_features(mc.n, int(problem.get("feature_dim", 10)), int(problem.get("feature_seed", 0)))
    theta_star = exact_linear_fixed_point(mc, phi)
    inner_steps: List[int] = [int(m) for m in problem.get("inner_steps", [1, 5, 20])]
    lr_scale = float(problem.get("lr_scale", 1.0))
    fallback_ridge = float(problem.get("ridge", 1e-8))
    warmup = int(problem.get("warmup", 0))
    start = int(np.random.default_rng([seed, 2]).integers(mc.n))
    traj = simulate_trajectory(mc, start, warmup + cfg.t_outer, seed)

    est = EstimatorState(phi, mc.gamma)
    # the first warmup transitions only feed the estimators
    for k in range(warmup):
        update_estimators(est, phi, int(traj.states[k]), int(traj.states[k + 1]), float(traj.rewards[k]))
    theta = np.zeros(phi.shape[1])
    theta_det = np.zeros(phi.shape[1])
    bert = TrajectoryRecord(dist_sq_init=float(theta_star @ theta_star))
    det = TrajectoryRecord(dist_sq_init=bert.dist_sq_init)
    surr = {m: TrajectoryRecord(dist_sq_init=float("nan")) for m in inner_steps}
    warned = False

    for t in range(1, cfg.t_outer + 1):
        k = warmup + t - 1
        update_estimators(est, phi, int(traj.states[k]), int(traj.states[k + 1]), float(traj.rewards[k]))
        try:
            exact = bertsekas_update(theta, est, 0.0)
        except NotPositiveDefinite:
            if not warned:
                logger.warning("run %d: D_hat singular at t=%d, applying ridge %g", run_index, t, fallback_ridge)
                warned = True
            exact = bertsekas_update(theta, est, fallback_ridge)
        lr = lr_scale / max(sym_eig_extremes(est.d_hat)[1], 1e-300)
        before = float((theta - exact) @ (theta - exact))
        for m in inner_steps:
            cand = _labelled(f"surr-gd-m{m}", surr_gd_linear, theta, est, m, lr)
            gap = float((cand - exact) @ (cand - exact))
            surr[m].append(IterationRow(t, gap, before, gap, gap / before if before > 0 else 0.0, m, m))
        theta = exact
        dist = float((theta - theta_star) @ (theta - theta_star))
        bert.append(IterationRow(t, dist, before, 0.0, 0.0, 1, 1))
        prev = float((theta_det - theta_star) @ (theta_det - theta_star))
        theta_det = bertsekas_deterministic_update(mc, phi, theta_det)
        dist_det = float((theta_det - theta_star) @ (theta_det - theta_star))
        det.append(IterationRow(t, dist_det, prev, dist_det, dist_det / prev if prev > 0 else 0.0, 1, 1))

    bert.theta, det.theta = theta, theta_det
    out = RunOutput()
    out.records["bertsekas"] = bert
    out.records["bertsekas-deterministic"] = det
    for m in inner_steps:
        out.records[f"surr-gd-m{m}"] = surr[m]
    return out


def run_pbe_nonlinear(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    """Garnet MDP with a tanh value network; every method starts from the same init and sees the same stream"""
    problem = cfg.problem
    mdp = garnet(int(problem.get("n_states", 50)), int(problem.get("branching", 5)),
                 int(problem.get("n_actions", 2)), float(problem.get("gamma", 0.9)),
                 int(problem.get("feature_dim", 8)), int(problem.get("mdp_seed", 0)))
    model = MlpValueNet(mdp.features, int(problem.get("hidden", 32)))
    theta0 = model.init_theta(np.random.default_rng([seed, 3]))
    evaluator = ValueEvaluator.build(mdp, int(problem.get("rollouts", 100)), int(problem.get("eval_seed", 0)))
    offline = bool(problem.get("offline", False))
    dataset_size = int(problem.get("dataset_size", 2048))
    out = RunOutput()
    for method in cfg.methods:
        pbe_cfg = NonlinearPbeConfig(
            t_outer=cfg.t_outer,
            batch_size=int(problem.get("batch_size", 64)),
            inner_steps=method.inner_budget,
            step=method.step,
            buffer_size=int(problem.get("buffer_size", 4)),
            alpha=cfg.method_alpha(method),
            offline=offline,
            dataset_size=dataset_size,
            eval_every=int(problem.get("eval_every", 1)),
            gap_every=int(problem.get("gap_every", 0)),
            record_timing=cfg.record_timing,
        )
        record = _labelled(method.name, METHODS[method.algorithm], model, mdp, pbe_cfg, theta0,
                           seed=seed, evaluator=evaluator)
        out.records[method.name] = record
        if record.checkpoints:
            out.tables[f"{method.name}_checkpoints"] = record.checkpoint_frame()
    if problem.get("dump_dataset", False):
        # same stream the offline loop draws its dataset from
        sampler = TransitionSampler(mdp, np.random.default_rng(seed))
        out.tables["dataset"] = sampler.batch(dataset_size).to_frame()
    return out


def run_stochastic_audit(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    """
    Expected-descent audit on F(z) = mu (z - z*) in R^n. Rows carry
    dist_sq = 2 * mean half-distance, loss_anchor = analytic plateau,
    loss_final = mean half-distance and loss_ratio = its one-step ratio.
    """
    problem = cfg.problem
    n = int(problem.get("n", 2))
    mu = float(problem.get("mu", 1.0))
    op = AffineOperator(mu * np.eye(n), np.zeros(n))
    summary = _labelled("audit", stochastic_audit, op, cfg.eta, cfg.alpha, float(problem.get("c", 2.0)),
                        float(problem.get("sigma", 1.0)), int(problem.get("audit_seeds", 1000)), cfg.t_outer,
                        seed=seed, start_radius=float(problem.get("start_radius", 10.0)),
                        decay_window=int(problem.get("decay_window", 10)))
    mean = summary.mean_half_sq
    record = TrajectoryRecord(dist_sq_init=2.0 * float(mean[0]))
    for t in range(1, mean.size):
        record.append(IterationRow(t, 2.0 * float(mean[t]), summary.plateau_bound, float(mean[t]),
                                   float(mean[t] / mean[t - 1]) if mean[t - 1] > 0 else 0.0))
    out = RunOutput(records={"audit": record})
    b = summary.bounds
    out.tables["summary"] = pd.DataFrame([{
        "plateau_bound": summary.plateau_bound,
        "empirical_plateau": summary.empirical_plateau,
        "decay_factor": summary.decay_factor,
        "decay_se": summary.decay_se,
        "stoch_factor": b.stoch_factor,
        "noise_term": b.noise_term,
    }])
    return out


def _schedule(block: dict, t_outer: int) -> np.ndarray:
    kind = block.get("kind", "inverse_square")
    scale = float(block.get("scale", 0.5))
    if kind == "inverse_square":
        return inverse_square_errors(scale, t_outer)
    if kind == "constant":
        return np.full(t_outer, scale)
    return np.zeros(t_outer)


def run_quasi_fejer(cfg: ExperimentConfig, run_index: int, seed: int) -> RunOutput:
    schedules = cfg.problem.get("schedules") or [
        {"name": "inverse-square", "kind": "inverse_square", "scale": 0.5},
        {"name": "constant", "kind": "constant", "scale": 0.5},
        {"name": "exact", "kind": "zero"},
    ]
    op = PenniesOperator()
    out = RunOutput()
    for block in schedules:
        name = str(block.get("name", block.get("kind")))
        out.records[name] = quasi_fejer_run(op, cfg.eta, _schedule(block, cfg.t_outer), cfg.t_outer, seed=seed)
    return out


CATALOG: Dict[str, ExperimentInfo] = {info.name: info for info in [
    ExperimentInfo("counterexample", "divergence-counterexample",
                   "rotated steps meeting the alpha condition yet diverging for every eta", run_counterexample),
    ExperimentInfo("pennies", "pennies-convergence",
                   "hidden matching pennies, Gauss-Newton family against surrogate GD", run_pennies),
    ExperimentInfo("rps", "rps-convergence",
                   "hidden rock-paper-scissors with softmax-MLP players", run_rps),
    ExperimentInfo("pbe-linear", "linear-pbe-inner-steps",
                   "surrogate GD against the preconditioned update on a slow-mixing chain", run_pbe_linear),
    ExperimentInfo("pbe-nonlinear", "nonlinear-pbe-value-error",
                   "TD(0) against the surrogate methods on a Garnet MDP", run_pbe_nonlinear),
    ExperimentInfo("stochastic-audit", "stochastic-plateau",
                   "expected-descent recursion and noise plateau by Monte Carlo", run_stochastic_audit),
    ExperimentInfo("quasi-fejer", "quasi-fejer-errors",
                   "exact steps with summable against constant injected errors", run_quasi_fejer),
]}
