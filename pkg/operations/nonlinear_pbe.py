"""
Nonlinear projected-Bellman-error methods for hidden-vi
File: operations/nonlinear_pbe.py
Garnet MDP, transition batches, batch TD(0) and the surrogate methods
with an inner loop, double sampling and a loss-ratio threshold, plus
the Bellman-gap and Monte-Carlo value metrics used to compare them
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import InvalidArgument, NumericalBlowup
from core.linalg import as_matrix, as_vector, pinv_solve
from core.models import LinearModel, PredictionModel
from core.records import IterationRow, TrajectoryRecord
from core.surrogate import AlphaRule, LStarMode

from .rl_pbe import MarkovChain
from .solvers import GD, AdamState, AdamW, FixedSteps, InnerStrategy, StepKind, run_inner, take_step

logger = logging.getLogger(__name__)

HORIZON_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SyntheticMdp:
    """
    Finite MDP evaluated under a fixed policy.

    The policy is folded into the transition and reward tables, so p is
    the state-to-state chain and r the expected reward per state.
    """
    p: np.ndarray
    r: np.ndarray
    gamma: float
    features: np.ndarray
    start: np.ndarray = None
    branching: int = 0
    n_actions: int = 1

    def __post_init__(self):
        p = as_matrix(self.p, "P")
        feats = as_matrix(self.features, "features")
        if feats.shape[0] != p.shape[0]:
            raise InvalidArgument("one feature row per state is required")
        start = np.full(p.shape[0], 1.0 / p.shape[0]) if self.start is None else as_vector(self.start, "start")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "start", start)

    @property
    def n_states(self) -> int:
        return self.p.shape[0]

    def chain(self) -> MarkovChain:
        return MarkovChain(self.p, self.r, self.gamma)


def garnet(n_states: int = 50, branching: int = 5, n_actions: int = 2, gamma: float = 0.9,
           feature_dim: int = 8, seed: int = 0) -> SyntheticMdp:
    """
    Garnet generator.

    Each (state, action) reaches `branching` distinct successors with
    Dirichlet(1) probabilities. A Dirichlet(1) random policy is folded in;
    rewards per (state, action) are Uniform[0, 1]; state features are
    standard Gaussian.
    """
    if not 1 <= branching <= n_states:
        raise InvalidArgument(f"branching must lie in [1, {n_states}], got {branching}")
    rng = np.random.default_rng(seed)
    p_sa = np.zeros((n_actions, n_states, n_states))
    for a in range(n_actions):
        for s in range(n_states):
            succ = rng.choice(n_states, size=branching, replace=False)
            p_sa[a, s, succ] = rng.dirichlet(np.ones(branching))
    policy = rng.dirichlet(np.ones(n_actions), size=n_states)
    rewards_sa = rng.uniform(0.0, 1.0, (n_states, n_actions))
    p = np.einsum("sa,ast->st", policy, p_sa)
    p /= p.sum(axis=1, keepdims=True)
    r = np.sum(policy * rewards_sa, axis=1)
    features = rng.standard_normal((n_states, feature_dim))
    return SyntheticMdp(p, r, gamma, features, branching=branching, n_actions=n_actions)


@dataclass
class TransitionBatch:
    states: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __post_init__(self):
        if self.states.size == 0:
            raise InvalidArgument("transition batch is empty")

    def __len__(self) -> int:
        return self.states.size

    def to_frame(self) -> pd.DataFrame:
        """Columns step,state,reward,next_state"""
        return pd.DataFrame({
            "step": np.arange(len(self)),
            "state": self.states,
            "reward": self.rewards,
            "next_state": self.next_states,
        })


class TransitionSampler:
    """Walks one on-policy trajectory, handing it out in consecutive batches"""

    def __init__(self, mdp: SyntheticMdp, rng: np.random.Generator, state: Optional[int] = None):
        self.mdp = mdp
        self.rng = rng
        self._cdf = np.cumsum(mdp.p, axis=1)
        self.state = int(rng.choice(mdp.n_states, p=mdp.start)) if state is None else int(state)

    def batch(self, size: int) -> TransitionBatch:
        if size < 1:
            raise InvalidArgument("batch size must be at least 1")
        states = np.empty(size, dtype=np.int64)
        nxt = np.empty(size, dtype=np.int64)
        last = self.mdp.n_states - 1
        for i, u in enumerate(self.rng.random(size)):
            states[i] = self.state
            self.state = min(int(np.searchsorted(self._cdf[self.state], u, side="right")), last)
            nxt[i] = self.state
        return TransitionBatch(states, self.mdp.r[states].copy(), nxt)


@dataclass(frozen=True, eq=False)
class TdBatchSurrogate:
    """
    Mean squared TD error on a batch with targets frozen at theta_t:
    value(theta) = 1/(2N) sum_i (V_theta(s_i) - y_i)^2, y_i = r_i + gamma V_{theta_t}(s'_i)
    """
    model: PredictionModel
    anchor_theta: np.ndarray
    batch: TransitionBatch
    targets: np.ndarray

    def _td(self, theta) -> np.ndarray:
        return self.model.forward(theta)[self.batch.states] - self.targets

    def value(self, theta) -> float:
        delta = self._td(theta)
        return 0.5 * float(delta @ delta) / len(self.batch)

    def gradient(self, theta) -> np.ndarray:
        u = np.bincount(self.batch.states, weights=self._td(theta), minlength=self.model.n) / len(self.batch)
        return self.model.vjp(theta, u)


def td_targets(model: PredictionModel, theta, batch: TransitionBatch, gamma: float) -> np.ndarray:
    return batch.rewards + gamma * model.forward(theta)[batch.next_states]


def td_surrogate(model: PredictionModel, theta_t, batch: TransitionBatch, gamma: float) -> TdBatchSurrogate:
    theta_t = model._check_theta(theta_t)
    return TdBatchSurrogate(model, theta_t.copy(), batch, td_targets(model, theta_t, batch, gamma))


@dataclass(frozen=True, eq=False)
class DoubleSamplingSurrogate:
    """
    Linearization term on the fresh batch, regularization term on a buffer batch:
    value(theta) = 1/N [ sum_i F_i (V_theta(s_i) - V_t(s_i)) + 1/2 sum_j (V_theta(s_j) - V_t(s_j))^2 ]
    with F_i = V_t(s_i) - y_i.
    """
    model: PredictionModel
    anchor_preds: np.ndarray
    batch: TransitionBatch
    f_hat: np.ndarray
    reg_batch: TransitionBatch

    def value(self, theta) -> float:
        diff = self.model.forward(theta) - self.anchor_preds
        lin = float(self.f_hat @ diff[self.batch.states])
        reg = diff[self.reg_batch.states]
        return (lin + 0.5 * float(reg @ reg)) / len(self.batch)

    def gradient(self, theta) -> np.ndarray:
        diff = self.model.forward(theta) - self.anchor_preds
        n = self.model.n
        u = np.bincount(self.batch.states, weights=self.f_hat, minlength=n)
        u += np.bincount(self.reg_batch.states, weights=diff[self.reg_batch.states], minlength=n)
        return self.model.vjp(theta, u / len(self.batch))


def double_sampling_surrogate(model: PredictionModel, theta_t, batch: TransitionBatch, gamma: float,
                              reg_batch: TransitionBatch) -> DoubleSamplingSurrogate:
    theta_t = model._check_theta(theta_t)
    preds = model.forward(theta_t)
    f_hat = preds[batch.states] - td_targets(model, theta_t, batch, gamma)
    return DoubleSamplingSurrogate(model, preds, batch, f_hat, reg_batch)


def td0_oracle_step(model: PredictionModel, theta, batch: TransitionBatch, gamma: float, lr: float) -> np.ndarray:
    """Semi-gradient batch TD(0): theta + lr/N sum_i delta_i grad V_theta(s_i), from explicit Jacobian rows"""
    values = model.forward(theta)
    jac = model.jacobian(theta)
    delta = batch.rewards + gamma * values[batch.next_states] - values[batch.states]
    return theta + lr * (delta @ jac[batch.states]) / len(batch)


@dataclass(frozen=True)
class NonlinearPbeConfig:
    """Shared settings of the nonlinear PBE methods"""
    t_outer: int = 200
    batch_size: int = 64
    inner_steps: int = 10
    step: StepKind = field(default_factory=lambda: GD(0.05))
    buffer_size: int = 4
    alpha: float = 0.5
    offline: bool = False
    dataset_size: int = 2048
    eval_every: int = 1
    gap_every: int = 0
    record_timing: bool = True

    def __post_init__(self):
        if self.t_outer < 1 or self.batch_size < 1 or self.inner_steps < 1 or self.buffer_size < 1:
            raise InvalidArgument("t_outer, batch_size, inner_steps and buffer_size must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidArgument(f"alpha must lie in [0,1), got {self.alpha}")
        if self.eval_every < 1 or self.gap_every < 0:
            raise InvalidArgument("eval_every must be positive and gap_every nonnegative")


@dataclass(frozen=True)
class GapOracle:
    """How the infimum inside the Bellman gap is approximated"""
    method: str = "adamw"
    steps: int = 500
    lr: float = 1e-4
    decay: float = 0.995

    def __post_init__(self):
        if self.method not in ("adamw", "exact"):
            raise InvalidArgument(f"gap oracle must be 'adamw' or 'exact', got {self.method!r}")


def be_gap_hat(model: PredictionModel, dataset: TransitionBatch, theta, gamma: float,
               oracle: GapOracle = GapOracle()) -> float:
    """
    Empirical Bellman gap BE(theta, theta) - inf_theta' BE(theta', theta).

    BE uses the mean squared TD error with the TD target r + gamma V(s').
    The infimum runs AdamW from theta with exponential annealing and keeps
    the best value seen (the start included), or solves the least-squares
    problem directly for linear models. Returns max(0, raw gap).
    """
    s = td_surrogate(model, theta, dataset, gamma)
    start = s.value(s.anchor_theta)
    if oracle.method == "exact":
        if not isinstance(model, LinearModel):
            raise InvalidArgument("the exact gap oracle needs a linear model")
        rows = model.phi[dataset.states]
        best_theta = pinv_solve(rows, s.targets)
        best = min(start, s.value(best_theta))
    else:
        hyper = AdamW(lr=oracle.lr, decay=oracle.decay)
        theta_k, state = s.anchor_theta.copy(), AdamState.zeros(model.d)
        best = start
        for _ in range(oracle.steps):
            theta_k, state = take_step(s, theta_k, hyper, state)
            best = min(best, s.value(theta_k))
    return max(0.0, start - best)


def mc_value_estimate(mdp: SyntheticMdp, states: Sequence[int], rollouts: int = 100,
                      horizon: Optional[int] = None, seed: int = 0):
    """Per-state mean and standard error of discounted Monte-Carlo returns"""
    if horizon is None:
        horizon = 1 if mdp.gamma == 0.0 else int(math.ceil(math.log(HORIZON_TOL) / math.log(mdp.gamma)))
    if rollouts < 1 or horizon < 1:
        raise InvalidArgument("rollouts and horizon must be positive")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(mdp.p, axis=1)
    last = mdp.n_states - 1
    means, errs = [], []
    for s0 in states:
        cur = np.full(rollouts, int(s0), dtype=np.int64)
        ret = np.zeros(rollouts)
        disc = 1.0
        for _ in range(horizon):
            ret += disc * mdp.r[cur]
            disc *= mdp.gamma
            u = rng.random(rollouts)
            cur = np.minimum((cdf[cur] <= u[:, None]).sum(axis=1), last)
        means.append(ret.mean())
        # spread of deviations from the first return: identical returns give exactly zero
        errs.append((ret - ret[0]).std(ddof=1) / math.sqrt(rollouts) if rollouts > 1 else 0.0)
    return np.array(means), np.array(errs)


def mc_value_oracle(mdp: SyntheticMdp, states: Sequence[int], rollouts: int = 100,
                    horizon: Optional[int] = None, seed: int = 0) -> np.ndarray:
    return mc_value_estimate(mdp, states, rollouts, horizon, seed)[0]


@dataclass
class ValueEvaluator:
    """Test states with their Monte-Carlo values; scores a parameter vector by mean squared error"""
    states: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, mdp: SyntheticMdp, rollouts: int = 100, seed: int = 0,
              states: Optional[Sequence[int]] = None) -> "ValueEvaluator":
        states = np.arange(mdp.n_states) if states is None else np.asarray(states, dtype=np.int64)
        return cls(states, mc_value_oracle(mdp, states, rollouts, seed=seed))

    def value_error(self, model: PredictionModel, theta) -> float:
        diff = model.forward(theta)[self.states] - self.values
        return float(diff @ diff) / diff.size


InnerRunner = Callable[[PredictionModel, np.ndarray, TransitionBatch, int], tuple]


def _outer_loop(name: str, model: PredictionModel, mdp: SyntheticMdp, cfg: NonlinearPbeConfig, theta0,
                seed: int, inner: InnerRunner, evaluator: Optional[ValueEvaluator]) -> TrajectoryRecord:
    rng = np.random.default_rng(seed)
    sampler = TransitionSampler(mdp, rng)
    dataset = sampler.batch(cfg.dataset_size) if cfg.offline else None
    theta = model._check_theta(theta0).copy()
    record = TrajectoryRecord()
    nan = float("nan")
    record.dist_sq_init = evaluator.value_error(model, theta) if evaluator else nan
    logger.info("%s: %s mode, T=%d, N=%d", name, "offline" if cfg.offline else "online",
                cfg.t_outer, cfg.dataset_size if cfg.offline else cfg.batch_size)

    for t in range(1, cfg.t_outer + 1):
        started = time.perf_counter()
        batch = dataset if cfg.offline else sampler.batch(cfg.batch_size)
        theta, loss_anchor, loss_final, steps, cap_hit = inner(model, theta, batch, t)
        record.f_evals += 1
        if not np.all(np.isfinite(theta)):
            record.theta = theta
            raise NumericalBlowup(f"{name} diverged at outer iteration {t}", record)
        wall_ms = (time.perf_counter() - started) * 1000.0 if cfg.record_timing else 0.0
        err = evaluator.value_error(model, theta) if evaluator and t % cfg.eval_every == 0 else nan
        record.append(IterationRow(
            iter=t, dist_sq=err, loss_anchor=loss_anchor, loss_final=loss_final,
            loss_ratio=loss_final / loss_anchor if loss_anchor > 0 else 0.0,
            inner_steps=steps, grad_evals=steps, alpha_flag=cap_hit, wall_ms=wall_ms,
        ))
        if cfg.gap_every and t % cfg.gap_every == 0:
            gap_data = dataset if dataset is not None else batch
            record.checkpoints.append({"iter": t, "bellman_gap": be_gap_hat(model, gap_data, theta, mdp.gamma),
                                       "value_error": err})
    record.theta = theta
    logger.info("%s done: final value error %.5g", name, record.rows[-1].dist_sq)
    return record


def td0_batch(model: PredictionModel, mdp: SyntheticMdp, cfg: NonlinearPbeConfig, theta0, seed: int = 0,
              evaluator: Optional[ValueEvaluator] = None) -> TrajectoryRecord:
    """Batch semi-gradient TD(0): one GD step per batch with the configured learning rate"""
    if not isinstance(cfg.step, GD):
        raise InvalidArgument("TD(0) runs plain gradient steps")

    def inner(model, theta, batch, t):
        s = td_surrogate(model, theta, batch, mdp.gamma)
        anchor = s.value(theta)
        nxt = td0_oracle_step(model, theta, batch, mdp.gamma, cfg.step.lr)
        return nxt, anchor, s.value(nxt), 1, False

    return _outer_loop("td0", model, mdp, cfg, theta0, seed, inner, evaluator)


def inner_loop_method(model: PredictionModel, mdp: SyntheticMdp, cfg: NonlinearPbeConfig, theta0, seed: int = 0,
                      evaluator: Optional[ValueEvaluator] = None) -> TrajectoryRecord:
    """Surrogate method with an inner loop: M optimizer steps on the frozen-target TD loss"""
    strategy = InnerStrategy(cfg.step, FixedSteps(cfg.inner_steps))

    def inner(model, theta, batch, t):
        s = td_surrogate(model, theta, batch, mdp.gamma)
        anchor = s.value(theta)
        res = run_inner(s, theta, strategy, 0.0, anchor)
        return res.theta, anchor, res.final_loss, res.steps, False

    return _outer_loop("inner-loop", model, mdp, cfg, theta0, seed, inner, evaluator)


def double_sampling_method(model: PredictionModel, mdp: SyntheticMdp, cfg: NonlinearPbeConfig, theta0,
                           seed: int = 0, evaluator: Optional[ValueEvaluator] = None,
                           buffer: Optional[List[TransitionBatch]] = None) -> TrajectoryRecord:
    """
    Surrogate method with double sampling.

    The linearization term uses the fresh batch; inner step m takes its
    regularization term from buffer batch m mod K. The buffer is filled
    once, before the first outer iteration, from an independent stream.
    """
    if cfg.offline:
        raise InvalidArgument("double sampling is an online method")
    if buffer is None:
        buffer_rng = np.random.default_rng([seed, 1])
        filler = TransitionSampler(mdp, buffer_rng)
        buffer = [filler.batch(cfg.batch_size) for _ in range(cfg.buffer_size)]
    buffer = list(buffer)
    if not buffer:
        raise InvalidArgument("double sampling needs a nonempty buffer")

    def inner(model, theta_t, batch, t):
        theta = theta_t.copy()
        adam = AdamState.zeros(model.d)
        anchor = double_sampling_surrogate(model, theta_t, batch, mdp.gamma, buffer[0])
        loss_anchor = anchor.value(theta_t)
        s = anchor
        for m in range(cfg.inner_steps):
            s = DoubleSamplingSurrogate(model, anchor.anchor_preds, batch, anchor.f_hat, buffer[m % len(buffer)])
            theta, adam = take_step(s, theta, cfg.step, adam)
        return theta, loss_anchor, s.value(theta), cfg.inner_steps, False

    return _outer_loop("double-sampling", model, mdp, cfg, theta0, seed, inner, evaluator)


def thresholded_method(model: PredictionModel, mdp: SyntheticMdp, cfg: NonlinearPbeConfig, theta0,
                       seed: int = 0, evaluator: Optional[ValueEvaluator] = None) -> TrajectoryRecord:
    """Thresholded surrogate method: inner steps until the loss ratio drops below alpha^2, at most M"""
    rule = AlphaRule(cfg.alpha, LStarMode.ZERO, cfg.inner_steps)
    strategy = InnerStrategy(cfg.step, rule)

    def inner(model, theta, batch, t):
        s = td_surrogate(model, theta, batch, mdp.gamma)
        anchor = s.value(theta)
        res = run_inner(s, theta, strategy, 0.0, anchor)
        return res.theta, anchor, res.final_loss, res.steps, res.cap_hit

    return _outer_loop("thresholded", model, mdp, cfg, theta0, seed, inner, evaluator)


METHODS = {
    "td0": td0_batch,
    "inner-loop": inner_loop_method,
    "double-sampling": double_sampling_method,
    "thresholded": thresholded_method,
}
