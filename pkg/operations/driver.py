"""
Outer loop for hidden-vi
File: operations/driver.py
Surrogate outer iterations with metric recording, the exact projected
step, bias and rate audits, quasi-Fejer runs and the stochastic audit
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from core.errors import DimensionMismatch, HiddenVIError, InvalidArgument, InvalidRegime, NumericalBlowup, RunFailure
from core.linalg import as_vector, pinv_solve
from core.models import LinearModel, PredictionModel
from core.records import BiasAudit, IterationRow, TrajectoryRecord
from core.surrogate import AlphaRule, LStarMode, build_surrogate, lstar
from core.vi_problems import DomainKind, DomainSpec, VIOperator, project

from .solvers import InnerStrategy, run_inner

logger = logging.getLogger(__name__)

BIAS_SLACK = 1e-9


@dataclass(frozen=True)
class OuterConfig:
    eta: float
    alpha: float
    t_outer: int
    strategy: InnerStrategy
    lstar_mode: LStarMode = LStarMode.ZERO
    seed: int = 0
    record_timing: bool = True
    keep_predictions: bool = True
    stop_dist_sq: Optional[float] = None

    def __post_init__(self):
        if self.eta <= 0:
            raise InvalidArgument(f"eta must be positive, got {self.eta}")
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidArgument(f"alpha must lie in [0,1), got {self.alpha}")
        if self.t_outer < 1:
            raise InvalidArgument(f"t_outer must be at least 1, got {self.t_outer}")
        if self.stop_dist_sq is not None and self.stop_dist_sq <= 0:
            raise InvalidArgument(f"stop_dist_sq must be positive, got {self.stop_dist_sq}")
        object.__setattr__(self, "lstar_mode", LStarMode.parse(self.lstar_mode))
        stop = self.strategy.stop
        if isinstance(stop, AlphaRule) and stop.alpha != self.alpha:
            raise InvalidArgument(f"alpha rule uses {stop.alpha}, outer config uses {self.alpha}")


def exact_step(op: VIOperator, z, eta: float, domain: Optional[DomainSpec] = None) -> np.ndarray:
    """Projected gradient step Pi(z - eta F(z))"""
    z = as_vector(z, "z")
    return project(op.domain if domain is None else domain, z - eta * op.eval(z))


def image_projection(model: PredictionModel, v: np.ndarray, fallback: DomainSpec) -> np.ndarray:
    """Euclidean projection of v onto the closure of the model's image, when it is computable"""
    if isinstance(model, LinearModel):
        return model.phi @ pinv_solve(model.phi, v)
    box = model.image_box()
    if box is not None:
        return np.clip(v, box[0], box[1])
    return project(fallback, v)


def bias_check(z_t, z_next, z_t_star, f_t, f_star, alpha: float, eta: float) -> bool:
    """||z_next - z_t*|| <= alpha eta ||F(z_t) - F(z*)|| with a small absolute slack"""
    lhs = float(np.linalg.norm(np.asarray(z_next) - np.asarray(z_t_star)))
    rhs = alpha * eta * float(np.linalg.norm(np.asarray(f_t) - np.asarray(f_star)))
    return lhs <= rhs + BIAS_SLACK


def _dist_sq(z: np.ndarray, z_star: Optional[np.ndarray]) -> float:
    if z_star is None:
        return float("nan")
    d = z - z_star
    return float(d @ d)


def run_outer(model: PredictionModel, op: VIOperator, theta_init, cfg: OuterConfig,
              weight=None, z_star=None) -> TrajectoryRecord:
    """
    Surrogate outer loop.

    Each iteration evaluates F at z_t = g(theta_t), builds the surrogate
    anchored at theta_t, and hands it to the inner strategy. With a weight
    vector w the surrogate is weighted by w and F is rescaled by 1/w so
    the target becomes z_t - eta W^{-1} F(z_t).

    When the exact surrogate optimum is in use and no weight is given, each
    iteration also audits the bias bound against the projection of
    z_t - eta F(z_t) onto the model's image.

    With stop_dist_sq set, the run ends early at the first iterate closer
    than that to z*, so records may hold fewer than t_outer rows.
    """
    theta = model._check_theta(theta_init).copy()
    if model.n != op.n:
        raise DimensionMismatch(f"model predicts {model.n} values, operator expects {op.n}")
    if weight is not None:
        weight = as_vector(weight, "weight")
        if np.any(weight <= 0):
            raise InvalidArgument("outer-loop weights must be positive")
    z_star = op.solution if z_star is None else as_vector(z_star, "z_star")
    f_star = op.eval(z_star) if z_star is not None else None
    audit = cfg.lstar_mode is LStarMode.EXACT and weight is None and f_star is not None

    record = TrajectoryRecord()
    z = model.forward(theta)
    record.dist_sq_init = _dist_sq(z, z_star)
    if cfg.keep_predictions:
        record.predictions.append(z.copy())
    logger.info("outer run: %s, eta=%g, T=%d, start dist_sq=%.6g",
                cfg.strategy.label, cfg.eta, cfg.t_outer, record.dist_sq_init)

    for t in range(1, cfg.t_outer + 1):
        started = time.perf_counter()
        f_t = op.eval(z)
        record.f_evals += 1
        f_val = f_t if weight is None else f_t / weight
        s = build_surrogate(model, theta, f_val, cfg.eta, weight)
        loss_anchor = s.value(theta)
        try:
            l_star = lstar(s, cfg.lstar_mode)
            result = run_inner(s, theta, cfg.strategy, l_star, loss_anchor)
        except NumericalBlowup as exc:
            record.theta = theta
            raise NumericalBlowup(f"outer iteration {t}: {exc}", record) from exc
        except HiddenVIError as exc:
            record.theta = theta
            raise RunFailure(f"outer iteration {t}: {type(exc).__name__}: {exc}", record) from exc
        theta = result.theta
        z_next = model.forward(theta)
        if not np.all(np.isfinite(z_next)):
            record.theta = theta
            raise NumericalBlowup(f"outer iteration {t}: non-finite predictions", record)
        wall_ms = (time.perf_counter() - started) * 1000.0 if cfg.record_timing else 0.0

        ratio = result.final_loss / loss_anchor if loss_anchor > 0 else 0.0
        row = IterationRow(
            iter=t,
            dist_sq=_dist_sq(z_next, z_star),
            loss_anchor=loss_anchor,
            loss_final=result.final_loss,
            loss_ratio=ratio,
            inner_steps=result.steps,
            grad_evals=result.grad_evals,
            alpha_flag=result.cap_hit,
            wall_ms=wall_ms,
        )
        record.append(row)

        if audit:
            z_t_star = image_projection(model, z - cfg.eta * f_t, op.domain)
            gap_anchor = loss_anchor - l_star
            measured = math.sqrt(max(result.final_loss - l_star, 0.0) / gap_anchor) if gap_anchor > 0 else 0.0
            lhs = float(np.linalg.norm(z_next - z_t_star))
            rhs = measured * cfg.eta * float(np.linalg.norm(f_t - f_star))
            record.bias_audit.append(BiasAudit(t, measured, lhs, rhs, lhs <= rhs + BIAS_SLACK))

        logger.debug("iter %d: dist_sq=%.6g ratio=%.4g inner=%d", t, row.dist_sq, ratio, result.steps)
        z = z_next
        if cfg.keep_predictions:
            record.predictions.append(z.copy())
        if cfg.stop_dist_sq is not None and row.dist_sq < cfg.stop_dist_sq:
            logger.info("outer run reached dist_sq < %g at iteration %d", cfg.stop_dist_sq, t)
            break

    record.theta = theta
    logger.info("outer run done: final dist_sq=%.6g, %d cap hits", record.rows[-1].dist_sq, record.cap_hits())
    return record


@dataclass(frozen=True)
class RateBounds:
    eta: float
    mu: float
    lip: float
    alpha: float
    c: float = 0.0
    sigma: float = 0.0

    @property
    def kappa_sq(self) -> float:
        """Squared contraction factor of the exact projected step"""
        return 1.0 - 2.0 * self.eta * self.mu + (self.eta * self.lip) ** 2

    @property
    def descent_factor(self) -> float:
        e, m, l, a = self.eta, self.mu, self.lip, self.alpha
        return 1.0 - 2.0 * e * m + 2.0 * a * e * l + (1.0 + a * a) * (e * l) ** 2

    @property
    def stoch_factor(self) -> float:
        return 1.0 - self.eta * self.mu + self.alpha ** 2

    @property
    def noise_term(self) -> float:
        return self.eta ** 2 * (1.0 + self.c) * self.sigma ** 2

    @property
    def exact_threshold(self) -> float:
        """Largest eta for which the exact step contracts: 2 mu / L^2"""
        return 2.0 * self.mu / self.lip ** 2

    @property
    def descent_threshold(self) -> float:
        """2 (mu - alpha L) / ((1 + alpha^2) L^2)"""
        return 2.0 * (self.mu - self.alpha * self.lip) / ((1.0 + self.alpha ** 2) * self.lip ** 2)

    def condition1(self) -> bool:
        return self.alpha < self.mu / self.lip

    def condition2(self, c_const: float, p: float) -> bool:
        return self.alpha <= c_const * self.eta ** p

    def plateau_bound(self) -> float:
        """Fixed point of the expected recursion, eta^2 (1+c) sigma^2 / (eta mu - alpha^2)"""
        denom = self.eta * self.mu - self.alpha ** 2
        if denom <= 0:
            raise InvalidRegime(f"alpha^2 = {self.alpha ** 2:g} leaves no contraction at eta*mu = {self.eta * self.mu:g}")
        return self.noise_term / denom


def rate_bounds(eta: float, mu: float, lip: float, alpha: float, c: float = 0.0, sigma: float = 0.0) -> RateBounds:
    if mu <= 0 or lip <= 0:
        raise InvalidArgument("rate bounds need mu > 0 and lip > 0")
    return RateBounds(eta, mu, lip, alpha, c, sigma)


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.standard_normal(n)
    return u / np.linalg.norm(u)


def inverse_square_errors(scale: float, t_outer: int) -> np.ndarray:
    """eps_t = scale / t^2 for t = 1..T"""
    t = np.arange(1, t_outer + 1, dtype=np.float64)
    return scale / (t * t)


def quasi_fejer_run(op: VIOperator, eta: float, error_schedule: Union[Sequence[float], Callable[[int], float]],
                    t_outer: int, seed: int = 0, z0=None) -> TrajectoryRecord:
    """
    Perturbed exact steps z_{t+1} = Pi(z_t - eta F(z_t)) + eps_t u_t with seeded unit vectors u_t.

    Rows carry the squared distance before and after each step in
    loss_anchor and loss_final, and their ratio in loss_ratio.
    """
    if op.solution is None:
        raise InvalidArgument("quasi-Fejer runs need a known solution")
    rng = np.random.default_rng(seed)
    z = op.solution + _unit(rng, op.n) if z0 is None else as_vector(z0, "z0")
    record = TrajectoryRecord(dist_sq_init=_dist_sq(z, op.solution))
    before = record.dist_sq_init
    for t in range(1, t_outer + 1):
        eps = float(error_schedule(t)) if callable(error_schedule) else float(error_schedule[t - 1])
        z = exact_step(op, z, eta) + eps * _unit(rng, op.n)
        after = _dist_sq(z, op.solution)
        record.append(IterationRow(t, after, before, after, after / before if before > 0 else 0.0))
        before = after
    logger.info("quasi-Fejer run: %d steps, final dist_sq=%.3e", t_outer, before)
    return record


@dataclass
class StochasticAuditSummary:
    mean_half_sq: np.ndarray
    stderr: np.ndarray
    plateau_bound: float
    empirical_plateau: float
    decay_factor: float
    decay_se: float
    bounds: RateBounds = field(repr=False)


def stochastic_audit(op: VIOperator, eta: float, alpha: float, c: float, sigma_noise: float,
                     seeds: int, t_outer: int, seed: int = 0, start_radius: float = 10.0,
                     decay_window: int = 10) -> StochasticAuditSummary:
    """
    Monte-Carlo check of the expected-descent recursion.

    Each run iterates z <- z - eta F_xi(z) + alpha eta ||F_xi(z)|| u with
    F_xi(z) = F(z) + sigma N(0, I)/sqrt(n) and u a random unit vector, all
    runs starting at distance start_radius from z*.
    """
    if op.domain.kind is not DomainKind.ALL_SPACE:
        raise InvalidArgument("the stochastic audit needs an unconstrained operator")
    if op.solution is None or op.mu is None or op.lip is None:
        raise InvalidArgument("the stochastic audit needs known solution, mu and lip")
    if seeds < 2 or t_outer < decay_window + 1:
        raise InvalidArgument("stochastic audit needs at least 2 seeds and more steps than the decay window")
    bounds = rate_bounds(eta, op.mu, op.lip, alpha, c, sigma_noise)
    plateau = bounds.plateau_bound()

    n = op.n
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(seeds)]
    start = np.ones(n) * start_radius / math.sqrt(n)
    z = np.tile(op.solution + start, (seeds, 1))
    half_sq = np.empty((t_outer + 1, seeds))
    half_sq[0] = 0.5 * np.sum((z - op.solution) ** 2, axis=1)
    for t in range(1, t_outer + 1):
        for k, rng in enumerate(streams):
            f_xi = op.eval(z[k]) + sigma_noise * rng.standard_normal(n) / math.sqrt(n)
            step = z[k] - eta * f_xi
            if alpha > 0:
                step = step + alpha * eta * float(np.linalg.norm(f_xi)) * _unit(rng, n)
            z[k] = step
        if not np.all(np.isfinite(z)):
            raise NumericalBlowup(f"stochastic audit diverged at step {t}")
        half_sq[t] = 0.5 * np.sum((z - op.solution) ** 2, axis=1)

    mean = half_sq.mean(axis=1)
    stderr = half_sq.std(axis=1, ddof=1) / math.sqrt(seeds)
    tail = mean[(t_outer + 1) // 2:]
    ratios = (half_sq[1:decay_window + 1] / half_sq[:decay_window]).ravel()
    summary = StochasticAuditSummary(
        mean_half_sq=mean,
        stderr=stderr,
        plateau_bound=plateau,
        empirical_plateau=float(tail.mean()),
        decay_factor=float(ratios.mean()),
        decay_se=float(ratios.std(ddof=1) / math.sqrt(ratios.size)),
        bounds=bounds,
    )
    logger.info("stochastic audit: plateau %.4g vs bound %.4g, decay %.4f +- %.4f",
                summary.empirical_plateau, plateau, summary.decay_factor, summary.decay_se)
    return summary
