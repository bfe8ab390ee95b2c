"""
Inner-loop solvers for hidden-vi
File: operations/solvers.py
Surr-GD, Gauss-Newton (one step from the anchor is PHGD), damped
Gauss-Newton, Levenberg-Marquardt and AdamW over a surrogate loss,
plus the inner runner honoring a fixed budget or the alpha rule
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np

from core.errors import InvalidArgument, NumericalBlowup
from core.linalg import RANK_TOL, pinv_solve, solve_spd
from core.surrogate import AlphaRule, SurrogateLoss, alpha_satisfied

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GD:
    lr: float

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidArgument(f"GD lr must be positive, got {self.lr}")


@dataclass(frozen=True)
class GN:
    tol: float = RANK_TOL


@dataclass(frozen=True)
class DGN:
    eta_gn: float
    tol: float = RANK_TOL

    def __post_init__(self):
        if not 0.0 < self.eta_gn <= 1.0:
            raise InvalidArgument(f"eta_gn must lie in (0,1], got {self.eta_gn}")


@dataclass(frozen=True)
class LM:
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidArgument(f"LM lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class AdamW:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay: float = 1.0  # learning-rate annealing factor per step

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidArgument(f"AdamW lr must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise InvalidArgument(f"{name} must lie in [0,1), got {b}")
        if self.eps <= 0 or self.weight_decay < 0 or not 0.0 < self.decay <= 1.0:
            raise InvalidArgument("AdamW needs eps > 0, weight_decay >= 0 and decay in (0,1]")


@dataclass(frozen=True)
class ScriptedStep:
    """A fixed update theta -> fn(loss, theta), used to drive prescribed biased steps"""
    fn: Callable[[SurrogateLoss, np.ndarray], np.ndarray]
    name: str = "scripted"


StepKind = Union[GD, GN, DGN, LM, AdamW, ScriptedStep]


@dataclass(frozen=True)
class FixedSteps:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise InvalidArgument(f"FixedSteps needs m >= 1, got {self.m}")


@dataclass(frozen=True)
class InnerStrategy:
    kind: StepKind
    stop: Union[FixedSteps, AlphaRule] = field(default_factory=lambda: FixedSteps(1))

    @property
    def label(self) -> str:
        kind = getattr(self.kind, "name", type(self.kind).__name__)
        if isinstance(self.stop, FixedSteps):
            return f"{kind}x{self.stop.m}"
        return f"{kind}-alpha{self.stop.alpha:g}"


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, d: int) -> "AdamState":
        return cls(np.zeros(d), np.zeros(d), 0)


@dataclass
class InnerResult:
    theta: np.ndarray
    steps: int
    final_loss: float
    cap_hit: bool
    grad_evals: int


def _finite(v: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NumericalBlowup(f"non-finite {what}")
    return v


def gd_step(s, theta, lr: float) -> np.ndarray:
    """theta - lr * grad l(theta)"""
    if lr <= 0:
        raise InvalidArgument(f"lr must be positive, got {lr}")
    return _finite(theta - lr * _finite(s.gradient(theta), "surrogate gradient"), "iterate")


def gn_direction(s: SurrogateLoss, theta, tol: float = RANK_TOL) -> np.ndarray:
    jac, r = s.weighted_system(theta)
    return pinv_solve(jac, r, tol)


def gn_step(s: SurrogateLoss, theta, tol: float = RANK_TOL) -> np.ndarray:
    """theta - (J^T W J)^+ J^T W r(theta)"""
    return _finite(theta - gn_direction(s, theta, tol), "iterate")


def dgn_step(s: SurrogateLoss, theta, eta_gn: float, tol: float = RANK_TOL) -> np.ndarray:
    if not 0.0 < eta_gn <= 1.0:
        raise InvalidArgument(f"eta_gn must lie in (0,1], got {eta_gn}")
    if eta_gn == 1.0:
        return gn_step(s, theta, tol)
    return _finite(theta - eta_gn * gn_direction(s, theta, tol), "iterate")


def lm_step(s: SurrogateLoss, theta, lam: float) -> np.ndarray:
    """theta - (J^T W J + lam I)^{-1} J^T W r(theta)"""
    if lam <= 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    jac, r = s.weighted_system(theta)
    system = jac.T @ jac + lam * np.eye(jac.shape[1])
    return _finite(theta - solve_spd(system, jac.T @ r), "iterate")


def adamw_step(s, theta, state: AdamState, hyper: AdamW) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected AdamW step with decoupled weight decay"""
    if state.m.shape != theta.shape or state.v.shape != theta.shape:
        raise InvalidArgument("AdamState dimensions do not match theta")
    grad = _finite(s.gradient(theta), "surrogate gradient")
    t = state.step_count + 1
    lr = hyper.lr * hyper.decay ** state.step_count
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad
    v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad * grad
    m_hat = m / (1.0 - hyper.beta1 ** t)
    v_hat = v / (1.0 - hyper.beta2 ** t)
    decayed = theta * (1.0 - lr * hyper.weight_decay)
    new_theta = decayed - lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return _finite(new_theta, "iterate"), AdamState(m, v, t)


def take_step(s, theta, kind: StepKind, adam: AdamState):
    """One step of the given kind; returns the new iterate and Adam state"""
    if isinstance(kind, GD):
        return gd_step(s, theta, kind.lr), adam
    if isinstance(kind, GN):
        return gn_step(s, theta, kind.tol), adam
    if isinstance(kind, DGN):
        return dgn_step(s, theta, kind.eta_gn, kind.tol), adam
    if isinstance(kind, LM):
        return lm_step(s, theta, kind.lam), adam
    if isinstance(kind, AdamW):
        return adamw_step(s, theta, adam, kind)
    if isinstance(kind, ScriptedStep):
        return _finite(np.asarray(kind.fn(s, theta), dtype=np.float64), "iterate"), adam
    raise InvalidArgument(f"unknown step kind {kind!r}")


def run_inner(s, theta_start, strategy: InnerStrategy, lstar: float = 0.0,
              loss_anchor: float = None) -> InnerResult:
    """
    Run the inner optimizer from theta_start.

    FixedSteps takes exactly m steps. AlphaRule checks the descent
    condition before every step and stops at the first iterate that meets
    it, or after max_inner steps with cap_hit set.
    """
    theta = np.array(theta_start, dtype=np.float64)
    if loss_anchor is None:
        loss_anchor = s.value(theta)
    adam = AdamState.zeros(theta.shape[0])
    stop = strategy.stop
    steps = 0
    loss = loss_anchor

    if isinstance(stop, FixedSteps):
        for _ in range(stop.m):
            theta, adam = take_step(s, theta, strategy.kind, adam)
            steps += 1
        loss = s.value(theta)
        return InnerResult(theta, steps, _check_loss(loss), False, _grad_evals(strategy.kind, steps))

    while not alpha_satisfied(stop, loss, loss_anchor, lstar):
        if steps >= stop.max_inner:
            logger.warning("alpha rule not met after %d inner steps (loss %.3e, anchor %.3e)",
                           steps, loss, loss_anchor)
            return InnerResult(theta, steps, loss, True, _grad_evals(strategy.kind, steps))
        theta, adam = take_step(s, theta, strategy.kind, adam)
        steps += 1
        loss = _check_loss(s.value(theta))
    return InnerResult(theta, steps, loss, False, _grad_evals(strategy.kind, steps))


def _grad_evals(kind: StepKind, steps: int) -> int:
    # scripted maps never touch the surrogate gradient
    return 0 if isinstance(kind, ScriptedStep) else steps


def _check_loss(loss: float) -> float:
    if not np.isfinite(loss):
        raise NumericalBlowup("non-finite surrogate loss")
    return float(loss)


