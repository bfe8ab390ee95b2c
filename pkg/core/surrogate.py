"""
Surrogate losses for hidden-vi
File: core/surrogate.py
Anchored least-squares surrogate, its stochastic three-term variant,
surrogate optimum estimation and the alpha-descent stopping predicate
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, UnsupportedModel, ZeroMatrix
from .linalg import as_vector, pinv_solve
from .models import LinearModel, PredictionModel

ALPHA_SLACK = 1e-12


class LStarMode(Enum):
    EXACT = "exact"
    ZERO = "zero"

    @classmethod
    def parse(cls, value) -> "LStarMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown lstar mode {value!r}, expected 'exact' or 'zero'") from None


@dataclass(frozen=True, eq=False)
class SurrogateLoss:
    """
    l(theta) = 1/2 || g(theta) - target ||_W^2

    The anchor and target are captured when the loss is built, so a
    SurrogateLoss is a snapshot that later iterates never change.
    """
    model: PredictionModel
    anchor_theta: np.ndarray
    target: np.ndarray
    eta: float
    weight: Optional[np.ndarray] = None

    def residual(self, theta) -> np.ndarray:
        """g(theta) - target"""
        return self.model.forward(theta) - self.target

    def _w(self, v: np.ndarray) -> np.ndarray:
        return v if self.weight is None else self.weight * v

    def value(self, theta) -> float:
        r = self.residual(theta)
        return 0.5 * float(r @ self._w(r))

    def gradient(self, theta) -> np.ndarray:
        return self.model.vjp(theta, self._w(self.residual(theta)))

    def sqrt_weight(self) -> Optional[np.ndarray]:
        return None if self.weight is None else np.sqrt(self.weight)

    def weighted_system(self, theta):
        """(sqrt(W) Dg(theta), sqrt(W) r(theta)), the Gauss-Newton least-squares system"""
        jac = self.model.jacobian(theta)
        r = self.residual(theta)
        sw = self.sqrt_weight()
        if sw is None:
            return jac, r
        return sw[:, None] * jac, sw * r


def build_surrogate(model: PredictionModel, theta_t, f_val, eta: float,
                    weight=None) -> SurrogateLoss:
    """Anchor at theta_t with target g(theta_t) - eta * f_val"""
    if eta <= 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    theta_t = model._check_theta(theta_t)
    f_val = as_vector(f_val, "f_val")
    if f_val.shape[0] != model.n:
        raise DimensionMismatch(f"F value has length {f_val.shape[0]}, model predicts {model.n}")
    if weight is not None:
        weight = as_vector(weight, "weight")
        if weight.shape[0] != model.n:
            raise DimensionMismatch(f"weight has length {weight.shape[0]}, model predicts {model.n}")
        if np.any(weight < 0):
            raise InvalidArgument("weights must be nonnegative")
    target = model.forward(theta_t) - eta * f_val
    return SurrogateLoss(model, theta_t.copy(), target, float(eta), weight)


def surrogate_grad(s: SurrogateLoss, theta) -> np.ndarray:
    return s.gradient(theta)


def lstar(s: SurrogateLoss, mode) -> float:
    """
    Optimal surrogate value.

    EXACT solves the weighted least-squares problem for linear models and
    clamps the target onto the image box for models that expose one.
    ZERO returns 0, the usual stand-in for nonconvex models.
    """
    mode = LStarMode.parse(mode)
    if mode is LStarMode.ZERO:
        return 0.0
    sw = s.sqrt_weight()
    if isinstance(s.model, LinearModel):
        phi = s.model.phi if sw is None else sw[:, None] * s.model.phi
        rhs = s.target if sw is None else sw * s.target
        try:
            theta = pinv_solve(phi, rhs)
        except ZeroMatrix:
            return 0.5 * float(rhs @ rhs)
        gap = phi @ theta - rhs
        return 0.5 * float(gap @ gap)
    box = s.model.image_box()
    if box is None:
        raise UnsupportedModel(f"exact lstar is not available for {type(s.model).__name__}")
    gap = s.target - np.clip(s.target, box[0], box[1])
    return 0.5 * float(gap @ (gap if s.weight is None else s.weight * gap))


@dataclass(frozen=True)
class AlphaRule:
    """Stop the inner loop once l(theta) - l* <= alpha^2 (l(theta_t) - l*), at most max_inner steps"""
    alpha: float
    lstar_mode: LStarMode = LStarMode.ZERO
    max_inner: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidArgument(f"alpha must lie in [0,1), got {self.alpha}")
        if self.max_inner < 1:
            raise InvalidArgument("max_inner must be at least 1")
        object.__setattr__(self, "lstar_mode", LStarMode.parse(self.lstar_mode))


def alpha_satisfied(rule: AlphaRule, loss_now: float, loss_anchor: float, lstar_value: float) -> bool:
    """
    True iff loss_now - l* < alpha^2 (loss_anchor - l*).

    The inner loop keeps stepping while the gap ratio is still >= alpha^2.
    The slack only absorbs roundoff when the bound itself is zero.
    """
    gap_anchor = max(loss_anchor - lstar_value, 0.0)
    bound = rule.alpha ** 2 * gap_anchor
    slack = ALPHA_SLACK * max(abs(loss_anchor), abs(lstar_value), bound)
    gap_now = loss_now - lstar_value
    if bound <= slack:
        # alpha = 0, or the anchor already sits at l*
        return gap_now <= slack
    return gap_now < bound


def _index_array(idx: Sequence[int], n: int, name: str) -> np.ndarray:
    arr = np.asarray(idx, dtype=np.int64).ravel()
    if arr.size == 0:
        raise InvalidArgument(f"{name} index set is empty")
    if arr.min() < 0 or arr.max() >= n:
        raise InvalidArgument(f"{name} index set leaves [0, {n})")
    return arr


@dataclass(frozen=True, eq=False)
class StochasticSurrogate:
    """
    Three-term stochastic surrogate.

    value(theta) = eta^2/2 * s_L sum_L f_i^2
                 + eta * s_L sum_L f_i (g_i(theta) - a_i)
                 + 1/2 * s_Q sum_Q (g_i(theta) - a_i)^2

    with s_L = n/|L| and s_Q = n/|Q|, so full index sets and the exact F
    reproduce the deterministic surrogate. Repeated indices count repeatedly.
    """
    model: PredictionModel
    anchor_theta: np.ndarray
    anchor_preds: np.ndarray
    f_hat: np.ndarray
    eta: float
    linear_idx: np.ndarray
    quad_idx: np.ndarray

    @property
    def _scale_lin(self) -> float:
        return self.model.n / self.linear_idx.size

    @property
    def _scale_quad(self) -> float:
        return self.model.n / self.quad_idx.size

    def value(self, theta) -> float:
        diff = self.model.forward(theta) - self.anchor_preds
        f_l = self.f_hat[self.linear_idx]
        const = 0.5 * self.eta ** 2 * self._scale_lin * float(f_l @ f_l)
        lin = self.eta * self._scale_lin * float(f_l @ diff[self.linear_idx])
        dq = diff[self.quad_idx]
        return const + lin + 0.5 * self._scale_quad * float(dq @ dq)

    def gradient(self, theta) -> np.ndarray:
        diff = self.model.forward(theta) - self.anchor_preds
        u = np.zeros(self.model.n)
        np.add.at(u, self.linear_idx, self.eta * self._scale_lin * self.f_hat[self.linear_idx])
        np.add.at(u, self.quad_idx, self._scale_quad * diff[self.quad_idx])
        return self.model.vjp(theta, u)


def build_stochastic_surrogate(model: PredictionModel, theta_t, f_hat, eta: float,
                               linear_idx: Sequence[int], quad_idx: Sequence[int]) -> StochasticSurrogate:
    if eta <= 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    theta_t = model._check_theta(theta_t)
    f_hat = as_vector(f_hat, "f_hat")
    if f_hat.shape[0] != model.n:
        raise DimensionMismatch(f"f_hat has length {f_hat.shape[0]}, model predicts {model.n}")
    return StochasticSurrogate(
        model=model,
        anchor_theta=theta_t.copy(),
        anchor_preds=model.forward(theta_t),
        f_hat=f_hat,
        eta=float(eta),
        linear_idx=_index_array(linear_idx, model.n, "linear"),
        quad_idx=_index_array(quad_idx, model.n, "quadratic"),
    )
