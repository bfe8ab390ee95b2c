"""
Prediction models for hidden-vi
File: core/models.py
Parametric maps g(theta) with forward evaluation, analytic Jacobians,
vector-Jacobian products and finite-difference verification
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit, softmax

from .errors import DimensionMismatch, InvalidArgument
from .linalg import as_matrix, as_vector

Box = Tuple[np.ndarray, np.ndarray]


def celu(x: np.ndarray) -> np.ndarray:
    """CELU with unit scale: max(0,x) + min(0, e^x - 1)"""
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def celu_grad(x: np.ndarray) -> np.ndarray:
    """Derivative of CELU: 1 for x>0, e^x otherwise"""
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


class PredictionModel(ABC):
    """Differentiable map from parameters (length d) to predictions (length n)"""

    @property
    @abstractmethod
    def d(self) -> int:
        ...

    @property
    @abstractmethod
    def n(self) -> int:
        ...

    @abstractmethod
    def _forward(self, theta: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _jacobian(self, theta: np.ndarray) -> np.ndarray:
        ...

    def _vjp(self, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self._jacobian(theta).T @ u

    def _check_theta(self, theta) -> np.ndarray:
        theta = as_vector(theta, "theta")
        if theta.shape[0] != self.d:
            raise DimensionMismatch(f"{type(self).__name__} expects {self.d} parameters, got {theta.shape[0]}")
        return theta

    def forward(self, theta) -> np.ndarray:
        """Predictions g(theta)"""
        return self._forward(self._check_theta(theta))

    def jacobian(self, theta) -> np.ndarray:
        """n x d Jacobian Dg(theta)"""
        return self._jacobian(self._check_theta(theta))

    def vjp(self, theta, u) -> np.ndarray:
        """Dg(theta)^T u"""
        theta = self._check_theta(theta)
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n,):
            raise DimensionMismatch(f"vjp needs u of length {self.n}, got shape {u.shape}")
        return self._vjp(theta, u)

    def image_box(self) -> Optional[Box]:
        """Closure of the image as a coordinate box, when it is one"""
        return None


@dataclass(frozen=True, eq=False)
class LinearModel(PredictionModel):
    """g(theta) = Phi theta"""
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", as_matrix(self.phi, "phi"))

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    def _forward(self, theta):
        return self.phi @ theta

    def _jacobian(self, theta):
        return self.phi.copy()

    def _vjp(self, theta, u):
        return self.phi.T @ u


@dataclass(frozen=True, eq=False)
class ScalarSigmoidCelu(PredictionModel):
    """h(theta) = sigmoid(a2 * CELU(a1 * theta)), one player of hidden matching pennies"""
    a1: float
    a2: float

    @property
    def d(self) -> int:
        return 1

    @property
    def n(self) -> int:
        return 1

    def _forward(self, theta):
        return expit(self.a2 * celu(self.a1 * theta))

    def _jacobian(self, theta):
        x = self.a1 * theta
        s = expit(self.a2 * celu(x))
        return (s * (1.0 - s) * self.a2 * celu_grad(x) * self.a1).reshape(1, 1)

    def image_box(self) -> Optional[Box]:
        # CELU covers (-1, inf) whenever a1 != 0
        if self.a1 == 0.0 or self.a2 == 0.0:
            mid = float(expit(0.0))
            return np.array([mid]), np.array([mid])
        edge = float(expit(-self.a2))
        if self.a2 > 0:
            return np.array([edge]), np.array([1.0])
        return np.array([0.0]), np.array([edge])


@dataclass(frozen=True, eq=False)
class SoftmaxMlp(PredictionModel):
    """h(theta) = softmax(A2 CELU(A1 theta)), one player of hidden rock-paper-scissors"""
    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        a1 = as_matrix(self.a1, "a1")
        a2 = as_matrix(self.a2, "a2")
        if a2.shape[1] != a1.shape[0]:
            raise DimensionMismatch(f"a2 {a2.shape} does not compose with a1 {a1.shape}")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    @property
    def d(self) -> int:
        return self.a1.shape[1]

    @property
    def n(self) -> int:
        return self.a2.shape[0]

    def _forward(self, theta):
        return softmax(self.a2 @ celu(self.a1 @ theta))

    def _jacobian(self, theta):
        pre = self.a1 @ theta
        p = softmax(self.a2 @ celu(pre))
        soft = np.diag(p) - np.outer(p, p)
        return soft @ self.a2 @ (celu_grad(pre)[:, None] * self.a1)


@dataclass(frozen=True, eq=False)
class ProductModel(PredictionModel):
    """Independent players stacked: g(theta) = (h1(theta1), h2(theta2), ...)"""
    parts: List[PredictionModel]

    def __post_init__(self):
        if not self.parts:
            raise InvalidArgument("ProductModel needs at least one part")
        object.__setattr__(self, "parts", list(self.parts))

    @property
    def d(self) -> int:
        return sum(p.d for p in self.parts)

    @property
    def n(self) -> int:
        return sum(p.n for p in self.parts)

    def _splits(self):
        d0 = n0 = 0
        for part in self.parts:
            yield part, slice(d0, d0 + part.d), slice(n0, n0 + part.n)
            d0 += part.d
            n0 += part.n

    def _forward(self, theta):
        return np.concatenate([part.forward(theta[ds]) for part, ds, _ in self._splits()])

    def _jacobian(self, theta):
        jac = np.zeros((self.n, self.d))
        for part, ds, ns in self._splits():
            jac[ns, ds] = part.jacobian(theta[ds])
        return jac

    def _vjp(self, theta, u):
        return np.concatenate([part.vjp(theta[ds], u[ns]) for part, ds, ns in self._splits()])

    def image_box(self) -> Optional[Box]:
        boxes = [part.image_box() for part in self.parts]
        if any(b is None for b in boxes):
            return None
        return np.concatenate([b[0] for b in boxes]), np.concatenate([b[1] for b in boxes])


@dataclass(frozen=True, eq=False)
class MlpValueNet(PredictionModel):
    """
    Two-layer tanh value network evaluated on a fixed table of state features.

    Prediction i is w2 . tanh(w1 x_i + b1) + b2. The flat parameter vector is
    laid out as [w1 (row-major, H x in), b1 (H), w2 (H), b2 (1)].
    """
    features: np.ndarray
    hidden: int = 32
    _layout: Tuple[int, int, int, int] = field(init=False, repr=False)

    def __post_init__(self):
        feats = as_matrix(self.features, "features")
        if self.hidden < 1:
            raise InvalidArgument("hidden width must be positive")
        object.__setattr__(self, "features", feats)
        h, k = self.hidden, feats.shape[1]
        object.__setattr__(self, "_layout", (h * k, h * k + h, h * k + 2 * h, h * k + 2 * h + 1))

    @property
    def d(self) -> int:
        return self._layout[3]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def unpack(self, theta: np.ndarray):
        """Split a flat parameter vector into (w1, b1, w2, b2)"""
        a, b, c, _ = self._layout
        w1 = theta[:a].reshape(self.hidden, self.features.shape[1])
        return w1, theta[a:b], theta[b:c], float(theta[c])

    def init_theta(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer"""
        k = self.features.shape[1]
        lim1 = 1.0 / np.sqrt(k)
        lim2 = 1.0 / np.sqrt(self.hidden)
        return np.concatenate([
            rng.uniform(-lim1, lim1, self.hidden * k),
            rng.uniform(-lim1, lim1, self.hidden),
            rng.uniform(-lim2, lim2, self.hidden),
            rng.uniform(-lim2, lim2, 1),
        ])

    def _hidden(self, theta):
        w1, b1, w2, b2 = self.unpack(theta)
        return np.tanh(self.features @ w1.T + b1), w2, b2

    def _forward(self, theta):
        h, w2, b2 = self._hidden(theta)
        return h @ w2 + b2

    def _jacobian(self, theta):
        h, w2, _ = self._hidden(theta)
        gate = w2 * (1.0 - h * h)
        d_w1 = (gate[:, :, None] * self.features[:, None, :]).reshape(self.n, -1)
        return np.hstack([d_w1, gate, h, np.ones((self.n, 1))])

    def _vjp(self, theta, u):
        h, w2, _ = self._hidden(theta)
        g = (u[:, None] * w2[None, :]) * (1.0 - h * h)
        return np.concatenate([(g.T @ self.features).ravel(), g.sum(axis=0), h.T @ u, [u.sum()]])


def hidden_pennies_model(a1=(0.5, 0.7), a2=(1.0, 1.0)) -> ProductModel:
    """Two sigmoid-CELU players; defaults are the reference game constants"""
    return ProductModel([ScalarSigmoidCelu(float(a1[i]), float(a2[i])) for i in range(2)])


def random_pennies_model(rng: np.random.Generator) -> ProductModel:
    """Pennies players with every a_j^i drawn from Uniform[-1, 1]"""
    return hidden_pennies_model(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))


def random_rps_model(rng: np.random.Generator, inner: int = 4, dim: int = 5) -> ProductModel:
    """Two softmax-MLP players with A_j^i entries drawn from Uniform[-1, 1]"""
    return ProductModel([
        SoftmaxMlp(rng.uniform(-1, 1, (inner, dim)), rng.uniform(-1, 1, (3, inner)))
        for _ in range(2)
    ])


def singular_bounds(model: PredictionModel, theta) -> Tuple[float, float]:
    """Extreme singular values of Dg(theta)"""
    jac = model.jacobian(theta)
    w = np.clip(np.linalg.eigvalsh(jac.T @ jac), 0.0, None)
    return float(np.sqrt(w[0])), float(np.sqrt(w[-1]))


def finite_difference_jacobian(model: PredictionModel, theta, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian"""
    theta = model._check_theta(theta)
    jac = np.empty((model.n, model.d))
    for k in range(model.d):
        e = np.zeros(model.d)
        e[k] = step
        jac[:, k] = (model.forward(theta + e) - model.forward(theta - e)) / (2.0 * step)
    return jac


def jacobian_error(model: PredictionModel, theta, step: float = 1e-5) -> float:
    """Max deviation from central differences, relative to the largest Jacobian entry"""
    exact = model.jacobian(theta)
    approx = finite_difference_jacobian(model, theta, step)
    scale = max(float(np.max(np.abs(exact), initial=0.0)), 1e-12)
    return float(np.max(np.abs(exact - approx), initial=0.0)) / scale
