"""
VI operators for hidden-vi
File: core/vi_problems.py
Operators F(z) with their domains, known constants and solutions, plus
Euclidean projections and a sampled monotonicity probe
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, InvalidArgument
from .linalg import as_matrix, as_vector, sym_eig_extremes

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12


class DomainKind(Enum):
    ALL_SPACE = "all_space"
    BOX = "box"
    SIMPLEX_PRODUCT = "simplex_product"


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Feasible set Z: all of R^n, a box, or a product of probability simplices"""
    kind: DomainKind
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    sizes: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind is DomainKind.BOX:
            lo = as_vector(self.lower, "lower")
            hi = as_vector(self.upper, "upper")
            if lo.shape != hi.shape or np.any(lo >= hi):
                raise InvalidArgument("box bounds need lower < upper coordinate-wise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind is DomainKind.SIMPLEX_PRODUCT:
            if not self.sizes or any(s <= 0 for s in self.sizes):
                raise InvalidArgument("simplex sizes must be positive")
            object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @classmethod
    def all_space(cls) -> "DomainSpec":
        return cls(DomainKind.ALL_SPACE)

    @classmethod
    def box(cls, lower, upper) -> "DomainSpec":
        return cls(DomainKind.BOX, lower=np.asarray(lower, float), upper=np.asarray(upper, float))

    @classmethod
    def simplex_product(cls, *sizes: int) -> "DomainSpec":
        return cls(DomainKind.SIMPLEX_PRODUCT, sizes=tuple(sizes))

    def sample(self, n: int, rng: np.random.Generator, center: Optional[np.ndarray] = None) -> np.ndarray:
        """Random point of the domain (Gaussian around center for R^n)"""
        if self.kind is DomainKind.BOX:
            return rng.uniform(self.lower, self.upper)
        if self.kind is DomainKind.SIMPLEX_PRODUCT:
            return np.concatenate([rng.dirichlet(np.ones(s)) for s in self.sizes])
        base = np.zeros(n) if center is None else center
        return base + rng.standard_normal(n)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)"""
    if np.all(v >= 0) and abs(v.sum() - 1.0) <= SIMPLEX_TOL:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, v.size + 1) > (css - 1.0))[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1.0)
    return np.clip(v - tau, 0.0, None)


def project(domain: DomainSpec, z) -> np.ndarray:
    """Euclidean projection onto the domain"""
    z = as_vector(z, "z")
    if domain.kind is DomainKind.ALL_SPACE:
        return z.copy()
    if domain.kind is DomainKind.BOX:
        if z.shape != domain.lower.shape:
            raise DimensionMismatch(f"box has {domain.lower.size} coordinates, z has {z.size}")
        return np.clip(z, domain.lower, domain.upper)
    if z.size != sum(domain.sizes):
        raise DimensionMismatch(f"simplex product covers {sum(domain.sizes)} coordinates, z has {z.size}")
    out, start = [], 0
    for size in domain.sizes:
        out.append(project_simplex(z[start:start + size]))
        start += size
    return np.concatenate(out)


class VIOperator(ABC):
    """Evaluatable F: R^n -> R^n with optional solution and constants"""
    n: int
    domain: DomainSpec
    solution: Optional[np.ndarray] = None
    mu: Optional[float] = None
    lip: Optional[float] = None

    @abstractmethod
    def _eval(self, z: np.ndarray) -> np.ndarray:
        ...

    def eval(self, z) -> np.ndarray:
        """F(z)"""
        z = as_vector(z, "z")
        if z.shape[0] != self.n:
            raise DimensionMismatch(f"{type(self).__name__} expects length {self.n}, got {z.shape[0]}")
        return self._eval(z)


@dataclass(eq=False)
class AffineOperator(VIOperator):
    """F(z) = B (z - center)"""
    b_matrix: np.ndarray
    center: np.ndarray
    domain: DomainSpec = field(default_factory=DomainSpec.all_space)

    def __post_init__(self):
        self.b_matrix = as_matrix(self.b_matrix, "b_matrix")
        self.center = as_vector(self.center, "center")
        if self.b_matrix.shape != (self.center.size, self.center.size):
            raise DimensionMismatch(f"B {self.b_matrix.shape} does not match center of length {self.center.size}")
        self.n = self.center.size
        self.solution = self.center
        self.mu = sym_eig_extremes(self.b_matrix)[0]
        self.lip = float(np.linalg.norm(self.b_matrix, 2))

    def _eval(self, z):
        return self.b_matrix @ (z - self.center)

    @property
    def strongly_monotone(self) -> bool:
        return self.mu > 0


PENNIES_B = np.array([[0.75, -4.0], [4.0, 0.75]])


class PenniesOperator(AffineOperator):
    """Hidden matching pennies in operator form, equilibrium (1/2, 1/2)"""

    def __init__(self, domain: Optional[DomainSpec] = None):
        super().__init__(PENNIES_B.copy(), np.array([0.5, 0.5]),
                         domain if domain is not None else DomainSpec.box([0.0, 0.0], [1.0, 1.0]))


RPS_PAYOFF = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


@dataclass(eq=False)
class RpsOperator(VIOperator):
    """F(z) = [A z2; -A^T z1] + lambda (z - center) on two probability simplices"""
    a_payoff: np.ndarray = field(default_factory=lambda: RPS_PAYOFF.copy())
    lambda_reg: float = 0.2
    center: Optional[np.ndarray] = None
    domain: DomainSpec = field(default_factory=lambda: DomainSpec.simplex_product(3, 3))

    def __post_init__(self):
        self.a_payoff = as_matrix(self.a_payoff, "a_payoff")
        k, m = self.a_payoff.shape
        if self.center is None:
            self.center = np.concatenate([np.full(k, 1.0 / k), np.full(m, 1.0 / m)])
        self.n = k + m
        self.solution = self.center
        self.mu = float(self.lambda_reg)
        top = float(np.linalg.norm(self.a_payoff, 2))
        self.lip = float(np.hypot(top, self.lambda_reg))

    def _eval(self, z):
        k = self.a_payoff.shape[0]
        z1, z2 = z[:k], z[k:]
        game = np.concatenate([self.a_payoff @ z2, -self.a_payoff.T @ z1])
        return game + self.lambda_reg * (z - self.center)


@dataclass(eq=False)
class LinearBellmanOperator(VIOperator):
    """F(z) = Xi (z - r - gamma P z), the projected-Bellman-error VI"""
    xi_diag: np.ndarray
    p_matrix: np.ndarray
    r_vec: np.ndarray
    gamma: float
    domain: DomainSpec = field(default_factory=DomainSpec.all_space)

    def __post_init__(self):
        self.xi_diag = as_vector(self.xi_diag, "xi")
        self.p_matrix = as_matrix(self.p_matrix, "P")
        self.r_vec = as_vector(self.r_vec, "r")
        self.n = self.xi_diag.size
        if self.p_matrix.shape != (self.n, self.n) or self.r_vec.size != self.n:
            raise DimensionMismatch("xi, P and r must describe the same number of states")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidArgument(f"gamma must lie in (0,1), got {self.gamma}")
        if np.any(self.xi_diag < 0) or abs(self.xi_diag.sum() - 1.0) > 1e-8:
            raise InvalidArgument("xi must be a probability vector")
        if np.max(np.abs(self.p_matrix.sum(axis=1) - 1.0)) > 1e-8:
            raise InvalidArgument("P rows must sum to 1")
        if np.max(np.abs(self.xi_diag @ self.p_matrix - self.xi_diag)) > 1e-8:
            raise InvalidArgument("xi is not stationary for P")
        system = np.eye(self.n) - self.gamma * self.p_matrix
        self.solution = np.linalg.solve(system, self.r_vec)
        scaled = self.xi_diag[:, None] * system
        self.mu = sym_eig_extremes(scaled)[0]
        self.lip = float(np.linalg.norm(scaled, 2))

    def _eval(self, z):
        return self.xi_diag * (z - self.r_vec - self.gamma * (self.p_matrix @ z))


def monotonicity_probe(op: VIOperator, samples: int, seed: int) -> Tuple[float, float]:
    """Sampled estimates of the monotonicity and Lipschitz constants over domain pairs"""
    if samples < 2:
        raise InvalidArgument("monotonicity_probe needs at least 2 samples")
    rng = np.random.default_rng(seed)
    mu_hat, lip_hat = np.inf, 0.0
    for _ in range(samples):
        x = op.domain.sample(op.n, rng, op.solution)
        y = op.domain.sample(op.n, rng, op.solution)
        diff = x - y
        sq = float(diff @ diff)
        if sq == 0.0:
            continue
        df = op.eval(x) - op.eval(y)
        mu_hat = min(mu_hat, float(df @ diff) / sq)
        lip_hat = max(lip_hat, float(np.linalg.norm(df)) / np.sqrt(sq))
    logger.debug("monotonicity probe on %s: mu_hat=%.6g lip_hat=%.6g", type(op).__name__, mu_hat, lip_hat)
    return mu_hat, lip_hat
