"""
Divergence counterexample for hidden-vi
File: operations/counterexample.py
A strongly monotone linear operator and a rotated step that meets the
alpha-descent condition with alpha = 1/sqrt(2) yet diverges for every eta
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core.errors import HiddenVIError, InvalidArgument
from core.linalg import as_vector
from core.models import LinearModel
from core.records import IterationRow, TrajectoryRecord
from core.vi_problems import AffineOperator

from .solvers import FixedSteps, InnerStrategy, ScriptedStep

logger = logging.getLogger(__name__)

PRODUCT_TOL = 1e-12


def _rotation_45() -> np.ndarray:
    c = 1.0 / math.sqrt(2.0)
    return np.array([[c, -c], [c, c]])


@dataclass(frozen=True, eq=False)
class CounterexampleSpec:
    eta: float
    f_matrix: np.ndarray = field(default_factory=lambda: np.array([[1.0, 1.0], [-1.0, 1.0]]))
    q_matrix: np.ndarray = field(default_factory=_rotation_45)
    alpha: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if self.eta <= 0:
            raise InvalidArgument(f"eta must be positive, got {self.eta}")
        if np.max(np.abs(self.q_matrix.T @ self.q_matrix - np.eye(2))) > PRODUCT_TOL:
            raise InvalidArgument("q_matrix is not orthogonal")

    @property
    def p_matrix(self) -> np.ndarray:
        return build_p(self.eta, self)

    def operator(self) -> AffineOperator:
        """The operator F(z) = F_matrix z, solution at the origin"""
        return AffineOperator(self.f_matrix.copy(), np.zeros(2))


def build_p(eta: float, spec: CounterexampleSpec = None) -> np.ndarray:
    """P = (I - alpha Q) eta F, checked against the closed form [[0, eta], [-eta, 0]]"""
    if eta <= 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    if spec is None:
        spec = CounterexampleSpec(eta)
    product = (np.eye(2) - spec.alpha * spec.q_matrix) @ (eta * spec.f_matrix)
    closed = np.array([[0.0, eta], [-eta, 0.0]])
    if np.max(np.abs(product - closed)) > PRODUCT_TOL * max(1.0, eta):
        raise HiddenVIError(f"(I - alpha Q) eta F drifted from the closed form by {np.max(np.abs(product - closed)):.3e}")
    return product


def measure_alpha(spec: CounterexampleSpec, z) -> float:
    """||(eta F - P) z|| / (eta ||F z||)"""
    z = as_vector(z, "z")
    fz = spec.f_matrix @ z
    denom = spec.eta * float(np.linalg.norm(fz))
    if denom == 0.0:
        raise InvalidArgument("measure_alpha needs F z != 0")
    return float(np.linalg.norm((spec.eta * spec.f_matrix - spec.p_matrix) @ z)) / denom


def _linear_run(step_matrix: np.ndarray, z0: np.ndarray, steps: int) -> TrajectoryRecord:
    """
    Iterate z <- step_matrix z.

    Rows: dist_sq = ||z_{t+1}||^2, loss_anchor = ||z_t||,
    loss_final = ||z_{t+1}||, loss_ratio = ||z_{t+1}|| / ||z_t||.
    """
    z = z0.copy()
    record = TrajectoryRecord(dist_sq_init=float(z @ z), predictions=[z.copy()])
    for t in range(1, steps + 1):
        before = float(np.linalg.norm(z))
        z = step_matrix @ z
        after = float(np.linalg.norm(z))
        record.append(IterationRow(t, after * after, before, after, after / before))
        record.predictions.append(z.copy())
    return record


def run_divergence(spec: CounterexampleSpec, z0, steps: int) -> TrajectoryRecord:
    """z_{t+1} = (I - P) z_t; the norm grows by sqrt(1 + eta^2) per step"""
    z0 = as_vector(z0, "z0")
    if not np.any(z0):
        raise InvalidArgument("z0 must be nonzero")
    record = _linear_run(np.eye(2) - spec.p_matrix, z0, steps)
    logger.info("divergence run: eta=%g, %d steps, norm ratio %.6g",
                spec.eta, steps, math.sqrt(record.rows[-1].dist_sq / record.dist_sq_init) if steps else 1.0)
    return record


def run_exact_contrast(spec: CounterexampleSpec, z0, steps: int) -> TrajectoryRecord:
    """The unbiased step z_{t+1} = (I - eta F) z_t, a contraction for eta < 1"""
    z0 = as_vector(z0, "z0")
    return _linear_run(np.eye(2) - spec.eta * spec.f_matrix, z0, steps)


def biased_inner_rule(spec: CounterexampleSpec) -> InnerStrategy:
    """Inner strategy that always lands on theta_t - P theta_t, for the identity model"""
    p = spec.p_matrix

    def _rotated(s, theta):
        return s.anchor_theta - p @ s.anchor_theta

    return InnerStrategy(ScriptedStep(_rotated, "rotated"), FixedSteps(1))


def identity_model() -> LinearModel:
    return LinearModel(np.eye(2))
