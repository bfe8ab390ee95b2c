"""
Linear projected-Bellman-error stack for hidden-vi
File: operations/rl_pbe.py
Markov chains, the Bellman operator and its projected VI, running
trajectory estimators and the preconditioned updates they drive
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from core.errors import DimensionMismatch, InvalidArgument, NumericalBlowup, SingularSystem
from core.linalg import as_matrix, as_vector, solve_spd
from core.models import LinearModel
from core.surrogate import SurrogateLoss, build_surrogate
from core.vi_problems import LinearBellmanOperator

logger = logging.getLogger(__name__)

STATIONARY_TOL = 1e-12


def stationary_distribution(p: np.ndarray, tol: float = STATIONARY_TOL, max_squarings: int = 64) -> np.ndarray:
    """
    Stationary distribution by power iteration.

    Squares the lazy chain (I + P)/2, which shares the stationary
    distribution of P and is aperiodic, until successive powers agree.
    """
    p = as_matrix(p, "P")
    n = p.shape[0]
    power = 0.5 * (np.eye(n) + p)
    for _ in range(max_squarings):
        nxt = power @ power
        if np.max(np.abs(nxt - power)) < tol:
            power = nxt
            break
        power = nxt
    xi = np.clip(power.mean(axis=0), 0.0, None)
    xi = xi / xi.sum()
    # one polishing step against P itself
    return xi @ p / np.sum(xi @ p)


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """Row-stochastic chain with state rewards, discount and stationary distribution"""
    p: np.ndarray
    r: np.ndarray
    gamma: float
    xi: np.ndarray = None

    def __post_init__(self):
        p = as_matrix(self.p, "P")
        r = as_vector(self.r, "r")
        n = p.shape[0]
        if p.shape != (n, n) or r.size != n:
            raise DimensionMismatch(f"P {p.shape} and r of length {r.size} disagree")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise InvalidArgument("P must be row-stochastic")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidArgument(f"gamma must lie in [0,1), got {self.gamma}")
        xi = stationary_distribution(p) if self.xi is None else as_vector(self.xi, "xi")
        if np.max(np.abs(xi @ p - xi)) > 1e-8:
            raise InvalidArgument("xi is not stationary for P")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def as_operator(self) -> LinearBellmanOperator:
        return LinearBellmanOperator(self.xi, self.p, self.r, self.gamma)

    def value_function(self) -> np.ndarray:
        """(I - gamma P)^{-1} r"""
        try:
            return np.linalg.solve(np.eye(self.n) - self.gamma * self.p, self.r)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc


def make_slow_mixing_chain(n: int = 100, hold: float = 0.95, seed: int = 0, gamma: float = 0.9) -> MarkovChain:
    """
    Ring random walk that stays put with probability hold.

    The remaining mass goes to the two ring neighbours with a seeded
    per-state split; rewards are Uniform[0, 1].
    """
    if n < 2:
        raise InvalidArgument("a chain needs at least 2 states")
    if not 0.0 <= hold < 1.0:
        raise InvalidArgument(f"hold must lie in [0,1), got {hold}")
    rng = np.random.default_rng(seed)
    right = rng.uniform(0.2, 0.8, n)
    p = np.zeros((n, n))
    idx = np.arange(n)
    p[idx, idx] += hold
    np.add.at(p, (idx, (idx + 1) % n), (1.0 - hold) * right)
    np.add.at(p, (idx, (idx - 1) % n), (1.0 - hold) * (1.0 - right))
    rewards = rng.uniform(0.0, 1.0, n)
    chain = MarkovChain(p, rewards, gamma)
    logger.info("slow-mixing chain: n=%d hold=%.3f mixing rate %.5f", n, hold, mixing_rate(chain))
    return chain


def mixing_rate(mc: MarkovChain, squarings: int = 30) -> float:
    """
    Second-largest eigenvalue modulus of P.

    Power iteration by repeated squaring on the deflated chain P - 1 xi^T,
    normalizing each power and reading off ||D^(2^k)||^(1/2^k).
    """
    deflated = mc.p - np.outer(np.ones(mc.n), mc.xi)
    norm = np.linalg.norm(deflated, 2)
    if norm == 0.0:
        return 0.0
    m = deflated / norm
    log_scale = math.log(norm)
    for _ in range(squarings):
        m = m @ m
        log_scale *= 2.0
        norm = np.linalg.norm(m, 2)
        if norm == 0.0:
            return 0.0
        m /= norm
        log_scale += math.log(norm)
    return math.exp(log_scale / 2.0 ** squarings)


def bellman_apply(mc: MarkovChain, z) -> np.ndarray:
    """T(z) = r + gamma P z"""
    z = as_vector(z, "z")
    if z.size != mc.n:
        raise DimensionMismatch(f"chain has {mc.n} states, z has length {z.size}")
    return mc.r + mc.gamma * (mc.p @ z)


def pbe_operator(mc: MarkovChain, z) -> np.ndarray:
    """F(z) = Xi (z - T(z))"""
    z = as_vector(z, "z")
    return mc.xi * (z - bellman_apply(mc, z))


def make_features(n: int, d: int, seed: int) -> np.ndarray:
    """Seeded Gaussian features with orthonormalized columns, scaled by sqrt(n)"""
    if not 1 <= d <= n:
        raise InvalidArgument(f"feature dimension must lie in [1, {n}], got {d}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return q * math.sqrt(n)


def exact_linear_fixed_point(mc: MarkovChain, phi) -> np.ndarray:
    """theta* solving Phi^T Xi (Phi - gamma P Phi) theta = Phi^T Xi r"""
    phi = as_matrix(phi, "phi")
    if phi.shape[0] != mc.n:
        raise DimensionMismatch(f"features have {phi.shape[0]} rows, chain has {mc.n} states")
    weighted = phi.T * mc.xi
    a = weighted @ (phi - mc.gamma * (mc.p @ phi))
    b = weighted @ mc.r
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"projected Bellman system is singular: {exc}") from exc


def projected_bellman_step(mc: MarkovChain, phi, theta) -> np.ndarray:
    """Weights of Pi_Xi T(Phi theta), the Xi-weighted least-squares fit of T(Phi theta)"""
    phi = as_matrix(phi, "phi")
    weighted = phi.T * mc.xi
    return solve_spd(weighted @ phi, weighted @ bellman_apply(mc, phi @ theta))


def bertsekas_deterministic_update(mc: MarkovChain, phi, theta) -> np.ndarray:
    """theta - (Phi^T Xi Phi)^{-1} Phi^T F(Phi theta)"""
    phi = as_matrix(phi, "phi")
    theta = as_vector(theta, "theta")
    gram = (phi.T * mc.xi) @ phi
    return theta - solve_spd(gram, phi.T @ pbe_operator(mc, phi @ theta))


@dataclass
class Trajectory:
    states: np.ndarray   # length + 1 visited states
    rewards: np.ndarray  # r(s_t) for the first length states

    def __len__(self) -> int:
        return self.rewards.size


def simulate_trajectory(mc: MarkovChain, start_state: int, length: int, seed: int) -> Trajectory:
    if length < 1:
        raise InvalidArgument("trajectory length must be at least 1")
    if not 0 <= start_state < mc.n:
        raise InvalidArgument(f"start state {start_state} outside [0, {mc.n})")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(mc.p, axis=1)
    draws = rng.random(length)
    states = np.empty(length + 1, dtype=np.int64)
    states[0] = start_state
    s = start_state
    last = mc.n - 1
    for t in range(length):
        s = min(int(np.searchsorted(cdf[s], draws[t], side="right")), last)
        states[t + 1] = s
    return Trajectory(states, mc.r[states[:-1]].copy())


@dataclass
class EstimatorState:
    """
    Running trajectory estimators of Phi^T Xi Phi, Phi^T Xi (Phi - gamma P Phi)
    and Phi^T Xi r.

    Sums are folded in trajectory order; the means are exposed as
    properties. Visit, transition and reward tallies allow the empirical
    distribution, transition matrix and reward vector to be rebuilt.
    """
    phi: np.ndarray
    gamma: float
    t: int = 0
    d_sum: np.ndarray = field(default=None, repr=False)
    c_sum: np.ndarray = field(default=None, repr=False)
    r_sum: np.ndarray = field(default=None, repr=False)
    visit_counts: np.ndarray = field(default=None, repr=False)
    transition_counts: np.ndarray = field(default=None, repr=False)
    reward_sums: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.phi = as_matrix(self.phi, "phi")
        n, d = self.phi.shape
        if self.d_sum is None:
            self.d_sum = np.zeros((d, d))
            self.c_sum = np.zeros((d, d))
            self.r_sum = np.zeros(d)
            self.visit_counts = np.zeros(n, dtype=np.int64)
            self.transition_counts = np.zeros((n, n), dtype=np.int64)
            self.reward_sums = np.zeros(n)

    def _require_samples(self):
        if self.t < 1:
            raise InvalidArgument("estimators need at least one sample")

    @property
    def d_hat(self) -> np.ndarray:
        self._require_samples()
        return self.d_sum / self.t

    @property
    def c_hat(self) -> np.ndarray:
        self._require_samples()
        return self.c_sum / self.t

    @property
    def r_hat(self) -> np.ndarray:
        self._require_samples()
        return self.r_sum / self.t


def update_estimators(est: EstimatorState, phi, s_t: int, s_next: int, reward: float) -> EstimatorState:
    """Fold one transition (s_t, reward, s_next) into the running estimators, in place"""
    if phi is not est.phi and np.shape(phi) != est.phi.shape:
        raise DimensionMismatch("features do not match the estimator state")
    f = est.phi[s_t]
    f_next = est.phi[s_next]
    est.d_sum += np.outer(f, f)
    est.c_sum += np.outer(f, f - est.gamma * f_next)
    est.r_sum += reward * f
    est.visit_counts[s_t] += 1
    est.transition_counts[s_t, s_next] += 1
    est.reward_sums[s_t] += reward
    est.t += 1
    return est


def fold_trajectory(est: EstimatorState, traj: Trajectory) -> EstimatorState:
    for i in range(len(traj)):
        update_estimators(est, est.phi, int(traj.states[i]), int(traj.states[i + 1]), float(traj.rewards[i]))
    return est


def empirical_quantities(est: EstimatorState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(xi_hat, P_bar, r_bar) rebuilt from the visit tallies; unvisited states get zero rows"""
    est._require_samples()
    visits = est.visit_counts.astype(np.float64)
    xi_hat = visits / est.t
    safe = np.where(visits > 0, visits, 1.0)
    p_bar = est.transition_counts / safe[:, None]
    r_bar = est.reward_sums / safe
    return xi_hat, p_bar, r_bar


def empirical_surrogate(est: EstimatorState, theta_t) -> SurrogateLoss:
    """1/2 || Phi theta - T_hat(Phi theta_t) ||^2 weighted by xi_hat"""
    xi_hat, p_bar, r_bar = empirical_quantities(est)
    model = LinearModel(est.phi)
    z = model.forward(theta_t)
    t_hat = r_bar + est.gamma * (p_bar @ z)
    # eta = 1 with f = z - T_hat(z) puts the target exactly at T_hat(z)
    return build_surrogate(model, theta_t, z - t_hat, 1.0, xi_hat)


def bertsekas_update(theta, est: EstimatorState, ridge: float = 0.0) -> np.ndarray:
    """theta - (D_hat + ridge I)^{-1} (C_hat theta - r_hat)"""
    theta = as_vector(theta, "theta")
    if ridge < 0:
        raise InvalidArgument(f"ridge must be nonnegative, got {ridge}")
    d_hat = est.d_hat
    system = d_hat + ridge * np.eye(d_hat.shape[0]) if ridge else d_hat
    return theta - solve_spd(system, est.c_hat @ theta - est.r_hat)


def stochastic_linear_surrogate_grad(theta, theta_t, est: EstimatorState) -> np.ndarray:
    """C_hat theta_t - r_hat + D_hat (theta - theta_t)"""
    theta = as_vector(theta, "theta")
    theta_t = as_vector(theta_t, "theta_t")
    return est.c_hat @ theta_t - est.r_hat + est.d_hat @ (theta - theta_t)


def surr_gd_linear(theta_t, est: EstimatorState, inner_steps: int, lr: float) -> np.ndarray:
    """inner_steps gradient steps on the stochastic linear surrogate from theta_t"""
    if lr <= 0:
        raise InvalidArgument(f"lr must be positive, got {lr}")
    theta_t = as_vector(theta_t, "theta_t")
    d_hat, c_hat, r_hat = est.d_hat, est.c_hat, est.r_hat
    anchor_grad = c_hat @ theta_t - r_hat
    theta = theta_t.copy()
    for _ in range(inner_steps):
        theta = theta - lr * (anchor_grad + d_hat @ (theta - theta_t))
        if not np.all(np.isfinite(theta)):
            raise NumericalBlowup(f"surrogate GD diverged at lr={lr}")
    return theta
