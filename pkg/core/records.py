"""
Trajectory records for hidden-vi
File: core/records.py
Per-iteration metrics of an outer run and their tabular form
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

CSV_COLUMNS = [
    "iter", "dist_sq", "loss_anchor", "loss_final", "loss_ratio",
    "inner_steps", "grad_evals", "alpha_flag", "wall_ms",
]


@dataclass
class IterationRow:
    """One outer iteration; dist_sq is measured after the update"""
    iter: int
    dist_sq: float
    loss_anchor: float
    loss_final: float
    loss_ratio: float
    inner_steps: int = 0
    grad_evals: int = 0
    alpha_flag: bool = False
    wall_ms: float = 0.0


@dataclass
class BiasAudit:
    """||z_{t+1} - z_t*|| against alpha * eta * ||F(z_t) - F(z*)||"""
    iter: int
    measured_alpha: float
    lhs: float
    rhs: float
    holds: bool


@dataclass
class TrajectoryRecord:
    rows: List[IterationRow] = field(default_factory=list)
    dist_sq_init: float = float("nan")
    predictions: List[np.ndarray] = field(default_factory=list)
    theta: Optional[np.ndarray] = None
    f_evals: int = 0
    bias_audit: List[BiasAudit] = field(default_factory=list)
    checkpoints: List[Dict[str, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: IterationRow):
        if self.rows and row.iter <= self.rows[-1].iter:
            raise ValueError(f"iteration {row.iter} does not follow {self.rows[-1].iter}")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def dist_sq(self) -> np.ndarray:
        return self.column("dist_sq")

    def all_dist_sq(self) -> np.ndarray:
        """Initial distance followed by every post-update distance"""
        return np.concatenate([[self.dist_sq_init], self.dist_sq()])

    def first_below(self, threshold: float) -> Optional[int]:
        """Iteration at which dist_sq first drops below threshold"""
        for row in self.rows:
            if row.dist_sq < threshold:
                return row.iter
        return None

    def cap_hits(self) -> int:
        return sum(1 for r in self.rows if r.alpha_flag)

    def to_frame(self, record_timing: bool = True) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.rows], columns=CSV_COLUMNS)
        frame["alpha_flag"] = frame["alpha_flag"].astype(int)
        if not record_timing:
            frame["wall_ms"] = 0.0
        return frame

    def checkpoint_frame(self) -> pd.DataFrame:
        """Periodic evaluation metrics (for example Bellman gap), one row per checkpoint"""
        return pd.DataFrame(self.checkpoints)
