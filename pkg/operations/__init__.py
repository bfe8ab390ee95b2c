"""
hidden-vi operations package v1.0
File: operations/__init__.py
Inner solvers, the surrogate outer loop and the experiment problem stacks
"""

from .solvers import DGN, GD, GN, LM, AdamW, FixedSteps, InnerStrategy, ScriptedStep, run_inner
from .driver import OuterConfig, RateBounds, exact_step, quasi_fejer_run, rate_bounds, run_outer, stochastic_audit
from .counterexample import CounterexampleSpec, build_p, measure_alpha, run_divergence

__all__ = [
    'GD', 'GN', 'DGN', 'LM', 'AdamW', 'ScriptedStep',
    'FixedSteps', 'InnerStrategy', 'run_inner',
    'OuterConfig', 'RateBounds', 'exact_step', 'quasi_fejer_run', 'rate_bounds', 'run_outer', 'stochastic_audit',
    'CounterexampleSpec', 'build_p', 'measure_alpha', 'run_divergence',
]
