"""
Exception hierarchy for hidden-vi
File: core/errors.py
Every failure the library raises derives from HiddenVIError
"""

from typing import Optional


class HiddenVIError(Exception):
    """Base class for all hidden-vi errors"""


class DimensionMismatch(HiddenVIError, ValueError):
    """Array shapes do not agree"""


class InvalidArgument(HiddenVIError, ValueError):
    """A numeric precondition was violated"""


class NotPositiveDefinite(HiddenVIError):
    """Cholesky met a non-positive pivot"""


class ZeroMatrix(HiddenVIError):
    """Every eigenvalue fell below the rank cutoff"""


class SingularSystem(HiddenVIError):
    """A direct solve hit a singular matrix"""


class UnsupportedModel(HiddenVIError):
    """Exact surrogate optimum is not computable for this model"""


class InvalidRegime(HiddenVIError):
    """Parameters leave no contraction in the stochastic recursion"""


class ConfigError(HiddenVIError):
    """Experiment config failed to parse or validate"""


class RunFailure(HiddenVIError):
    """A seeded run stopped early; carries the partial record and run label"""

    def __init__(self, message: str, record: Optional[object] = None, label: Optional[str] = None):
        super().__init__(message)
        self.record = record
        self.label = label


class NumericalBlowup(RunFailure):
    """A gradient, iterate or loss became non-finite"""
