"""Summary instrumental variables from weak, correlated, partially invalid candidates."""
__version__ = "0.1.0"

from ._kernels import backend
from .core import (
    CandidateGraph,
    Dataset,
    EffectReport,
    IvyError,
    IvyModel,
    NonBinaryValue,
    NumericalFailure,
    ShapeMismatch,
    TooFewValid,
    orient_candidates,
    validate,
)
from .pipeline import METHODS, estimate, fit

__all__ = [
    "CandidateGraph", "Dataset", "EffectReport", "IvyError", "IvyModel", "METHODS",
    "NonBinaryValue", "NumericalFailure", "ShapeMismatch", "TooFewValid", "backend",
    "estimate", "fit", "orient_candidates", "validate",
]
