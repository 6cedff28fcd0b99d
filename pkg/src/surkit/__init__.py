"""surkit: Satisfied-User-Ratio curve modeling and prediction toolkit.

Turns per-subject JND annotations into empirical SUR curves, fits competing
parametric model families to them, and predicts SUR curves / p%SUR encoding
parameters from video feature vectors via parameter-driven kernel regression.
"""

from .empirical import (
    DEFAULT_GRID,
    DistortionGrid,
    JndSamples,
    PSur,
    SurCurve,
    compute_cdf,
    compute_empirical_sur,
    compute_pmf,
    empirical_p_sur,
)
from .models import (
    DISTRIBUTION_FAMILIES,
    POLYNOMIAL_FAMILIES,
    ModelFamily,
    SurModel,
    analytic_p_sur,
    evaluate,
    sample_curve,
    validate_params,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRID",
    "DistortionGrid",
    "JndSamples",
    "PSur",
    "SurCurve",
    "compute_cdf",
    "compute_empirical_sur",
    "compute_pmf",
    "empirical_p_sur",
    "DISTRIBUTION_FAMILIES",
    "POLYNOMIAL_FAMILIES",
    "ModelFamily",
    "SurModel",
    "analytic_p_sur",
    "evaluate",
    "sample_curve",
    "validate_params",
]
