"""The eight parametric SUR model families and their closed-form evaluation.

Six families are complementary CDFs of classical distributions (Gaussian,
two logistics, Weibull, Gumbel, Rayleigh) and therefore map any real x into
[0, 1] non-increasingly.  The two polynomial families are fitted raw to the
SUR points and are returned unclamped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from .empirical import DistortionGrid, SurCurve
from .errors import (
    InvalidParamsError,
    InvalidThresholdError,
    NonMonotoneModelError,
)

__all__ = [
    "ModelFamily",
    "SurModel",
    "DISTRIBUTION_FAMILIES",
    "POLYNOMIAL_FAMILIES",
    "validate_params",
    "evaluate",
    "sample_curve",
    "analytic_p_sur",
]

# Exponent clip keeping np.exp finite; the curve value saturates long before.
_EXP_CLIP = 700.0


class ModelFamily(enum.Enum):
    """Candidate SUR model families, in canonical report order."""

    POLYNOMIAL3 = "polynomial3"
    POLYNOMIAL4 = "polynomial4"
    GAUSSIAN = "gaussian"
    LOGISTIC2 = "logistic2"
    LOGISTIC4 = "logistic4"
    WEIBULL = "weibull"
    GUMBEL = "gumbel"
    RAYLEIGH = "rayleigh"

    @property
    def param_count(self) -> int:
        return _PARAM_COUNTS[self]

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @property
    def label(self) -> str:
        return self.value

    @classmethod
    def from_label(cls, label: str) -> "ModelFamily":
        try:
            return cls(label.strip().lower())
        except ValueError:
            raise ValueError(f"unknown model family {label!r}") from None


_PARAM_COUNTS = {
    ModelFamily.POLYNOMIAL3: 4,
    ModelFamily.POLYNOMIAL4: 5,
    ModelFamily.GAUSSIAN: 2,
    ModelFamily.LOGISTIC2: 2,
    ModelFamily.LOGISTIC4: 4,
    ModelFamily.WEIBULL: 2,
    ModelFamily.GUMBEL: 2,
    ModelFamily.RAYLEIGH: 1,
}

_PARAM_NAMES = {
    ModelFamily.POLYNOMIAL3: ("a0", "a1", "a2", "a3"),
    ModelFamily.POLYNOMIAL4: ("a0", "a1", "a2", "a3", "a4"),
    ModelFamily.GAUSSIAN: ("mu", "sigma"),
    ModelFamily.LOGISTIC2: ("mu", "s"),
    ModelFamily.LOGISTIC4: ("b", "L", "k", "x0"),
    ModelFamily.WEIBULL: ("lam", "k"),
    ModelFamily.GUMBEL: ("mu", "beta"),
    ModelFamily.RAYLEIGH: ("sigma",),
}

#: Families whose curve is the CCDF of a probability distribution.
DISTRIBUTION_FAMILIES = (
    ModelFamily.GAUSSIAN,
    ModelFamily.LOGISTIC2,
    ModelFamily.WEIBULL,
    ModelFamily.GUMBEL,
    ModelFamily.RAYLEIGH,
)

POLYNOMIAL_FAMILIES = (ModelFamily.POLYNOMIAL3, ModelFamily.POLYNOMIAL4)


@dataclass(frozen=True)
class SurModel:
    """A model family tag plus its parameter vector."""

    family: ModelFamily
    params: tuple[float, ...]

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        if len(params) != self.family.param_count:
            raise InvalidParamsError(
                f"{self.family.label} needs {self.family.param_count} "
                f"parameters, got {len(params)}"
            )
        object.__setattr__(self, "params", params)


def validate_params(model: SurModel) -> list[str]:
    """Check the family's parameter constraints; returns violation messages.

    An empty list means the model is valid.  Scale parameters must be
    strictly positive; the 4-parameter logistic must satisfy L*k <= 0 so the
    curve cannot increase.
    """
    fam, p = model.family, model.params
    violations: list[str] = []

    def positive(value, name):
        if not value > 0.0:
            violations.append(f"{name}>0")

    if fam is ModelFamily.GAUSSIAN:
        positive(p[1], "sigma")
    elif fam is ModelFamily.LOGISTIC2:
        positive(p[1], "s")
    elif fam is ModelFamily.LOGISTIC4:
        if p[1] * p[2] > 0.0:
            violations.append("L*k<=0")
    elif fam is ModelFamily.WEIBULL:
        positive(p[0], "lam")
        positive(p[1], "k")
    elif fam is ModelFamily.GUMBEL:
        positive(p[1], "beta")
    elif fam is ModelFamily.RAYLEIGH:
        positive(p[0], "sigma")
    for v in p:
        if not np.isfinite(v):
            violations.append("finite params")
            break
    return violations


def _require_valid(model: SurModel) -> None:
    violations = validate_params(model)
    if violations:
        raise InvalidParamsError(
            f"{model.family.label}{model.params}: " + ", ".join(violations)
        )


def evaluate(model: SurModel, x) -> np.ndarray | float:
    """Closed-form SUR value(s) of the model at distortion level(s) x.

    Accepts a scalar or array; returns the matching shape.  Weibull and
    Rayleigh have support on x >= 0 and return 1 for negative x.
    """
    _require_valid(model)
    xs = np.asarray(x, dtype=float)
    out = _evaluate_unchecked(model.family, np.asarray(model.params), xs)
    if np.isscalar(x) or xs.ndim == 0:
        return float(out)
    return out


def _evaluate_unchecked(fam: ModelFamily, p: np.ndarray, xs: np.ndarray) -> np.ndarray:
    if fam in POLYNOMIAL_FAMILIES:
        # a0 + a1 x + ... ; polyval wants the highest degree first
        return np.polyval(p[::-1], xs)
    if fam is ModelFamily.GAUSSIAN:
        mu, sigma = p
        return 1.0 - ndtr((xs - mu) / sigma)
    if fam is ModelFamily.LOGISTIC2:
        mu, s = p
        # 1 - expit((x-mu)/s) written as expit of the negated argument
        return expit(-(xs - mu) / s)
    if fam is ModelFamily.LOGISTIC4:
        b, big_l, k, x0 = p
        return b + big_l * expit(np.clip(k * (xs - x0), -_EXP_CLIP, _EXP_CLIP))
    if fam is ModelFamily.WEIBULL:
        lam, k = p
        t = np.maximum(xs, 0.0) / lam
        return np.where(xs < 0.0, 1.0, np.exp(-np.power(t, k)))
    if fam is ModelFamily.GUMBEL:
        mu, beta = p
        g = np.exp(np.clip(-(xs - mu) / beta, -_EXP_CLIP, _EXP_CLIP))
        return 1.0 - np.exp(-g)
    if fam is ModelFamily.RAYLEIGH:
        (sigma,) = p
        val = np.exp(-np.square(xs) / (2.0 * sigma * sigma))
        return np.where(xs < 0.0, 1.0, val)
    raise AssertionError(f"unhandled family {fam}")


def sample_curve(
    model: SurModel,
    grid: DistortionGrid,
    kind: str = "analytic",
) -> SurCurve:
    """Evaluate the model at every grid level.

    Distribution CCDFs are non-increasing by construction; a 4-parameter
    logistic or polynomial whose sampled values increase beyond 1e-9 raises
    NonMonotoneModelError, since such a curve is not a valid SUR.
    """
    _require_valid(model)
    values = _evaluate_unchecked(
        model.family, np.asarray(model.params), grid.levels.astype(float)
    )
    if kind != "predicted" and np.any(np.diff(values) > 1e-9):
        raise NonMonotoneModelError(
            f"{model.family.label}{model.params} increases along the grid"
        )
    return SurCurve(grid=grid, values=values, kind=kind)


def analytic_p_sur(
    model: SurModel,
    p: float,
    grid: DistortionGrid,
    rule: str = "nearest",
) -> int:
    """Grid level whose model SUR is closest to the threshold p.

    rule="nearest" (default) minimizes |SUR(x) - p| over the grid, ties going
    to the smaller level.  rule="threshold" instead returns the first level
    with SUR(x) <= p (the empirical-style rule), falling back to the grid
    maximum when the curve never reaches p.
    """
    if not (0.0 < p <= 1.0):
        raise InvalidThresholdError(p)
    _require_valid(model)
    values = _evaluate_unchecked(
        model.family, np.asarray(model.params), grid.levels.astype(float)
    )
    if rule == "nearest":
        # np.argmin returns the first (smallest-level) minimizer on ties
        idx = int(np.argmin(np.abs(values - p)))
        return int(grid.levels[idx])
    if rule == "threshold":
        hits = np.nonzero(values <= p)[0]
        idx = int(hits[0]) if len(hits) else len(grid) - 1
        return int(grid.levels[idx])
    raise ValueError(f"unknown p%SUR rule {rule!r}")
