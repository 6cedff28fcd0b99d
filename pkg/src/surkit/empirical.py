"""Empirical PMF / CDF / SUR step curves from per-subject JND annotations.

A viewer group's JND annotations for one video form a discrete sample on the
distortion grid (QP units).  The Satisfied-User-Ratio at level x is the
fraction of the group that does not yet perceive the distortion at x, i.e.
the complementary CDF of the group's JND values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    EmptySamplesError,
    InvalidThresholdError,
    SampleOffGridError,
)

__all__ = [
    "DistortionGrid",
    "JndSamples",
    "SurCurve",
    "PSur",
    "compute_pmf",
    "compute_cdf",
    "compute_empirical_sur",
    "empirical_p_sur",
]

#: Monotonicity slack allowed on analytic (sampled closed-form) curves.
ANALYTIC_MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class DistortionGrid:
    """Inclusive integer distortion-level range with unit step.

    The default grid is QP 0..51 (H.264 quantization parameters).
    """

    lo: int = 0
    hi: int = 51

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def levels(self) -> np.ndarray:
        arr = np.arange(self.lo, self.hi + 1)
        arr.setflags(write=False)
        return arr

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, level) -> bool:
        return float(level).is_integer() and self.lo <= int(level) <= self.hi

    def index(self, level: int) -> int:
        """Position of `level` on the grid."""
        if level not in self:
            raise SampleOffGridError(level)
        return int(level) - self.lo


DEFAULT_GRID = DistortionGrid()


@dataclass(frozen=True)
class JndSamples:
    """One video's per-subject JND annotations (integer QP values)."""

    video_id: str
    resolution: str
    samples: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(int(s) for s in self.samples))

    @property
    def n_subjects(self) -> int:
        return len(self.samples)


class PSur(NamedTuple):
    """A p%SUR lookup result: the grid level, and whether the curve never
    actually dropped to p (tiny groups at high thresholds)."""

    level: int
    saturated: bool = False


@dataclass(frozen=True)
class SurCurve:
    """A discrete SUR curve: one value in [0, 1] per grid level.

    kind is "empirical" (step curve from annotations, exactly non-increasing),
    "analytic" (sampled closed-form model, non-increasing within 1e-9), or
    "predicted" (regression output, no monotonicity guarantee).
    """

    grid: DistortionGrid
    values: np.ndarray
    kind: str = "empirical"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.ndim != 1 or len(vals) != len(self.grid):
            raise ValueError(
                f"curve needs {len(self.grid)} values, got shape {vals.shape}"
            )
        if self.kind not in ("empirical", "analytic", "predicted"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.kind == "empirical":
            if np.any(np.diff(vals) > 1e-12):
                raise ValueError("empirical SUR curve must be non-increasing")
        elif self.kind == "analytic":
            if np.any(np.diff(vals) > ANALYTIC_MONOTONE_TOL):
                raise ValueError("analytic SUR curve must be non-increasing")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def value_at(self, level: int) -> float:
        return float(self.values[self.grid.index(level)])


def _checked_samples(samples: JndSamples, grid: DistortionGrid) -> np.ndarray:
    if samples.n_subjects == 0:
        raise EmptySamplesError(f"video {samples.video_id!r} has no samples")
    for s in samples.samples:
        if s not in grid:
            raise SampleOffGridError(s)
    return np.asarray(samples.samples, dtype=int)


def compute_pmf(samples: JndSamples, grid: DistortionGrid = DEFAULT_GRID) -> np.ndarray:
    """Probability mass function of the group JNDs on the grid.

    Returns an array aligned with ``grid.levels``; entry i is the fraction of
    subjects whose JND equals ``grid.levels[i]``.  Sums to 1.
    """
    vals = _checked_samples(samples, grid)
    counts = np.bincount(vals - grid.lo, minlength=len(grid)).astype(float)
    return counts / samples.n_subjects


def compute_cdf(
    samples: JndSamples,
    grid: DistortionGrid = DEFAULT_GRID,
    strict: bool = False,
) -> np.ndarray:
    """Empirical CDF of the group JNDs at every grid level.

    CDF(x) = P(JND <= x).  ``strict=True`` switches to the strict-inequality
    reading P(JND < x), kept for compatibility with tools that sum the PMF
    below x only.
    """
    pmf = compute_pmf(samples, grid)
    cdf = np.cumsum(pmf)
    if strict:
        cdf = np.concatenate(([0.0], cdf[:-1]))
    # guard against accumulated rounding pushing past 1
    return np.clip(cdf, 0.0, 1.0)


def compute_empirical_sur(
    samples: JndSamples,
    grid: DistortionGrid = DEFAULT_GRID,
    strict: bool = False,
) -> SurCurve:
    """Empirical SUR step curve: SUR(x) = 1 - CDF(x).

    A subject whose JND equals x already perceives the distortion at x and is
    therefore counted as unsatisfied at x.
    """
    sur = 1.0 - compute_cdf(samples, grid, strict=strict)
    return SurCurve(grid=grid, values=sur, kind="empirical")


def empirical_p_sur(curve: SurCurve, p: float) -> PSur:
    """Smallest grid level whose SUR has dropped to the threshold p.

    Returns min{x on grid | SUR(x) <= p}.  If the curve never reaches p the
    maximum grid level is returned with ``saturated=True`` so batch runs can
    proceed and flag the case.
    """
    if not (0.0 < p <= 1.0):
        raise InvalidThresholdError(p)
    hits = np.nonzero(curve.values <= p)[0]
    if len(hits) == 0:
        return PSur(level=curve.grid.hi, saturated=True)
    return PSur(level=int(curve.grid.levels[hits[0]]), saturated=False)
