"""Seeded synthetic viewer groups and feature sets with known ground truth.

Every video draws true model parameters from declared ranges, JND samples
from the distribution whose CCDF is the model curve, and features as smooth
functions of the true parameters.  All streams derive from PCG64 generators
keyed on (master seed, video index, channel); Gaussian-like draws go through
inverse-CDF transforms of uniforms so outputs are byte-stable across
platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from .empirical import DEFAULT_GRID, DistortionGrid, JndSamples
from .errors import InvalidParamsError
from .models import DISTRIBUTION_FAMILIES, ModelFamily, SurModel
from .pipeline import FeatureRecord

__all__ = [
    "SynthSpec",
    "SynthVideo",
    "default_param_ranges",
    "gen_annotations",
    "gen_features",
    "gen_dataset",
]

_UNIFORM_EPS = 1e-12


def default_param_ranges(family: ModelFamily) -> tuple[tuple[float, float], ...]:
    if family in (ModelFamily.GAUSSIAN, ModelFamily.LOGISTIC2, ModelFamily.GUMBEL):
        return ((15.0, 40.0), (2.0, 8.0))
    if family is ModelFamily.WEIBULL:
        return ((15.0, 40.0), (1.5, 6.0))
    if family is ModelFamily.RAYLEIGH:
        return ((10.0, 35.0),)
    raise InvalidParamsError(f"cannot sample JNDs from family {family.label}")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic dataset."""

    n_videos: int
    subjects_per_video: int = 30
    family: ModelFamily = ModelFamily.GAUSSIAN
    param_ranges: tuple[tuple[float, float], ...] | None = None
    masking_dim: int = 8
    qd_dim: int = 4
    include_pvs: bool = True
    feature_noise: float = 0.0
    resolution: str = "1080p"
    seed: int = 0
    grid: DistortionGrid = DEFAULT_GRID

    def __post_init__(self):
        if self.family not in DISTRIBUTION_FAMILIES:
            raise InvalidParamsError(f"cannot sample JNDs from family {self.family.label}")
        if self.n_videos < 1 or self.subjects_per_video < 1:
            raise ValueError("need at least one video and one subject")
        if self.feature_noise < 0.0:
            raise ValueError("feature noise level must be >= 0")
        if not 2 <= self.masking_dim <= 8:
            raise ValueError("masking_dim must lie in 2..8")
        if self.qd_dim < 1:
            raise ValueError("qd_dim must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        ranges = self.param_ranges
        if ranges is None:
            ranges = default_param_ranges(self.family)
        ranges = tuple((float(lo), float(hi)) for lo, hi in ranges)
        if len(ranges) != self.family.param_count:
            raise ValueError(
                f"{self.family.label} needs {self.family.param_count} parameter ranges"
            )
        for lo, hi in ranges:
            if hi < lo:
                raise ValueError(f"empty parameter range ({lo}, {hi})")
        lo0, hi0 = ranges[0]
        if lo0 < self.grid.lo or hi0 > self.grid.hi:
            raise ValueError("location parameter range must lie within the grid")
        object.__setattr__(self, "param_ranges", ranges)

    def video_id(self, index: int) -> str:
        return f"synth{index:04d}"


class SynthVideo(NamedTuple):
    record: FeatureRecord
    samples: JndSamples
    truth: SurModel


def _stream(*parts: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(parts))))


def _float_bits(value: float) -> int:
    return int(np.frombuffer(np.float64(value).tobytes(), dtype=np.uint64)[0])


def _true_params(spec: SynthSpec, index: int) -> tuple[float, ...]:
    rng = _stream(spec.seed, index, 0)
    return tuple(lo + (hi - lo) * rng.random() for lo, hi in spec.param_ranges)


def _inverse_cdf(family: ModelFamily, params: tuple[float, ...], u: np.ndarray) -> np.ndarray:
    """Quantile transform of uniforms for the distribution whose CCDF is the
    model curve.  A zero scale collapses to the location (degenerate group)."""
    u = np.clip(u, _UNIFORM_EPS, 1.0 - _UNIFORM_EPS)
    if family is ModelFamily.GAUSSIAN:
        mu, sigma = params
        return mu + sigma * ndtri(u)
    if family is ModelFamily.LOGISTIC2:
        mu, s = params
        return mu + s * (np.log(u) - np.log1p(-u))
    if family is ModelFamily.WEIBULL:
        lam, k = params
        if k <= 0.0 or lam <= 0.0:
            raise InvalidParamsError("weibull sampling needs lam > 0 and k > 0")
        return lam * np.power(-np.log1p(-u), 1.0 / k)
    if family is ModelFamily.GUMBEL:
        mu, beta = params
        return mu - beta * np.log(-np.log(u))
    if family is ModelFamily.RAYLEIGH:
        (sigma,) = params
        return sigma * np.sqrt(-2.0 * np.log1p(-u))
    raise InvalidParamsError(f"cannot sample from family {family.label}")


def gen_annotations(spec: SynthSpec, video_index: int) -> JndSamples:
    """Draw one video's subject JNDs, rounded half-to-even onto the grid and
    clamped to [grid min + 1, grid max]."""
    params = _true_params(spec, video_index)
    rng = _stream(spec.seed, video_index, 1)
    raw = _inverse_cdf(spec.family, params, rng.random(spec.subjects_per_video))
    levels = np.clip(np.rint(raw), spec.grid.lo + 1, spec.grid.hi).astype(int)
    return JndSamples(
        video_id=spec.video_id(video_index),
        resolution=spec.resolution,
        samples=tuple(int(v) for v in levels),
    )


def gen_features(
    spec: SynthSpec,
    params: tuple[float, ...],
    video_id: str = "",
    resolution: str | None = None,
) -> FeatureRecord:
    """Features as declared smooth functions of the true parameters.

    Masking entries combine the normalized location and scale and their
    products; quality-degradation entries are sigmoids of the standardized
    level (qp - location)/scale with per-entry slopes.  Gaussian noise of the
    declared level is added from a stream keyed on (seed, parameter bits), so
    identical spec + params give an identical record.
    """
    loc = params[0]
    scale = params[1] if len(params) > 1 else params[0] / 2.0
    u = loc / spec.grid.hi
    v = scale / 10.0
    base = np.array([u, v, u * v, u * u, v * v, u * u * v, u * v * v, 0.5 * (u + v)])
    rng = _stream(spec.seed, 1, *[_float_bits(p) for p in params])

    def noise(shape):
        if spec.feature_noise == 0.0:
            return np.zeros(shape)
        draws = np.clip(rng.random(shape), _UNIFORM_EPS, 1.0 - _UNIFORM_EPS)
        return spec.feature_noise * ndtri(draws)

    masking = base[: spec.masking_dim] + noise(spec.masking_dim)

    pvs = None
    if spec.include_pvs:
        z = (spec.grid.levels.astype(float) - loc) / max(scale, 1e-9)
        slopes = 1.0 + 0.5 * np.arange(spec.qd_dim)
        qd = 1.0 / (1.0 + np.exp(-z[:, None] / slopes[None, :]))
        qd = qd + noise(qd.shape)
        pvs = {int(level): qd[i] for i, level in enumerate(spec.grid.levels)}

    return FeatureRecord(
        video_id=video_id,
        resolution=resolution if resolution is not None else spec.resolution,
        masking=masking,
        pvs=pvs,
    )


def gen_dataset(spec: SynthSpec) -> list[SynthVideo]:
    """Generate (features, annotations, true model) triples for every video."""
    videos = []
    for index in range(spec.n_videos):
        params = _true_params(spec, index)
        truth = SurModel(spec.family, params)
        samples = gen_annotations(spec, index)
        record = gen_features(spec, params, spec.video_id(index), spec.resolution)
        videos.append(SynthVideo(record=record, samples=samples, truth=truth))
    return videos
