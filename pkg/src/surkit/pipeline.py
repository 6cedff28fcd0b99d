"""Predictor assembly and cross-validated evaluation.

Three predictor designs are supported: the point-wise baseline (one SVR over
all (video, QP) rows), and the parameter-driven models that predict a fitted
family's parameters from source-only (src) or source-plus-PVS (src_pvs)
features.  Parameter-driven curves are sampled from the predicted model and
are therefore monotone by construction; baseline curves are not, and their
monotonicity violations are counted in the report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .empirical import (
    DEFAULT_GRID,
    DistortionGrid,
    JndSamples,
    SurCurve,
    compute_empirical_sur,
    empirical_p_sur,
)
from .errors import (
    GridMismatchError,
    MissingPvsFeaturesError,
    TooFewItemsError,
    UnconvergedFitError,
    UnknownQpError,
)
from .fitting import FitResult, fit_nls, fit_poly_monotone
from .models import (
    POLYNOMIAL_FAMILIES,
    ModelFamily,
    SurModel,
    analytic_p_sur,
    sample_curve,
)
from .regression import SvrHyperparams, SvrModel, kfold_split, svr_predict, svr_train

__all__ = [
    "FeatureRecord",
    "PredictorConfig",
    "ParamPredictor",
    "BaselinePredictor",
    "PredictionMetrics",
    "VideoPrediction",
    "ReportRow",
    "PredictionReport",
    "build_features",
    "train_param_predictor",
    "predict_sur",
    "train_baseline",
    "predict_baseline",
    "evaluate_prediction",
    "count_monotonicity_violations",
    "cross_validate",
]

MODES = ("baseline", "src", "src_pvs")

# floor applied to predicted scale parameters before sampling the curve
SCALE_FLOOR = 1e-3


@dataclass(frozen=True)
class FeatureRecord:
    """Per-video feature vectors: a masking-effect histogram over the whole
    source, plus optional per-QP quality-degradation vectors."""

    video_id: str
    resolution: str
    masking: np.ndarray
    pvs: dict[int, np.ndarray] | None = None

    def __post_init__(self):
        masking = np.asarray(self.masking, dtype=float)
        masking.setflags(write=False)
        object.__setattr__(self, "masking", masking)


@dataclass(frozen=True)
class PredictorConfig:
    mode: str = "src"
    family: ModelFamily = ModelFamily.GAUSSIAN
    p: float = 0.75
    hyper: SvrHyperparams = SvrHyperparams()
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def model_label(self) -> str:
        if self.mode == "baseline":
            return "baseline"
        prefix = "src+pvs" if self.mode == "src_pvs" else "src"
        return f"{prefix}-{self.family.label}"


class PredictionMetrics(NamedTuple):
    dsur_pa: float
    dsur_pe: float
    dpsur_pa: float
    dpsur_pe: float


@dataclass(frozen=True)
class VideoPrediction:
    video_id: str
    resolution: str
    model: str
    dsur_pa: float
    dsur_pe: float
    dpsur_pa: float
    dpsur_pe: float
    mono_violations: int


@dataclass(frozen=True)
class ReportRow:
    resolution: str
    model: str
    n_videos: int
    dsur_pa: float
    dsur_pe: float
    dpsur_pa: float
    dpsur_pe: float
    mono_violations: int


@dataclass(frozen=True)
class PredictionReport:
    """Per-resolution mean prediction errors plus the per-video audit rows."""

    rows: tuple[ReportRow, ...]
    per_video: tuple[VideoPrediction, ...]
    model: str
    p: float
    folds: int
    seed: int


def build_features(
    record: FeatureRecord,
    mode: str,
    grid: DistortionGrid = DEFAULT_GRID,
    qp: int | None = None,
) -> np.ndarray:
    """Assemble the regression input vector for one video (and QP, baseline).

    src uses the masking histogram alone; src_pvs appends every per-QP
    quality-degradation vector in grid order; baseline appends the single
    QP's vector and the normalized QP scalar.
    """
    if mode == "src":
        return np.asarray(record.masking, dtype=float)
    if record.pvs is None:
        raise MissingPvsFeaturesError(
            f"mode {mode!r} needs per-QP quality vectors, video {record.video_id!r} has none"
        )
    if mode == "src_pvs":
        parts = [record.masking]
        for level in grid.levels:
            if int(level) not in record.pvs:
                raise UnknownQpError(int(level))
            parts.append(record.pvs[int(level)])
        return np.concatenate(parts)
    if mode == "baseline":
        if qp is None:
            raise ValueError("baseline mode needs a qp level")
        if int(qp) not in record.pvs:
            raise UnknownQpError(int(qp))
        return np.concatenate(
            [record.masking, record.pvs[int(qp)], [float(qp) / grid.hi]]
        )
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class ParamPredictor:
    """One SVR per model parameter, with per-target min-max scaling fitted on
    the training fold."""

    family: ModelFamily
    mode: str
    p: float
    models: tuple[SvrModel, ...]
    target_ranges: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class BaselinePredictor:
    model: SvrModel
    p: float


def train_param_predictor(
    train: list[tuple[FeatureRecord, FitResult]],
    config: PredictorConfig,
    grid: DistortionGrid = DEFAULT_GRID,
) -> ParamPredictor:
    """Train feature -> parameter regressors on converged fits.

    Unconverged or failed fits are dropped with a warning; fewer than three
    usable videos is an error.
    """
    usable = [
        (rec, fit)
        for rec, fit in train
        if fit.model is not None and fit.converged and fit.error is None
    ]
    dropped = len(train) - len(usable)
    if dropped:
        warnings.warn(f"excluded {dropped} unconverged fits from training", stacklevel=2)
    if len(usable) < 3:
        raise UnconvergedFitError(
            f"only {len(usable)} usable training fits; need at least 3"
        )

    x = np.vstack([build_features(rec, config.mode, grid) for rec, _ in usable])
    targets = np.array([fit.model.params for _, fit in usable])

    models = []
    ranges = []
    for col in range(targets.shape[1]):
        t = targets[:, col]
        lo, hi = float(t.min()), float(t.max())
        scaled = (t - lo) / (hi - lo) if hi > lo else np.zeros_like(t)
        models.append(svr_train(x, scaled, config.hyper))
        ranges.append((lo, hi))
    return ParamPredictor(
        family=config.family,
        mode=config.mode,
        p=config.p,
        models=tuple(models),
        target_ranges=tuple(ranges),
    )


def _project_valid(family: ModelFamily, params: list[float]) -> tuple[float, ...]:
    """Push predicted parameters into the family's validity region."""
    p = list(params)
    if family in (ModelFamily.GAUSSIAN, ModelFamily.LOGISTIC2, ModelFamily.GUMBEL):
        p[1] = max(p[1], SCALE_FLOOR)
    elif family is ModelFamily.WEIBULL:
        p[0] = max(p[0], SCALE_FLOOR)
        p[1] = max(p[1], SCALE_FLOOR)
    elif family is ModelFamily.RAYLEIGH:
        p[0] = max(p[0], SCALE_FLOOR)
    elif family is ModelFamily.LOGISTIC4:
        p[1] = max(p[1], SCALE_FLOOR)
        p[2] = min(p[2], -SCALE_FLOOR)
    return tuple(p)


def predict_sur(
    predictor: ParamPredictor,
    record: FeatureRecord,
    grid: DistortionGrid = DEFAULT_GRID,
) -> tuple[SurModel, SurCurve, int]:
    """Predict model parameters, sample the curve, and read off p%SUR.

    The sampled curve of a valid model is non-increasing by construction.
    """
    x = build_features(record, predictor.mode, grid)
    raw = []
    for svr, (lo, hi) in zip(predictor.models, predictor.target_ranges):
        scaled = float(svr_predict(svr, x))
        raw.append(scaled * (hi - lo) + lo)
    model = SurModel(predictor.family, _project_valid(predictor.family, raw))
    curve = sample_curve(model, grid, kind="predicted")
    level = analytic_p_sur(model, predictor.p, grid)
    return model, curve, level


def train_baseline(
    train: list[tuple[FeatureRecord, SurCurve]],
    config: PredictorConfig,
    grid: DistortionGrid = DEFAULT_GRID,
) -> BaselinePredictor:
    """Train the point-wise SVR on one row per (video, grid level)."""
    rows = []
    targets = []
    for rec, curve in train:
        if rec.pvs is None:
            raise MissingPvsFeaturesError(
                f"baseline mode needs per-QP quality vectors, video {rec.video_id!r} has none"
            )
        for idx, level in enumerate(grid.levels):
            rows.append(build_features(rec, "baseline", grid, qp=int(level)))
            targets.append(curve.values[idx])
    model = svr_train(np.vstack(rows), np.asarray(targets), config.hyper)
    return BaselinePredictor(model=model, p=config.p)


def predict_baseline(
    predictor: BaselinePredictor,
    record: FeatureRecord,
    grid: DistortionGrid = DEFAULT_GRID,
) -> tuple[SurCurve, int]:
    """Predict each grid level independently; values clamped to [0, 1].

    The resulting curve has no monotonicity guarantee.  p%SUR uses the
    first-level-at-or-below-p rule with saturation fallback.
    """
    x = np.vstack(
        [build_features(record, "baseline", grid, qp=int(level)) for level in grid.levels]
    )
    values = np.clip(svr_predict(predictor.model, x), 0.0, 1.0)
    curve = SurCurve(grid=grid, values=values, kind="predicted")
    level = empirical_p_sur(curve, predictor.p).level
    return curve, level


def count_monotonicity_violations(curve: SurCurve) -> int:
    """Number of adjacent grid pairs where the curve increases beyond 1e-9."""
    return int(np.count_nonzero(np.diff(curve.values) > 1e-9))


def _nearest_level(curve: SurCurve, p: float) -> int:
    idx = int(np.argmin(np.abs(curve.values - p)))
    return int(curve.grid.levels[idx])


def evaluate_prediction(
    predicted: SurCurve,
    analytic: SurCurve,
    empirical: SurCurve,
    p: float,
    predicted_p_sur: int | None = None,
) -> PredictionMetrics:
    """The four cross-validation error metrics for one video.

    Delta-SUR values are MAEs over all grid levels; delta-p%SUR values are
    absolute level differences.  The predicted curve's p%SUR is taken from
    `predicted_p_sur` when the predictor is parametric; otherwise the
    threshold rule is applied to the predicted values directly.
    """
    if not (predicted.grid == analytic.grid == empirical.grid):
        raise GridMismatchError("curves live on different grids")
    dsur_pa = float(np.mean(np.abs(predicted.values - analytic.values)))
    dsur_pe = float(np.mean(np.abs(predicted.values - empirical.values)))
    pred_level = (
        predicted_p_sur if predicted_p_sur is not None else empirical_p_sur(predicted, p).level
    )
    ana_level = _nearest_level(analytic, p)
    emp_level = empirical_p_sur(empirical, p).level
    return PredictionMetrics(
        dsur_pa=dsur_pa,
        dsur_pe=dsur_pe,
        dpsur_pa=float(abs(pred_level - ana_level)),
        dpsur_pe=float(abs(pred_level - emp_level)),
    )


def _fit_family(family: ModelFamily, curve: SurCurve, p: float) -> FitResult:
    if family in POLYNOMIAL_FAMILIES:
        return fit_poly_monotone(family.param_count - 1, curve, p)
    return fit_nls(family, curve, p=p)


class _GroundTruth(NamedTuple):
    record: FeatureRecord
    empirical: SurCurve
    fit: FitResult
    analytic: SurCurve


def _evaluate_fold(
    truth: dict[str, _GroundTruth],
    train_ids: list[str],
    test_ids: list[str],
    config: PredictorConfig,
    grid: DistortionGrid,
) -> dict[str, VideoPrediction]:
    """Train on the training videos, return one audit row per test video."""
    out: dict[str, VideoPrediction] = {}
    if config.mode == "baseline":
        predictor = train_baseline(
            [(truth[v].record, truth[v].empirical) for v in train_ids], config, grid
        )
        for vid in test_ids:
            gt = truth[vid]
            curve, level = predict_baseline(predictor, gt.record, grid)
            metrics = evaluate_prediction(
                curve, gt.analytic, gt.empirical, config.p, predicted_p_sur=level
            )
            out[vid] = VideoPrediction(
                video_id=vid,
                resolution=gt.record.resolution,
                model=config.model_label,
                mono_violations=count_monotonicity_violations(curve),
                **metrics._asdict(),
            )
    else:
        predictor = train_param_predictor(
            [(truth[v].record, truth[v].fit) for v in train_ids], config, grid
        )
        for vid in test_ids:
            gt = truth[vid]
            _, curve, level = predict_sur(predictor, gt.record, grid)
            metrics = evaluate_prediction(
                curve, gt.analytic, gt.empirical, config.p, predicted_p_sur=level
            )
            out[vid] = VideoPrediction(
                video_id=vid,
                resolution=gt.record.resolution,
                model=config.model_label,
                mono_violations=count_monotonicity_violations(curve),
                **metrics._asdict(),
            )
    return out


def _mean_row(resolution: str, model: str, rows: list[VideoPrediction]) -> ReportRow:
    return ReportRow(
        resolution=resolution,
        model=model,
        n_videos=len(rows),
        dsur_pa=float(np.mean([r.dsur_pa for r in rows])),
        dsur_pe=float(np.mean([r.dsur_pe for r in rows])),
        dpsur_pa=float(np.mean([r.dpsur_pa for r in rows])),
        dpsur_pe=float(np.mean([r.dpsur_pe for r in rows])),
        mono_violations=int(sum(r.mono_violations for r in rows)),
    )


def cross_validate(
    dataset: list[tuple[FeatureRecord, JndSamples]],
    config: PredictorConfig,
    grid: DistortionGrid = DEFAULT_GRID,
) -> PredictionReport:
    """k-fold cross-validation per resolution group.

    Ground truth (empirical curve plus the fitted reference model of the
    configured family) is computed for every video; folds are assigned by a
    seeded shuffle; each fold's videos are predicted by a model trained on
    the remaining folds only.  Videos whose reference fit fails outright are
    excluded from the group with a warning.
    """
    groups: dict[str, list[str]] = {}
    truth: dict[str, _GroundTruth] = {}
    for record, samples in dataset:
        if record.video_id != samples.video_id:
            raise ValueError(
                f"feature/annotation mismatch: {record.video_id!r} vs {samples.video_id!r}"
            )
        if samples.video_id in truth:
            raise ValueError(f"duplicate video id {samples.video_id!r}")
        empirical = compute_empirical_sur(samples, grid)
        try:
            fit = _fit_family(config.family, empirical, config.p)
        except Exception as exc:  # degenerate curves etc.
            warnings.warn(
                f"skipping video {samples.video_id!r}: reference fit failed ({exc})",
                stacklevel=2,
            )
            continue
        analytic = sample_curve(fit.model, grid, kind="analytic")
        truth[samples.video_id] = _GroundTruth(record, empirical, fit, analytic)
        groups.setdefault(record.resolution, []).append(samples.video_id)

    if not groups:
        raise TooFewItemsError("no usable videos in the dataset")

    rows: list[ReportRow] = []
    per_video: list[VideoPrediction] = []
    for resolution, ids in groups.items():
        if len(ids) < config.folds:
            raise TooFewItemsError(
                f"resolution {resolution!r} has {len(ids)} videos; "
                f"need at least {config.folds}"
            )
        folds = kfold_split(ids, config.folds, config.seed)
        fold_rows: dict[str, VideoPrediction] = {}
        for fold in range(config.folds):
            test_ids = [v for v in ids if folds.assignment[v] == fold]
            train_ids = [v for v in ids if folds.assignment[v] != fold]
            fold_rows.update(_evaluate_fold(truth, train_ids, test_ids, config, grid))
        group_rows = [fold_rows[v] for v in ids]
        per_video.extend(group_rows)
        rows.append(_mean_row(resolution, config.model_label, group_rows))

    if len(rows) > 1:
        rows.append(_mean_row("all", config.model_label, per_video))
    return PredictionReport(
        rows=tuple(rows),
        per_video=tuple(per_video),
        model=config.model_label,
        p=config.p,
        folds=config.folds,
        seed=config.seed,
    )
