"""Least-squares fitting of the model families to empirical SUR curves.

Distribution families are fitted with a damped Gauss-Newton (Levenberg-
Marquardt) loop using analytic Jacobians; scale parameters are kept positive
by optimizing their logarithms.  Polynomial families are fitted as a convex
quadratic program with the derivative constrained non-positive at every grid
level, solved exactly through its non-negative least-squares dual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import nnls

from .empirical import DEFAULT_GRID, JndSamples, SurCurve, compute_empirical_sur, empirical_p_sur
from .errors import (
    DegenerateCurveError,
    EmptyInputError,
    InvalidParamsError,
    QPInfeasibleError,
    SurkitError,
)
from .models import (
    DISTRIBUTION_FAMILIES,
    POLYNOMIAL_FAMILIES,
    ModelFamily,
    SurModel,
    analytic_p_sur,
    _evaluate_unchecked,
)

__all__ = [
    "FitResult",
    "ModelTableRow",
    "initial_guess",
    "fit_nls",
    "fit_poly_monotone",
    "fit_metrics",
    "fit_all",
    "aggregate_model_table",
]

MAX_ITERATIONS = 200
STEP_TOL = 1e-10
REL_SSE_TOL = 1e-12
LAMBDA_INIT = 1e-3
# retry from perturbed initials when the converged SSE exceeds 1e-3 per point
MULTISTART_SSE_PER_POINT = 1e-3

_NLS_FAMILIES = DISTRIBUTION_FAMILIES + (ModelFamily.LOGISTIC4,)


@dataclass(frozen=True)
class FitResult:
    """One family fitted to one video's empirical SUR curve."""

    video_id: str
    family: ModelFamily
    model: SurModel | None
    converged: bool
    iterations: int
    residual_sse: float
    mae: float
    rmse: float
    delta_p_sur_ea: float
    p: float
    error: str | None = None


@dataclass(frozen=True)
class ModelTableRow:
    family: ModelFamily
    mae: float
    rmse: float
    delta_p_sur_ea: float
    n_videos: int


# ---------------------------------------------------------------------------
# initial guesses

def _crossing(curve: SurCurve, level: float) -> float | None:
    """Linear-interpolated grid position where the curve first drops to `level`."""
    v = curve.values
    x = curve.grid.levels.astype(float)
    below = np.nonzero(v <= level)[0]
    if len(below) == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(x[0])
    drop = v[i - 1] - v[i]
    if drop <= 0.0:
        return float(x[i])
    return float(x[i - 1] + (v[i - 1] - level) / drop * (x[i] - x[i - 1]))


def _location_scale_guess(curve: SurCurve) -> tuple[float, float]:
    grid = curve.grid
    x50 = _crossing(curve, 0.5)
    x25 = _crossing(curve, 0.25)
    x75 = _crossing(curve, 0.75)
    if x50 is None or np.all(curve.values == curve.values[0]):
        # flat or never-dropping curve: fall back to grid midpoint / quarter span
        return (grid.lo + grid.hi) / 2.0, (grid.hi - grid.lo) / 4.0
    if x25 is not None and x75 is not None and x25 > x75:
        scale = (x25 - x75) / 1.349
    else:
        scale = (grid.hi - grid.lo) / 4.0
    return x50, max(scale, 0.25)


def _poly_lstsq(degree: int, curve: SurCurve) -> tuple[float, ...]:
    """Unconstrained least-squares polynomial, in raw-x coefficients."""
    grid = curve.grid
    span = float(grid.hi - grid.lo)
    t = (grid.levels - grid.lo) / span
    vand = np.vander(t, degree + 1, increasing=True)
    coef_t, *_ = np.linalg.lstsq(vand, curve.values, rcond=None)
    return _normalized_to_raw(coef_t, grid.lo, span)


def _normalized_to_raw(coef_t: np.ndarray, lo: float, span: float) -> tuple[float, ...]:
    # compose p(t) with t = (x - lo)/span to get power-basis coefficients in x
    shift = npoly.Polynomial([-lo / span, 1.0 / span])
    raw = npoly.Polynomial(coef_t)(shift)
    coef = np.zeros(len(coef_t))
    coef[: len(raw.coef)] = raw.coef
    return tuple(float(c) for c in coef)


def initial_guess(family: ModelFamily, curve: SurCurve) -> SurModel:
    """Starting parameters for a family, read off the step curve's crossings.

    The location comes from the 0.5 crossing and the scale from the
    0.25/0.75 crossing gap divided by 1.349 (the Gaussian quartile span),
    converted to each family's own scale convention.  Flat curves fall back
    to the grid midpoint and a quarter of the grid span.
    """
    if family in POLYNOMIAL_FAMILIES:
        return SurModel(family, _poly_lstsq(family.param_count - 1, curve))
    loc, sig = _location_scale_guess(curve)
    if family is ModelFamily.GAUSSIAN:
        return SurModel(family, (loc, sig))
    if family is ModelFamily.LOGISTIC2:
        return SurModel(family, (loc, sig * math.sqrt(3.0) / math.pi))
    if family is ModelFamily.LOGISTIC4:
        return SurModel(family, (0.0, 1.0, -1.0 / sig, loc))
    if family is ModelFamily.WEIBULL:
        k0 = 2.0
        lam = max(loc, 1.0) / math.log(2.0) ** (1.0 / k0)
        return SurModel(family, (lam, k0))
    if family is ModelFamily.GUMBEL:
        return SurModel(family, (loc, sig * math.sqrt(6.0) / math.pi))
    if family is ModelFamily.RAYLEIGH:
        return SurModel(family, (max(loc, 1.0) / math.sqrt(2.0 * math.log(2.0)),))
    raise AssertionError(f"unhandled family {family}")


# ---------------------------------------------------------------------------
# internal parameterization (positivity via logs) and analytic Jacobians

def _to_internal(family: ModelFamily, params: tuple[float, ...]) -> np.ndarray:
    p = np.asarray(params, dtype=float)
    if family is ModelFamily.GAUSSIAN or family is ModelFamily.GUMBEL:
        return np.array([p[0], math.log(p[1])])
    if family is ModelFamily.LOGISTIC2:
        return np.array([p[0], math.log(p[1])])
    if family is ModelFamily.LOGISTIC4:
        b, big_l, k, x0 = p
        if big_l * k > 0.0:
            raise InvalidParamsError("logistic4 init needs L*k <= 0")
        if big_l < 0.0 or (big_l == 0.0 and k > 0.0):
            # switch to the equivalent representation with L >= 0, k <= 0
            b, big_l, k = b + big_l, -big_l, -k
        big_l = max(big_l, 1e-8)
        k = min(k, -1e-8)
        return np.array([b, math.log(big_l), math.log(-k), x0])
    if family is ModelFamily.WEIBULL:
        return np.array([math.log(p[0]), math.log(p[1])])
    if family is ModelFamily.RAYLEIGH:
        return np.array([math.log(p[0])])
    raise AssertionError(f"no internal parameterization for {family}")


def _from_internal(family: ModelFamily, theta: np.ndarray) -> tuple[float, ...]:
    t = [float(v) for v in theta]
    if family in (ModelFamily.GAUSSIAN, ModelFamily.GUMBEL, ModelFamily.LOGISTIC2):
        return (t[0], math.exp(t[1]))
    if family is ModelFamily.LOGISTIC4:
        return (t[0], math.exp(t[1]), -math.exp(t[2]), t[3])
    if family is ModelFamily.WEIBULL:
        return (math.exp(t[0]), math.exp(t[1]))
    if family is ModelFamily.RAYLEIGH:
        return (math.exp(t[0]),)
    raise AssertionError(f"no internal parameterization for {family}")


def _model_and_jacobian(
    family: ModelFamily, theta: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Model values and d(value)/d(theta) columns at every x."""
    params = _from_internal(family, theta)
    f = _evaluate_unchecked(family, np.asarray(params), x)
    n = len(x)
    jac = np.empty((n, len(theta)))

    if family is ModelFamily.GAUSSIAN:
        mu, sigma = params
        z = (x - mu) / sigma
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        jac[:, 0] = phi / sigma
        jac[:, 1] = phi * z  # d/d(log sigma)
    elif family is ModelFamily.LOGISTIC2:
        mu, s = params
        z = (x - mu) / s
        w = f * (1.0 - f)  # f = expit(-z)
        jac[:, 0] = w / s
        jac[:, 1] = w * z
    elif family is ModelFamily.LOGISTIC4:
        _, big_l, k, x0 = params
        t = np.clip(k * (x - x0), -700.0, 700.0)
        w = 1.0 / (1.0 + np.exp(-t))
        dw = w * (1.0 - w)
        jac[:, 0] = 1.0
        jac[:, 1] = big_l * w  # d/d(log L)
        jac[:, 2] = big_l * dw * (x - x0) * k  # d/d(log(-k)); dk/dtheta = k
        jac[:, 3] = -big_l * dw * k
    elif family is ModelFamily.WEIBULL:
        lam, k = params
        t = np.maximum(x, 0.0) / lam
        tk = np.power(t, k)
        with np.errstate(divide="ignore"):
            logt = np.where(t > 0.0, np.log(np.maximum(t, 1e-300)), 0.0)
        jac[:, 0] = f * k * tk  # d/d(log lam)
        jac[:, 1] = -f * k * tk * logt  # d/d(log k)
    elif family is ModelFamily.GUMBEL:
        mu, beta = params
        z = (x - mu) / beta
        g = np.exp(np.clip(-z, -700.0, 700.0))
        eg = np.exp(-g)
        jac[:, 0] = eg * g / beta
        jac[:, 1] = eg * g * z
    elif family is ModelFamily.RAYLEIGH:
        (sigma,) = params
        jac[:, 0] = f * np.square(x) / (sigma * sigma)  # d/d(log sigma)
    else:
        raise AssertionError(f"no Jacobian for {family}")
    return f, jac


def _levenberg_marquardt(
    family: ModelFamily, theta0: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, float, int, bool]:
    """Damped Gauss-Newton descent; SSE never increases across accepted steps."""
    theta = theta0.copy()
    f, jac = _model_and_jacobian(family, theta, x)
    r = y - f
    sse = float(r @ r)
    lam = LAMBDA_INIT
    iterations = 0
    for _ in range(MAX_ITERATIONS):
        iterations += 1
        grad = jac.T @ r
        hess = jac.T @ jac
        diag = np.maximum(np.diag(hess), 1e-12)
        accepted = False
        while lam <= 1e14:
            try:
                delta = np.linalg.solve(hess + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            theta_new = theta + delta
            f_new, jac_new = _model_and_jacobian(family, theta_new, x)
            r_new = y - f_new
            sse_new = float(r_new @ r_new)
            if np.isfinite(sse_new) and sse_new <= sse:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no direction shrinks the SSE any further: stationary point
            return theta, sse, iterations, True
        step_norm = float(np.linalg.norm(delta))
        rel_drop = (sse - sse_new) / max(sse, 1e-300)
        theta, f, jac, r, sse = theta_new, f_new, jac_new, r_new, sse_new
        lam = max(lam / 10.0, 1e-12)
        if step_norm < STEP_TOL or rel_drop < REL_SSE_TOL:
            return theta, sse, iterations, True
    return theta, sse, iterations, False


def _perturbed_initials(family: ModelFamily, init: SurModel, span: float) -> list[SurModel]:
    p = init.params
    shift = 0.15 * span
    if family in (ModelFamily.GAUSSIAN, ModelFamily.LOGISTIC2, ModelFamily.GUMBEL):
        return [
            SurModel(family, (p[0] - shift, p[1])),
            SurModel(family, (p[0] + shift, p[1])),
            SurModel(family, (p[0], p[1] * 2.0)),
            SurModel(family, (p[0], p[1] * 0.5)),
        ]
    if family is ModelFamily.WEIBULL:
        return [
            SurModel(family, (p[0] * 1.3, p[1])),
            SurModel(family, (p[0] * 0.7, p[1])),
            SurModel(family, (p[0], p[1] * 2.0)),
            SurModel(family, (p[0], max(p[1] * 0.5, 0.2))),
        ]
    if family is ModelFamily.RAYLEIGH:
        return [SurModel(family, (p[0] * f,)) for f in (0.5, 2.0, 4.0, 0.25)]
    if family is ModelFamily.LOGISTIC4:
        return [
            SurModel(family, (p[0], p[1], p[2], p[3] - shift)),
            SurModel(family, (p[0], p[1], p[2], p[3] + shift)),
            SurModel(family, (p[0], p[1], p[2] * 2.0, p[3])),
            SurModel(family, (p[0], p[1], p[2] * 0.5, p[3])),
        ]
    raise AssertionError(f"no perturbations for {family}")


def fit_nls(
    family: ModelFamily,
    curve: SurCurve,
    init: SurModel | None = None,
    p: float = 0.75,
) -> FitResult:
    """Fit a distribution-CCDF family (or the 4-parameter logistic) to the curve.

    Minimizes the sum of squared residuals over every grid level.  If the
    first converged fit is still poor (SSE above 1e-3 per grid point) the fit
    is restarted from four deterministic perturbations of the initial guess
    and the best result is kept.
    """
    if family not in _NLS_FAMILIES:
        raise ValueError(f"fit_nls does not handle {family.label}; use fit_poly_monotone")
    if np.all(curve.values == curve.values[0]):
        raise DegenerateCurveError("flat SUR curve carries no fit information")
    if init is not None and init.family is not family:
        raise InvalidParamsError(f"init family {init.family.label} != {family.label}")

    x = curve.grid.levels.astype(float)
    y = curve.values
    start = init if init is not None else initial_guess(family, curve)

    theta, sse, iterations, converged = _levenberg_marquardt(
        family, _to_internal(family, start.params), x, y
    )
    if converged and sse > MULTISTART_SSE_PER_POINT * len(curve.grid):
        span = float(curve.grid.hi - curve.grid.lo)
        for alt in _perturbed_initials(family, start, span):
            theta_a, sse_a, it_a, conv_a = _levenberg_marquardt(
                family, _to_internal(family, alt.params), x, y
            )
            iterations += it_a
            if sse_a < sse:
                theta, sse, converged = theta_a, sse_a, conv_a

    model = SurModel(family, _from_internal(family, theta))
    mae, rmse, delta = fit_metrics(model, curve, p)
    return FitResult(
        video_id="",
        family=family,
        model=model,
        converged=converged,
        iterations=iterations,
        residual_sse=sse,
        mae=mae,
        rmse=rmse,
        delta_p_sur_ea=delta,
        p=p,
    )


# ---------------------------------------------------------------------------
# monotone polynomial fit (convex QP via its NNLS dual)

def fit_poly_monotone(degree: int, curve: SurCurve, p: float = 0.75) -> FitResult:
    """Least-squares polynomial with derivative <= 0 at every grid level.

    The constrained problem  min |Va - y|^2  s.t.  Da <= 0  is solved exactly
    through its dual: with V^T V = L L^T the dual is the non-negative least
    squares problem  min_{nu>=0} |L^-1 D^T nu - L^-1 V^T y|^2, handled by an
    active-set NNLS solver.  KKT residuals are verified to 1e-8.
    """
    if degree not in (3, 4):
        raise ValueError(f"polynomial degree must be 3 or 4, got {degree}")
    family = ModelFamily.POLYNOMIAL3 if degree == 3 else ModelFamily.POLYNOMIAL4
    grid = curve.grid
    span = float(grid.hi - grid.lo)
    t = (grid.levels - grid.lo) / span
    y = curve.values

    vand = np.vander(t, degree + 1, increasing=True)
    # derivative rows: d/dt sum a_j t^j = sum_j j a_j t^(j-1)
    deriv = np.zeros_like(vand)
    for j in range(1, degree + 1):
        deriv[:, j] = j * np.power(t, j - 1)
    # successive-difference rows: derivative<=0 at the levels alone still lets
    # the polynomial arch upward between two levels, so pin the values too
    diffs = vand[1:] - vand[:-1]
    constraints = np.vstack([deriv, diffs])

    hess = vand.T @ vand
    target = vand.T @ y
    chol = cholesky(hess, lower=True)
    a_dual = solve_triangular(chol, constraints.T, lower=True)
    b_dual = solve_triangular(chol, target, lower=True)
    nu, _ = nnls(a_dual, b_dual)

    coef_t = solve_triangular(
        chol.T, solve_triangular(chol, target - constraints.T @ nu, lower=True), lower=False
    )

    stationarity = float(np.max(np.abs(hess @ coef_t - target + constraints.T @ nu)))
    slack = constraints @ coef_t
    feasibility = float(np.max(slack, initial=0.0))
    complementarity = float(np.max(np.abs(nu * slack), initial=0.0))
    if max(stationarity, feasibility, complementarity) > 1e-8:
        raise QPInfeasibleError(
            f"monotone polynomial KKT residual too large: "
            f"stat={stationarity:.2e} feas={feasibility:.2e} comp={complementarity:.2e}"
        )

    model = SurModel(family, _normalized_to_raw(coef_t, grid.lo, span))
    fitted = _evaluate_unchecked(family, np.asarray(model.params), grid.levels.astype(float))
    assert np.all(np.diff(fitted) <= 1e-9), "fitted polynomial increases on the grid"

    resid = y - fitted
    mae, rmse, delta = fit_metrics(model, curve, p)
    return FitResult(
        video_id="",
        family=family,
        model=model,
        converged=True,
        iterations=int(np.count_nonzero(nu > 0.0)),
        residual_sse=float(resid @ resid),
        mae=mae,
        rmse=rmse,
        delta_p_sur_ea=delta,
        p=p,
    )


# ---------------------------------------------------------------------------
# metrics and batch running

def fit_metrics(model: SurModel, curve: SurCurve, p: float = 0.75) -> tuple[float, float, float]:
    """(MAE, RMSE, |empirical p%SUR - analytic p%SUR|) of a model vs a curve.

    Residuals are taken at every grid level; polynomial values enter raw,
    without clamping to [0, 1].
    """
    grid = curve.grid
    fitted = _evaluate_unchecked(model.family, np.asarray(model.params), grid.levels.astype(float))
    resid = curve.values - fitted
    mae = float(np.mean(np.abs(resid)))
    rmse = float(math.sqrt(np.mean(np.square(resid))))
    emp_level = empirical_p_sur(curve, p).level
    ana_level = analytic_p_sur(model, p, grid)
    return mae, rmse, float(abs(emp_level - ana_level))


def fit_all(
    samples: JndSamples,
    families: tuple[ModelFamily, ...] = tuple(ModelFamily),
    p: float = 0.75,
    grid=DEFAULT_GRID,
) -> list[FitResult]:
    """Fit every requested family to one video; failures become per-entry statuses."""
    curve = compute_empirical_sur(samples, grid)
    results = []
    for family in families:
        try:
            if family in POLYNOMIAL_FAMILIES:
                res = fit_poly_monotone(family.param_count - 1, curve, p)
            else:
                res = fit_nls(family, curve, p=p)
            res = replace(res, video_id=samples.video_id)
        except SurkitError as exc:
            res = FitResult(
                video_id=samples.video_id,
                family=family,
                model=None,
                converged=False,
                iterations=0,
                residual_sse=float("nan"),
                mae=float("nan"),
                rmse=float("nan"),
                delta_p_sur_ea=float("nan"),
                p=p,
                error=str(exc),
            )
        results.append(res)
    return results


def aggregate_model_table(results: list[FitResult]) -> list[ModelTableRow]:
    """Per-family arithmetic means of MAE / RMSE / delta-p%SUR over all videos.

    Rows follow the canonical family order; entries that failed to fit are
    left out of their family's mean.
    """
    if not results:
        raise EmptyInputError("no fit results to aggregate")
    by_family: dict[ModelFamily, list[FitResult]] = {}
    for res in results:
        by_family.setdefault(res.family, []).append(res)
    rows = []
    for family in ModelFamily:
        if family not in by_family:
            continue
        ok = [r for r in by_family[family] if r.error is None and math.isfinite(r.mae)]
        if not ok:
            rows.append(ModelTableRow(family, float("nan"), float("nan"), float("nan"), 0))
            continue
        rows.append(
            ModelTableRow(
                family=family,
                mae=float(np.mean([r.mae for r in ok])),
                rmse=float(np.mean([r.rmse for r in ok])),
                delta_p_sur_ea=float(np.mean([r.delta_p_sur_ea for r in ok])),
                n_videos=len(ok),
            )
        )
    return rows
